#include "ifd/expression.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <functional>

namespace ifd {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Parser {
  std::string_view text;
  std::size_t pos = 0;
  std::vector<Expression>* unused = nullptr;

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }

  bool eat(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }
};

}  // namespace

// Recursive descent:  expr := term (('+'|'-') term)*
//                     term := factor (('*'|'/') factor)*
//                   factor := ('-'|'+')* primary
//                  primary := number | 'x' | 'y' | 'pi' | func '(' expr ')' | '(' expr ')'
Expression Expression::parse(std::string_view text) {
  Expression e;
  e.text_.assign(text);
  Parser p{e.text_, 0, nullptr};
  auto& code = e.code_;

  // must be declared up front for mutual recursion
  std::function<void()> expr, term, factor, primary;

  primary = [&]() {
    p.skip_ws();
    if (p.pos >= p.text.size()) throw ExprError("unexpected end of expression", p.pos);
    const char c = p.text[p.pos];
    if (c == '(') {
      ++p.pos;
      expr();
      if (!p.eat(')')) throw ExprError("expected ')'", p.pos);
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = p.text.data() + p.pos;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) throw ExprError("malformed number", p.pos);
      p.pos += static_cast<std::size_t>(end - begin);
      code.push_back({Op::push_const, v});
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = p.pos;
      while (p.pos < p.text.size() &&
             std::isalnum(static_cast<unsigned char>(p.text[p.pos])))
        ++p.pos;
      const std::string_view word = p.text.substr(start, p.pos - start);
      if (word == "x") {
        code.push_back({Op::push_x});
        return;
      }
      if (word == "y") {
        code.push_back({Op::push_y});
        return;
      }
      if (word == "pi") {
        code.push_back({Op::push_const, kPi});
        return;
      }
      Op fn;
      if (word == "sin")
        fn = Op::sin;
      else if (word == "cos")
        fn = Op::cos;
      else if (word == "exp")
        fn = Op::exp;
      else
        throw ExprError("unknown identifier '" + std::string(word) + "'", start);
      if (!p.eat('(')) throw ExprError("expected '(' after function name", p.pos);
      expr();
      if (!p.eat(')')) throw ExprError("expected ')'", p.pos);
      code.push_back({fn});
      return;
    }
    throw ExprError(std::string("unexpected character '") + c + "'", p.pos);
  };

  factor = [&]() {
    bool negate = false;
    while (true) {
      const char c = p.peek();
      if (c == '-') {
        negate = !negate;
        ++p.pos;
      } else if (c == '+') {
        ++p.pos;
      } else {
        break;
      }
    }
    primary();
    if (negate) code.push_back({Op::neg});
  };

  term = [&]() {
    factor();
    while (true) {
      const char c = p.peek();
      if (c == '*') {
        ++p.pos;
        factor();
        code.push_back({Op::mul});
      } else if (c == '/') {
        ++p.pos;
        factor();
        code.push_back({Op::div});
      } else {
        break;
      }
    }
  };

  expr = [&]() {
    term();
    while (true) {
      const char c = p.peek();
      if (c == '+') {
        ++p.pos;
        term();
        code.push_back({Op::add});
      } else if (c == '-') {
        ++p.pos;
        term();
        code.push_back({Op::sub});
      } else {
        break;
      }
    }
  };

  expr();
  p.skip_ws();
  if (p.pos != p.text.size()) throw ExprError("trailing input", p.pos);
  if (code.empty()) throw ExprError("empty expression", 0);

  // evaluation uses a fixed-size stack; bound the depth here
  std::size_t depth = 0, max_depth = 0;
  for (const Instr& in : code) {
    switch (in.op) {
      case Op::push_const:
      case Op::push_x:
      case Op::push_y: ++depth; break;
      case Op::add:
      case Op::sub:
      case Op::mul:
      case Op::div: --depth; break;
      default: break;
    }
    max_depth = std::max(max_depth, depth);
  }
  if (max_depth > 64) throw ExprError("expression too deeply nested", 0);
  return e;
}

double Expression::operator()(double x, double y) const {
  double stack[64];
  std::size_t top = 0;
  for (const Instr& in : code_) {
    switch (in.op) {
      case Op::push_const: stack[top++] = in.value; break;
      case Op::push_x: stack[top++] = x; break;
      case Op::push_y: stack[top++] = y; break;
      case Op::add: --top; stack[top - 1] += stack[top]; break;
      case Op::sub: --top; stack[top - 1] -= stack[top]; break;
      case Op::mul: --top; stack[top - 1] *= stack[top]; break;
      case Op::div: --top; stack[top - 1] /= stack[top]; break;
      case Op::neg: stack[top - 1] = -stack[top - 1]; break;
      case Op::sin: stack[top - 1] = std::sin(stack[top - 1]); break;
      case Op::cos: stack[top - 1] = std::cos(stack[top - 1]); break;
      case Op::exp: stack[top - 1] = std::exp(stack[top - 1]); break;
    }
  }
  return stack[0];
}

}  // namespace ifd
