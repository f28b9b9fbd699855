#ifndef IFD_EXPRESSION_HPP_
#define IFD_EXPRESSION_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ifd {

class ExprError : public std::runtime_error {
 public:
  ExprError(const std::string& what, std::size_t position)
      : std::runtime_error(what + " (column " + std::to_string(position + 1) + ")"),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

// Arithmetic in x and y: +, -, *, /, parentheses, numeric literals, the
// constant pi, and sin/cos/exp. Parsed once into postfix code, evaluated per
// cell center.
class Expression {
 public:
  static Expression parse(std::string_view text);  // throws ExprError

  double operator()(double x, double y = 0.0) const;
  const std::string& text() const { return text_; }

 private:
  enum class Op : unsigned char {
    push_const, push_x, push_y, add, sub, mul, div, neg, sin, cos, exp
  };
  struct Instr {
    Op op;
    double value = 0.0;
  };

  std::string text_;
  std::vector<Instr> code_;
};

}  // namespace ifd

#endif  // IFD_EXPRESSION_HPP_
