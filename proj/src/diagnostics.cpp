#include "ifd/diagnostics.hpp"

#include <algorithm>
#include <cmath>

namespace ifd {

namespace {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 1.0;
};

LineFit least_squares(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  LineFit fit;
  if (n < 2) return fit;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (syy == 0.0) {
    fit.r2 = 1.0;  // constant data, fit is exact
  } else {
    double ss_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - (fit.intercept + fit.slope * x[i]);
      ss_res += r * r;
    }
    fit.r2 = 1.0 - ss_res / syy;
  }
  return fit;
}

}  // namespace

EdiCheck verify_edi(const Trajectory& tr, const Grid& grid, double tol_scale) {
  if (tr.times.size() < 2)
    throw std::invalid_argument("verify_edi: need at least two snapshots");
  EdiCheck check;
  const double h2 = grid.h_max() * grid.h_max();
  for (std::size_t k = 0; k + 1 < tr.times.size(); ++k) {
    const double e0 = tr.functionals[k].entropy;
    const double e1 = tr.functionals[k + 1].entropy;
    const double quad = 0.5 * (tr.times[k + 1] - tr.times[k]) *
                        (tr.functionals[k].dissipation + tr.functionals[k + 1].dissipation);
    const double residual = e0 - e1 - quad;
    const double threshold = tol_scale * (tr.max_step_dt[k + 1] + h2) * (1.0 + e0);
    check.residuals.push_back(residual);
    check.thresholds.push_back(threshold);
    check.max_abs_residual = std::max(check.max_abs_residual, std::fabs(residual));
    if (residual < -threshold && check.pass) {
      check.pass = false;
      check.first_fail = k;
    }
  }
  return check;
}

DecayFit fit_decay_rate(const Trajectory& tr, double window_lo, double window_hi) {
  DecayFit out;
  out.window_lo = window_lo;
  out.window_hi = window_hi;
  std::vector<double> t, loge;
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    const double time = tr.times[k];
    if (time < window_lo || time > window_hi) continue;
    const double e = tr.functionals[k].entropy;
    if (e <= 0.0 || e < 1e-300) {
      out.floor_time = time;
      return out;
    }
    t.push_back(time);
    loge.push_back(std::log(e));
  }
  out.points = t.size();
  if (t.size() < 2) return out;  // gamma unset: not enough samples in window
  const LineFit fit = least_squares(t, loge);
  out.gamma = -fit.slope;
  out.r2 = fit.r2;
  return out;
}

DecayFit fit_decay_rate(const Trajectory& tr) {
  if (tr.times.empty()) throw std::invalid_argument("fit_decay_rate: empty trajectory");
  const double t0 = tr.times.front();
  const double t1 = tr.times.back();
  return fit_decay_rate(tr, t0 + 0.2 * (t1 - t0), t1);
}

std::vector<double> ode_oracle(const ProblemData& data, std::span<const double> u0, double t_end,
                               double rtol) {
  const std::size_t n = data.n_species();
  if (u0.size() != n) throw std::invalid_argument("ode_oracle: u0 size mismatch");
  if (!data.constant_a())
    throw std::invalid_argument("ode_oracle: requires spatially constant A");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 1; c < data.n_cells(); ++c)
      if (data.m_at(i, c) != data.m_at(i, 0))
        throw std::invalid_argument("ode_oracle: requires spatially constant m");
  if (!(rtol > 0.0)) throw std::invalid_argument("ode_oracle: rtol must be positive");

  const Matrix& a = data.a(0);
  std::vector<double> m(n);
  for (std::size_t i = 0; i < n; ++i) m[i] = data.m_at(i, 0);

  auto rhs = [&](const std::vector<double>& y, std::vector<double>& dy) {
    for (std::size_t i = 0; i < n; ++i) {
      double au = 0.0;
      for (std::size_t j = 0; j < n; ++j) au += a(i, j) * y[j];
      dy[i] = y[i] * (m[i] - au);
    }
  };

  // Dormand-Prince 5(4) embedded pair (autonomous system, node times unused).
  static const double a21 = 1.0 / 5;
  static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                      a54 = -212.0 / 729;
  static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                      a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                      b6 = 11.0 / 84;
  static const double e1 = 5179.0 / 57600, e3 = 7571.0 / 16695, e4 = 393.0 / 640,
                      e5 = -92097.0 / 339200, e6 = 187.0 / 2100, e7 = 1.0 / 40;

  std::vector<double> y(u0.begin(), u0.end());
  std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), y5(n), y4(n);
  const double atol = rtol;
  double t = 0.0;
  double h = t_end / 100.0;
  int rejected_in_a_row = 0;
  while (t < t_end) {
    h = std::min(h, t_end - t);
    rhs(y, k1);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * a21 * k1[i];
    rhs(ytmp, k2);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
    rhs(ytmp, k3);
    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    rhs(ytmp, k4);
    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    rhs(ytmp, k5);
    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    rhs(ytmp, k6);
    for (std::size_t i = 0; i < n; ++i)
      y5[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    rhs(y5, k7);
    for (std::size_t i = 0; i < n; ++i)
      y4[i] = y[i] + h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                          e7 * k7[i]);
    double err2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double scale = atol + rtol * std::max(std::fabs(y[i]), std::fabs(y5[i]));
      const double e = (y5[i] - y4[i]) / scale;
      err2 += e * e;
    }
    const double err = std::sqrt(err2 / static_cast<double>(n));
    if (err <= 1.0) {
      t += h;
      y = y5;
      rejected_in_a_row = 0;
      for (double v : y)
        if (!std::isfinite(v) || std::fabs(v) > 1e12)
          throw std::runtime_error("ode_oracle: blow-up detected");
    } else if (++rejected_in_a_row > 200) {
      throw std::runtime_error("ode_oracle: step control failed to converge");
    }
    const double factor = 0.9 * std::pow(std::max(err, 1e-12), -0.2);
    h *= std::clamp(factor, 0.2, 5.0);
  }
  return y;
}

GradAudit grad_estimate_audit(const Trajectory& tr) {
  if (tr.times.size() < 2)
    throw std::invalid_argument("grad_estimate_audit: need at least two snapshots");
  GradAudit audit;
  const std::size_t m = tr.times.size();
  std::vector<double> cumulative(m, 0.0);
  for (std::size_t k = 1; k < m; ++k)
    cumulative[k] = cumulative[k - 1] +
                    0.5 * (tr.times[k] - tr.times[k - 1]) *
                        (tr.functionals[k - 1].grad_u_l2 + tr.functionals[k].grad_u_l2);
  audit.cumulative = cumulative.back();
  for (std::size_t k = 0; k < m; ++k)
    audit.c_fit = std::max(audit.c_fit, cumulative[k] / (1.0 + tr.times[k]));

  const double t_mid = 0.5 * (tr.times.front() + tr.times.back());
  std::vector<double> t1, c1, t2, c2;
  for (std::size_t k = 0; k < m; ++k) {
    if (tr.times[k] <= t_mid) {
      t1.push_back(tr.times[k]);
      c1.push_back(cumulative[k]);
    }
    if (tr.times[k] >= t_mid) {
      t2.push_back(tr.times[k]);
      c2.push_back(cumulative[k]);
    }
  }
  audit.slope_first_half = least_squares(t1, c1).slope;
  audit.slope_second_half = least_squares(t2, c2).slope;
  // super-linear growth shows up as an accelerating cumulative curve
  const double margin = 1e-9 * (1.0 + std::fabs(audit.slope_first_half));
  audit.pass = audit.slope_second_half <= 1.1 * audit.slope_first_half + margin;
  return audit;
}

ProbeReport extinction_instability_probe(const ProblemData& data, const Grid& grid,
                                         const ExtinctionPattern& pattern, double eta,
                                         double t_window, SolverConfig base) {
  if (eta < 0.0) throw std::invalid_argument("extinction_instability_probe: eta must be >= 0");
  if (!(t_window > 0.0))
    throw std::invalid_argument("extinction_instability_probe: window must be positive");

  ProbeReport report;
  report.reintroduced = pattern.extinct_indices();

  State u0 = partial_extinction_state(data, pattern);
  for (std::size_t i : report.reintroduced)
    for (std::size_t c = 0; c < u0.n_cells(); ++c) u0(i, c) += eta;

  const CellField f0 = fitness(data, u0);
  report.fitness_positive = !report.reintroduced.empty();
  for (std::size_t i : report.reintroduced) {
    double fmin = std::numeric_limits<double>::infinity();
    for (double v : f0.comp(i)) fmin = std::min(fmin, v);
    report.min_fitness.push_back(fmin);
    if (!(fmin > 0.0)) report.fitness_positive = false;
  }

  base.t_end = t_window;
  // adaptive stepping resolves the window on its own; thin the snapshots so
  // long probes do not hold every state in memory
  base.snapshot_stride = std::max<std::size_t>(base.snapshot_stride, 1024);
  const Trajectory tr = run(data, grid, u0, base);
  report.times = tr.times;

  report.mass_increasing = !report.reintroduced.empty();
  for (std::size_t i : report.reintroduced) {
    std::vector<double> mass(tr.times.size());
    for (std::size_t k = 0; k < tr.times.size(); ++k) mass[k] = tr.functionals[k].masses[i];
    for (std::size_t k = 0; k + 1 < mass.size(); ++k)
      if (!(mass[k + 1] > mass[k])) report.mass_increasing = false;
    report.masses.push_back(std::move(mass));
  }
  return report;
}

double state_l2_diff(const Grid& grid, const State& a, const State& b) {
  if (a.n_comp() != b.n_comp() || a.n_cells() != b.n_cells() || a.n_cells() != grid.n_cells())
    throw std::invalid_argument("state_l2_diff: dimension mismatch");
  double total = 0.0;
  for (std::size_t k = 0; k < a.n_comp(); ++k) {
    const auto av = a.comp(k);
    const auto bv = b.comp(k);
    total += grid.cell_volume() * pairwise_sum(a.n_cells(), [&](std::size_t c) {
               const double d = av[c] - bv[c];
               return d * d;
             });
  }
  return std::sqrt(total);
}

RefinementTable refinement_study(const ProblemData& data, const Grid& grid, const State& u0,
                                 const SolverConfig& base, const std::string& parameter,
                                 std::span<const double> values) {
  if (values.size() < 3)
    throw std::invalid_argument("refinement_study: need at least three levels");
  RefinementTable table;
  table.parameter = parameter;
  table.values.assign(values.begin(), values.end());

  std::vector<State> finals;
  for (double v : values) {
    SolverConfig cfg = base;
    if (parameter == "dt")
      cfg.dt = v;
    else if (parameter == "delta")
      cfg.delta = v;
    else if (parameter == "M")
      cfg.truncation_m = v;
    else
      throw std::invalid_argument("refinement_study: unknown parameter '" + parameter + "'");
    finals.push_back(run(data, grid, u0, cfg).states.back());
  }

  for (std::size_t k = 0; k + 1 < finals.size(); ++k)
    table.diffs.push_back(state_l2_diff(grid, finals[k], finals[k + 1]));
  for (std::size_t k = 0; k + 1 < table.diffs.size(); ++k) {
    const double d0 = table.diffs[k];
    const double d1 = table.diffs[k + 1];
    const double r = std::fabs(std::log(values[k] / values[k + 1]));
    if (d0 > 0.0 && d1 > 0.0 && r > 0.0)
      table.orders.push_back(std::log(d0 / d1) / r);
    else
      table.orders.push_back(std::numeric_limits<double>::quiet_NaN());
    if (d1 > d0 * (1.0 + 1e-12)) table.monotone = false;
  }
  return table;
}

std::optional<double> beckner_sup(const Trajectory& tr) {
  std::optional<double> sup;
  for (const FunctionalValues& v : tr.functionals) {
    const double floor = 1e-14 * (1.0 + v.fitness_l2);
    if (v.dissipation <= floor) continue;
    const double ratio = v.fitness_l2 / v.dissipation;
    if (!sup || ratio > *sup) sup = ratio;
  }
  return sup;
}

}  // namespace ifd
