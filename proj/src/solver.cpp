#include "ifd/solver.hpp"

#include <algorithm>
#include <cmath>

namespace ifd {

namespace {

std::uint64_t fnv1a64(const void* bytes, std::size_t len, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

// Decomposed explicit-update rates. The positivity part (advective donor-cell
// out-rate, negative fitness, delta diffusion) guards u' >= 0; the cross part
// is the parabolic von-Neumann rate of the effective diffusion div(u A grad w)
// hidden in -div(u grad f), without which explicit stepping rings at the
// odd-even mode.
struct Rates {
  double advective = 0.0;
  double reaction = 0.0;
  double delta = 0.0;
  double cross = 0.0;
  double positivity() const { return advective + reaction + delta; }
  double total() const { return positivity() + cross; }
};

struct Workspace {
  CellField f;
  FaceField velocity;
  FaceField flux;
  CellField reaction;  // realized reaction rate, kept for the mass audit

  void resize(const Grid& g, std::size_t n) {
    if (f.n_comp() != n || f.n_cells() != g.n_cells()) {
      f = CellField(n, g.n_cells());
      velocity = FaceField(g, n);
      flux = FaceField(g, n);
      reaction = CellField(n, g.n_cells());
    }
  }
};

struct ScanResult {
  Rates rates;
  double max_flux_abs = 0.0;      // largest |advective face flux|
  double max_reaction_abs = 0.0;  // largest |min(u,M) f|
  double max_du_abs = 0.0;        // largest |u_R - u_L| over faces
};

// Fills ws.f/ws.velocity/ws.flux and collects every maximum the stability
// bound needs, in one fixed iteration order.
ScanResult scan(const ProblemData& data, const Grid& grid, const State& u,
                const SolverConfig& config, Workspace& ws) {
  const std::size_t n = data.n_species();
  const std::size_t cells = grid.n_cells();
  const std::size_t nx = grid.nx();
  const std::size_t ny = grid.ny();
  const double m_cap = config.truncation_m;
  const double inv_hx = 1.0 / grid.hx();
  const double inv_hy = 1.0 / grid.hy();
  const std::size_t a_stride = data.constant_a() ? 0 : 1;
  ScanResult out;

  double u_tilde_max = 0.0;
  const double* u_ptr[32];
  for (std::size_t j = 0; j < n; ++j) u_ptr[j] = u.comp(j).data();
  for (std::size_t k = 0; k < n; ++k) {
    const double* uc = u_ptr[k];
    double* fc = ws.f.comp(k).data();
    const double* mc = data.m().comp(k).data();
    for (std::size_t c = 0; c < cells; ++c) {
      const double* arow = data.a(c * a_stride).data().data() + k * n;
      double au = 0.0;
      for (std::size_t j = 0; j < n; ++j) au += arow[j] * u_ptr[j][c];
      const double fv = mc[c] - au;
      fc[c] = fv;
      out.rates.reaction = std::max(out.rates.reaction, -fv);
      const double ut = std::min(uc[c], m_cap);
      u_tilde_max = std::max(u_tilde_max, ut);
      out.max_reaction_abs = std::max(out.max_reaction_abs, std::fabs(ut * fv));
    }
  }

  for (std::size_t k = 0; k < n; ++k) {
    const double* uc = u.comp(k).data();
    const double* fc = ws.f.comp(k).data();
    double* vx = ws.velocity.comp_x(k).data();
    double* gx = ws.flux.comp_x(k).data();
    double vmax_x = 0.0;
    for (std::size_t iy = 0; iy < ny; ++iy) {
      const std::size_t row = iy * nx;
      const std::size_t frow = iy * (nx - 1);
      for (std::size_t ix = 0; ix + 1 < nx; ++ix) {
        const std::size_t left = row + ix;
        const double v = (fc[left + 1] - fc[left]) * inv_hx;
        vx[frow + ix] = v;
        vmax_x = std::max(vmax_x, std::fabs(v));
        const double donor = v > 0.0 ? uc[left] : uc[left + 1];
        const double flux = v * std::min(donor, m_cap);
        gx[frow + ix] = flux;
        out.max_flux_abs = std::max(out.max_flux_abs, std::fabs(flux));
        out.max_du_abs = std::max(out.max_du_abs, std::fabs(uc[left + 1] - uc[left]));
      }
    }
    double rate_k = 2.0 * vmax_x * inv_hx;
    if (grid.dim() == 2) {
      double* vy = ws.velocity.comp_y(k).data();
      double* gy = ws.flux.comp_y(k).data();
      double vmax_y = 0.0;
      for (std::size_t iy = 0; iy + 1 < ny; ++iy) {
        for (std::size_t ix = 0; ix < nx; ++ix) {
          const std::size_t south = iy * nx + ix;
          const double v = (fc[south + nx] - fc[south]) * inv_hy;
          vy[south] = v;
          vmax_y = std::max(vmax_y, std::fabs(v));
          const double donor = v > 0.0 ? uc[south] : uc[south + nx];
          const double flux = v * std::min(donor, m_cap);
          gy[south] = flux;
          out.max_flux_abs = std::max(out.max_flux_abs, std::fabs(flux));
          out.max_du_abs = std::max(out.max_du_abs, std::fabs(uc[south + nx] - uc[south]));
        }
      }
      rate_k += 2.0 * vmax_y * inv_hy;
    }
    out.rates.advective = std::max(out.rates.advective, rate_k);
  }

  double inv_h2 = inv_hx * inv_hx;
  if (grid.dim() == 2) inv_h2 += inv_hy * inv_hy;
  if (config.delta > 0.0) out.rates.delta = 2.0 * config.delta * inv_h2;
  out.rates.cross = 2.0 * data.lambda_max() * u_tilde_max * inv_h2;
  return out;
}

// One explicit update of size dt from pre-scanned fields.
void apply_update(const ProblemData& data, const Grid& grid, const State& u,
                  const SolverConfig& config, Workspace& ws, double dt, State& next) {
  const std::size_t n = data.n_species();
  const std::size_t nx = grid.nx();
  const std::size_t ny = grid.ny();
  const double m_cap = config.truncation_m;
  const double inv_hx = 1.0 / grid.hx();
  const double inv_hy = 1.0 / grid.hy();
  const bool patankar = config.reaction_scheme == ReactionScheme::patankar;
  const bool diffuse = config.delta > 0.0;
  const bool two_d = grid.dim() == 2;

  for (std::size_t k = 0; k < n; ++k) {
    const double* uc = u.comp(k).data();
    const double* fc = ws.f.comp(k).data();
    const double* gx = ws.flux.comp_x(k).data();
    const double* gy = two_d ? ws.flux.comp_y(k).data() : nullptr;
    double* nextc = next.comp(k).data();
    double* reac = ws.reaction.comp(k).data();
    for (std::size_t iy = 0; iy < ny; ++iy) {
      const std::size_t frow = iy * (nx - 1);
      for (std::size_t ix = 0; ix < nx; ++ix) {
        const std::size_t c = iy * nx + ix;
        const double east = ix + 1 < nx ? gx[frow + ix] : 0.0;
        const double west = ix > 0 ? gx[frow + ix - 1] : 0.0;
        double rhs = -(east - west) * inv_hx;
        if (two_d) {
          const double north = iy + 1 < ny ? gy[c] : 0.0;
          const double south = iy > 0 ? gy[c - nx] : 0.0;
          rhs -= (north - south) * inv_hy;
        }
        if (diffuse) {
          const double ge = ix + 1 < nx ? (uc[c + 1] - uc[c]) * inv_hx : 0.0;
          const double gw = ix > 0 ? (uc[c] - uc[c - 1]) * inv_hx : 0.0;
          double lap = (ge - gw) * inv_hx;
          if (two_d) {
            const double gn = iy + 1 < ny ? (uc[c + nx] - uc[c]) * inv_hy : 0.0;
            const double gs = iy > 0 ? (uc[c] - uc[c - nx]) * inv_hy : 0.0;
            lap += (gn - gs) * inv_hy;
          }
          rhs += config.delta * lap;
        }
        const double uv = uc[c];
        const double ut = std::min(uv, m_cap);
        const double fv = fc[c];
        double out_v;
        double realized;
        if (patankar) {
          const double production = ut * std::max(fv, 0.0);
          // destruction per unit density; min(u,M)/u <= 1, continuously
          // extended to 1 at u = 0
          const double rate = std::max(-fv, 0.0) * (uv > ut ? ut / uv : 1.0);
          out_v = (uv + dt * (rhs + production)) / (1.0 + dt * rate);
          realized = production - out_v * rate;
        } else {
          realized = ut * fv;
          out_v = uv + dt * (rhs + realized);
        }
        nextc[c] = out_v;
        reac[c] = realized;
      }
    }
  }
}

void check_state(const ProblemData& data, const Grid& grid, const State& u, double t_now) {
  if (u.n_comp() != data.n_species() || u.n_cells() != data.n_cells() ||
      grid.n_cells() != data.n_cells())
    throw std::invalid_argument("step: state/grid/problem dimension mismatch");
  if (!u.finite()) throw SolverError("step: non-finite state", t_now);
  if (u.min_value() < 0.0) throw SolverError("step: negative density on entry", t_now);
}

double audit_residual(const Grid& grid, const State& u, const State& next,
                      const CellField& reaction, double dt) {
  double worst = 0.0;
  for (std::size_t k = 0; k < u.n_comp(); ++k) {
    const double mass0 = grid.cell_volume() * pairwise_sum(u.comp(k));
    const double mass1 = grid.cell_volume() * pairwise_sum(next.comp(k));
    const double gain = grid.cell_volume() * pairwise_sum(reaction.comp(k));
    const double residual = std::fabs(mass1 - mass0 - dt * gain);
    worst = std::max(worst, residual / (1.0 + std::fabs(mass0) + std::fabs(mass1)));
  }
  return worst;
}

}  // namespace

std::uint64_t SolverConfig::fingerprint() const {
  const double fields[7] = {dt.value_or(-1.0),
                            t_end,
                            cfl_safety,
                            delta,
                            truncation_m,
                            static_cast<double>(reaction_scheme == ReactionScheme::patankar),
                            static_cast<double>(snapshot_stride)};
  return fnv1a64(fields, sizeof(fields), 0xcbf29ce484222325ull);
}

double stability_bound(const ProblemData& data, const Grid& grid, const State& u,
                       const SolverConfig& config) {
  check_state(data, grid, u, 0.0);
  Workspace ws;
  ws.resize(grid, data.n_species());
  const ScanResult scanned = scan(data, grid, u, config, ws);
  const double rate = scanned.rates.total();
  if (rate == 0.0) return std::numeric_limits<double>::infinity();
  return config.cfl_safety / rate;
}

State step(const ProblemData& data, const Grid& grid, const State& u, const SolverConfig& config,
           double dt) {
  check_state(data, grid, u, 0.0);
  if (!(dt > 0.0) || !std::isfinite(dt)) throw SolverError("step: invalid dt", 0.0);
  Workspace ws;
  ws.resize(grid, data.n_species());
  scan(data, grid, u, config, ws);
  State next(data.n_species(), data.n_cells());
  apply_update(data, grid, u, config, ws, dt, next);
  if (!next.finite()) throw SolverError("step: non-finite update", 0.0);
  return next;
}

State step(const ProblemData& data, const Grid& grid, const State& u,
           const SolverConfig& config) {
  check_state(data, grid, u, 0.0);
  Workspace ws;
  ws.resize(grid, data.n_species());
  const ScanResult scanned = scan(data, grid, u, config, ws);
  double dt;
  if (config.dt) {
    dt = *config.dt;
    const double pos_rate = scanned.rates.positivity();
    if (pos_rate > 0.0 && dt > config.cfl_safety / pos_rate)
      throw SolverError("step: fixed dt exceeds the positivity bound", 0.0);
  } else {
    const double rate = scanned.rates.total();
    dt = rate > 0.0 ? config.cfl_safety / rate : config.t_end;
  }
  State next(data.n_species(), data.n_cells());
  apply_update(data, grid, u, config, ws, dt, next);
  if (!next.finite()) throw SolverError("step: non-finite update", 0.0);
  return next;
}

Trajectory run(const ProblemData& data, const Grid& grid, const State& u0,
               const SolverConfig& config) {
  if (!(config.t_end > 0.0)) throw std::invalid_argument("run: t_end must be positive");
  if (!(config.cfl_safety > 0.0) || config.cfl_safety > 1.0)
    throw std::invalid_argument("run: cfl_safety must lie in (0, 1]");
  if (config.delta < 0.0) throw std::invalid_argument("run: delta must be >= 0");
  if (!(config.truncation_m > 0.0)) throw std::invalid_argument("run: truncation_m must be > 0");
  if (config.snapshot_stride == 0) throw std::invalid_argument("run: snapshot_stride must be > 0");
  if (config.dt && !(*config.dt > 0.0)) throw std::invalid_argument("run: dt must be positive");
  check_state(data, grid, u0, 0.0);

  Trajectory tr;
  tr.config_fingerprint = config.fingerprint();
  tr.data_fingerprint = data.fingerprint();

  const CellField u_inf = ideal_free_distribution(data);
  State u = u0;
  State next(u0.n_comp(), u0.n_cells());
  Workspace ws;
  ws.resize(grid, data.n_species());

  double t = 0.0;
  double pending_max_dt = 0.0;
  auto record = [&](double time, const State& state) {
    tr.times.push_back(time);
    tr.states.push_back(state);
    tr.functionals.push_back(evaluate_functionals(data, grid, state, u_inf));
    tr.max_step_dt.push_back(pending_max_dt);
    pending_max_dt = 0.0;
  };
  record(0.0, u);

  double mass_residual = 0.0;
  std::size_t step_index = 0;
  // relative slack so the final clamped step is not rejected by roundoff
  const double t_eps = 4.0 * std::numeric_limits<double>::epsilon() * config.t_end;
  while (t < config.t_end - t_eps) {
    const double remaining = config.t_end - t;
    const ScanResult scanned = scan(data, grid, u, config, ws);

    // Bitwise-stationary state: the update is u' = u for any dt, so jump to
    // the final time in a single step.
    const bool stationary = scanned.max_flux_abs == 0.0 && scanned.max_reaction_abs == 0.0 &&
                            (config.delta == 0.0 || scanned.max_du_abs == 0.0);
    double dt;
    if (stationary) {
      dt = remaining;
    } else if (config.dt) {
      dt = std::min(*config.dt, remaining);
      // The hard requirement on a user-fixed dt is positivity of the update;
      // resolving stiffness is the caller's choice.
      const double pos_rate = scanned.rates.positivity();
      if (pos_rate > 0.0 && dt > config.cfl_safety / pos_rate)
        throw SolverError("run: fixed dt " + std::to_string(dt) +
                              " exceeds the positivity bound " +
                              std::to_string(config.cfl_safety / pos_rate),
                          t);
    } else {
      const double rate = scanned.rates.total();
      dt = rate > 0.0 ? std::min(config.cfl_safety / rate, remaining) : remaining;
    }

    if (stationary) {
      next = u;
    } else {
      apply_update(data, grid, u, config, ws, dt, next);
      if (!next.finite()) throw SolverError("run: non-finite update", t);
      if (config.audit_mass)
        mass_residual = std::max(mass_residual, audit_residual(grid, u, next, ws.reaction, dt));
    }
    std::swap(u, next);
    t += dt;
    ++step_index;
    pending_max_dt = std::max(pending_max_dt, dt);
    const bool final_step = !(t < config.t_end - t_eps);
    if (final_step) t = config.t_end;
    if (final_step || step_index % config.snapshot_stride == 0) record(t, u);
  }
  if (tr.times.size() == 1) record(config.t_end, u);
  tr.max_mass_residual = mass_residual;
  return tr;
}

}  // namespace ifd
