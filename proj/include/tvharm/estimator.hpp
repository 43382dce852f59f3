#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tvharm/model.hpp"

namespace tvharm {

/// Controls for one fit: initialization, staged warmup, solver tolerances.
struct FitOptions {
  enum class InitStrategy { provided, autocorrelation };

  InitStrategy init_strategy = InitStrategy::provided;
  double init_f0 = 0.0; // cycles/sample, required for InitStrategy::provided

  bool stage_warmup = true;  // first L_phi iterations update one coefficient each
  bool joint_polish = true;  // projected-cost refinement after the stop rule fires

  double gradient_tol = 1e-11;
  double tr_radius_min = 1e-15;
  int phase_tr_iters = 80;
  int polish_iters = 60;

  // Autocorrelation search band (normalized). Zeros mean "derive from config".
  double search_f_lo = 0.0;
  double search_f_hi = 0.0;
  double voicing_threshold = 0.3;
};

/// Least squares criterion G = 1/2 sum (s_hat_n - x_n)^2.
inline double cost(const Eigen::VectorXd& x, const PhaseParams& phase,
                   const AmplitudeParams& amps) {
  const Eigen::VectorXd e = synthesize(phase, amps, static_cast<int>(x.size())) - x;
  return 0.5 * e.squaredNorm();
}

inline double cost(const WindowedFrame& frame, const PhaseParams& phase,
                   const AmplitudeParams& amps) {
  return cost(frame.samples, phase, amps);
}

/// Linear synthesis operator for fixed phase parameters.
///
/// Column blocks [M | H_1 M | ... | H_L M] with M = [1/2 | C | S] follow the
/// amplitude coefficient layout, so synthesize(phase, theta) == A * theta.
struct DesignMatrix {
  Eigen::MatrixXd A;
  int harmonics = 0;
  int degree = 0;
};

inline DesignMatrix build_design_matrix(const PhaseParams& phase, const ModelConfig& config,
                                        int n_samples) {
  const int P = config.harmonics;
  const int L = config.amp_degree;
  const int block = 2 * P + 1;
  const Eigen::VectorXd phi = common_phase_track(phase, n_samples);

  Eigen::MatrixXd M(n_samples, block);
  for (int n = 0; n < n_samples; ++n) {
    M(n, 0) = 0.5;
    const double c1 = std::cos(phi[n]);
    const double s1 = std::sin(phi[n]);
    double cp = 1.0, sp = 0.0;
    for (int p = 1; p <= P; ++p) {
      const double cnext = cp * c1 - sp * s1;
      const double snext = sp * c1 + cp * s1;
      cp = cnext;
      sp = snext;
      M(n, p) = cp;
      M(n, P + p) = sp;
    }
  }

  DesignMatrix out;
  out.harmonics = P;
  out.degree = L;
  out.A.resize(n_samples, block * (L + 1));
  out.A.leftCols(block) = M;
  for (int ell = 1; ell <= L; ++ell) {
    const Eigen::VectorXd h = basis_column(ell, n_samples);
    out.A.middleCols(ell * block, block) = h.asDiagonal() * M;
  }
  return out;
}

struct AmplitudeSolve {
  AmplitudeParams params;
  Eigen::Index rank = 0;
  bool rank_deficient = false;
};

namespace detail {

/// Rank-revealing pseudo-inverse solve; singular directions are dropped at
/// the N*eps relative cutoff instead of blowing up.
struct AmpWorkspace {
  Eigen::MatrixXd A;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
  Eigen::Index rank = 0;

  void factor(const PhaseParams& phase, const ModelConfig& config, int n_samples) {
    A = build_design_matrix(phase, config, n_samples).A;
    cod.setThreshold(static_cast<double>(n_samples) * std::numeric_limits<double>::epsilon());
    cod.compute(A);
    rank = cod.rank();
  }

  AmplitudeParams solve(const Eigen::VectorXd& x, const ModelConfig& config) const {
    AmplitudeParams out;
    out.harmonics = config.harmonics;
    out.degree = config.amp_degree;
    out.coeffs = cod.solve(x);
    return out;
  }
};

}  // namespace detail

/// Unconstrained minimizer of G over the amplitude parameters, theta = A^+ x.
inline AmplitudeSolve solve_amplitudes(const Eigen::VectorXd& x, const PhaseParams& phase,
                                       const ModelConfig& config) {
  const int n = static_cast<int>(x.size());
  if (n < config.amp_param_count())
    throw std::invalid_argument("solve_amplitudes: fewer samples than amplitude parameters");
  detail::AmpWorkspace ws;
  ws.factor(phase, config, n);
  AmplitudeSolve out;
  out.params = ws.solve(x, config);
  out.rank = ws.rank;
  out.rank_deficient = ws.rank < ws.A.cols();
  return out;
}

inline AmplitudeSolve solve_amplitudes(const WindowedFrame& frame, const PhaseParams& phase,
                                       const ModelConfig& config) {
  return solve_amplitudes(frame.samples, phase, config);
}

/// Snapshot of the phase subproblem at the current parameters: residual,
/// the first/second derivative tracks of s_hat w.r.t. the common phase,
/// and the resulting Jacobian/Hessian of G.
struct PhaseSolverState {
  PhaseParams phase;
  Eigen::VectorXd residual; // e_n = s_hat_n - x_n
  Eigen::VectorXd c1;       // d s_hat / d phi at sample n
  Eigen::VectorXd c2;       // d^2 s_hat / d phi^2 at sample n
  Eigen::VectorXd jacobian;
  Eigen::MatrixXd hessian;
  double cost = 0.0;
};

inline PhaseSolverState make_phase_state(const Eigen::VectorXd& x, const PhaseParams& phase,
                                         const AmplitudeParams& amps) {
  const int N = static_cast<int>(x.size());
  const int P = amps.harmonics;
  const Eigen::VectorXd phi = common_phase_track(phase, N);
  const AmpTracks tr = amplitude_tracks(amps, N);

  PhaseSolverState st;
  st.phase = phase;
  st.residual.resize(N);
  st.c1 = Eigen::VectorXd::Zero(N);
  st.c2 = Eigen::VectorXd::Zero(N);
  for (int n = 0; n < N; ++n) {
    const double c1n = std::cos(phi[n]);
    const double s1n = std::sin(phi[n]);
    double cp = 1.0, sp = 0.0;
    double s_acc = 0.5 * tr.a(0, n);
    double d1 = 0.0, d2 = 0.0;
    for (int p = 1; p <= P; ++p) {
      const double cnext = cp * c1n - sp * s1n;
      const double snext = sp * c1n + cp * s1n;
      cp = cnext;
      sp = snext;
      const double ap = tr.a(p, n);
      const double bp = tr.b(p - 1, n);
      s_acc += ap * cp + bp * sp;
      d1 += p * (-ap * sp + bp * cp);
      d2 -= static_cast<double>(p) * p * (ap * cp + bp * sp);
    }
    st.residual[n] = s_acc - x[n];
    st.c1[n] = d1;
    st.c2[n] = d2;
  }
  st.cost = 0.5 * st.residual.squaredNorm();

  const int lphi = phase.degree();
  st.jacobian.resize(lphi);
  st.hessian.resize(lphi, lphi);
  const Eigen::VectorXd w = st.c1.array().square().matrix() +
                            st.residual.cwiseProduct(st.c2);
  std::vector<Eigen::VectorXd> h(lphi);
  for (int ell = 1; ell <= lphi; ++ell) h[ell - 1] = basis_column(ell, N);
  for (int ell = 0; ell < lphi; ++ell) {
    st.jacobian[ell] = st.residual.cwiseProduct(st.c1).dot(h[ell]);
    for (int j = ell; j < lphi; ++j) {
      const double v = w.cwiseProduct(h[ell]).dot(h[j]);
      st.hessian(ell, j) = v;
      st.hessian(j, ell) = v;
    }
  }
  return st;
}

inline Eigen::VectorXd phase_jacobian(const PhaseSolverState& state) { return state.jacobian; }
inline Eigen::MatrixXd phase_hessian(const PhaseSolverState& state) { return state.hessian; }

namespace detail {

/// Exact trust-region subproblem via eigendecomposition, including the hard
/// case. Dimensions here are tiny (L_phi), so robustness beats speed.
inline Eigen::VectorXd tr_subproblem(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                                     double radius) {
  const int n = static_cast<int>(g.size());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  const Eigen::VectorXd w = es.eigenvalues();
  const Eigen::MatrixXd V = es.eigenvectors();
  const Eigen::VectorXd gt = V.transpose() * g;

  auto step_norm = [&](double lam) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = w[i] + lam;
      if (d > 0.0) s += (gt[i] / d) * (gt[i] / d);
    }
    return std::sqrt(s);
  };
  auto build = [&](double lam) {
    Eigen::VectorXd u(n);
    for (int i = 0; i < n; ++i) {
      const double d = w[i] + lam;
      u[i] = d > 0.0 ? -gt[i] / d : 0.0;
    }
    return Eigen::VectorXd(V * u);
  };

  const double wmin = w.minCoeff();
  if (wmin > 0.0) {
    if (step_norm(0.0) <= radius) return build(0.0); // interior Newton step
  }

  double lam_lo = std::max(0.0, -wmin);
  if (step_norm(lam_lo + 1e-300) >= radius || lam_lo == 0.0) {
    // boundary solution: bracket lambda with ||d(lambda)|| = radius
    double lo = lam_lo;
    double hi = std::max(1.0, lam_lo + std::abs(wmin) + g.norm() / std::max(radius, 1e-300));
    while (step_norm(hi) > radius) hi *= 4.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (step_norm(mid) > radius)
        lo = mid;
      else
        hi = mid;
      if (hi - lo <= 1e-14 * (1.0 + hi)) break;
    }
    return build(hi);
  }

  // hard case: gradient orthogonal to the lowest eigenspace
  Eigen::VectorXd d = build(lam_lo);
  int imin = 0;
  w.minCoeff(&imin);
  const double dn = d.norm();
  const double tau = std::sqrt(std::max(0.0, radius * radius - dn * dn));
  return d + tau * V.col(imin);
}

/// Linear feasibility machinery for the phase subproblem. The f0 track (and
/// its rate) is linear in the phase coefficients at every sample, so bounds
/// over the window form a polytope.
struct PhaseConstraints {
  Eigen::MatrixXd f0_basis;    // N x L_phi rows: d f0_n / d phi
  Eigen::MatrixXd f0dot_basis; // N x L_phi, empty when no rate bound
  double f0_min = 0.0;
  double f0_max = 0.5;
  std::optional<double> f0dot_max;

  static PhaseConstraints make(const ModelConfig& config, int n_samples, int lphi) {
    PhaseConstraints c;
    c.f0_min = config.f0_min;
    c.f0_max = config.f0_upper();
    c.f0dot_max = config.f0dot_max;
    const double scale = 1.0 / (2.0 * M_PI);
    c.f0_basis.resize(n_samples, lphi);
    for (int ell = 1; ell <= lphi; ++ell)
      c.f0_basis.col(ell - 1) = scale * basis_column(ell - 1, n_samples);
    if (c.f0dot_max) {
      c.f0dot_basis = Eigen::MatrixXd::Zero(n_samples, lphi);
      for (int ell = 2; ell <= lphi; ++ell)
        c.f0dot_basis.col(ell - 1) = scale * basis_column(ell - 2, n_samples);
    }
    return c;
  }

  bool feasible(const Eigen::VectorXd& phi, double tol) const {
    const Eigen::VectorXd f = f0_basis * phi;
    if (f.minCoeff() < f0_min - tol || f.maxCoeff() > f0_max + tol) return false;
    if (f0dot_max) {
      const Eigen::VectorXd fd = f0dot_basis * phi;
      if (fd.cwiseAbs().maxCoeff() > *f0dot_max + tol) return false;
    }
    return true;
  }

  /// Largest alpha in [0,1] keeping phi + alpha*d feasible (exact ray clip).
  double max_step(const Eigen::VectorXd& phi, const Eigen::VectorXd& d) const {
    double alpha = 1.0;
    const Eigen::VectorXd f = f0_basis * phi;
    const Eigen::VectorXd df = f0_basis * d;
    for (int n = 0; n < f.size(); ++n) {
      if (df[n] > 0.0 && f[n] + df[n] > f0_max)
        alpha = std::min(alpha, (f0_max - f[n]) / df[n]);
      else if (df[n] < 0.0 && f[n] + df[n] < f0_min)
        alpha = std::min(alpha, (f0_min - f[n]) / df[n]);
    }
    if (f0dot_max) {
      const Eigen::VectorXd fd = f0dot_basis * phi;
      const Eigen::VectorXd dfd = f0dot_basis * d;
      for (int n = 0; n < fd.size(); ++n) {
        if (dfd[n] > 0.0 && fd[n] + dfd[n] > *f0dot_max)
          alpha = std::min(alpha, (*f0dot_max - fd[n]) / dfd[n]);
        else if (dfd[n] < 0.0 && fd[n] + dfd[n] < -*f0dot_max)
          alpha = std::min(alpha, (-*f0dot_max - fd[n]) / dfd[n]);
      }
    }
    return std::clamp(alpha, 0.0, 1.0);
  }

  /// Outward normals (w.r.t. the free coordinates) of constraints active at
  /// phi, deduplicated by direction.
  std::vector<Eigen::VectorXd> active_normals(const Eigen::VectorXd& phi,
                                              const std::vector<int>& free_idx,
                                              double tol) const {
    std::vector<Eigen::VectorXd> normals;
    auto push_unique = [&](Eigen::VectorXd v) {
      const double nrm = v.norm();
      if (nrm < 1e-300) return;
      v /= nrm;
      for (const auto& u : normals)
        if (std::abs(u.dot(v)) > 1.0 - 1e-9) return;
      normals.push_back(std::move(v));
    };
    auto reduce = [&](const Eigen::RowVectorXd& row) {
      Eigen::VectorXd v(free_idx.size());
      for (size_t i = 0; i < free_idx.size(); ++i) v[i] = row[free_idx[i]];
      return v;
    };
    const Eigen::VectorXd f = f0_basis * phi;
    for (int n = 0; n < f.size(); ++n) {
      if (f0_max - f[n] <= tol) push_unique(reduce(f0_basis.row(n)));
      if (f[n] - f0_min <= tol) push_unique(reduce(-f0_basis.row(n)));
    }
    if (f0dot_max) {
      const Eigen::VectorXd fd = f0dot_basis * phi;
      for (int n = 0; n < fd.size(); ++n) {
        if (*f0dot_max - fd[n] <= tol) push_unique(reduce(f0dot_basis.row(n)));
        if (fd[n] + *f0dot_max <= tol) push_unique(reduce(-f0dot_basis.row(n)));
      }
    }
    return normals;
  }
};

}  // namespace detail

struct PhaseSolveResult {
  PhaseParams phase;
  double cost = 0.0;
  int iters = 0;
  bool converged = false;
};

/// Minimizes G over the phase parameters with the amplitudes frozen, subject
/// to the f0 (and optional f0-rate) bounds. Newton trust region with exact
/// derivatives; infeasible steps are clipped back to the polytope and motion
/// continues within the active face when a bound binds.
inline PhaseSolveResult solve_phase(const Eigen::VectorXd& x, const AmplitudeParams& amps,
                                    const ModelConfig& config, const PhaseParams& init,
                                    const FitOptions& opts = {},
                                    const std::vector<int>* free_coords = nullptr) {
  const int N = static_cast<int>(x.size());
  const int lphi = init.degree();
  const auto cons = detail::PhaseConstraints::make(config, N, lphi);
  const double feas_tol = 1e-9;
  if (!cons.feasible(init.phi, feas_tol))
    throw std::invalid_argument("solve_phase: infeasible initial phase parameters");

  std::vector<int> free_idx;
  if (free_coords)
    free_idx = *free_coords;
  else
    for (int i = 0; i < lphi; ++i) free_idx.push_back(i);
  const int nfree = static_cast<int>(free_idx.size());

  auto expand = [&](const Eigen::VectorXd& d_free) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(lphi);
    for (int i = 0; i < nfree; ++i) d[free_idx[i]] = d_free[i];
    return d;
  };
  auto restrict_vec = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd r(nfree);
    for (int i = 0; i < nfree; ++i) r[i] = v[free_idx[i]];
    return r;
  };
  auto restrict_mat = [&](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd r(nfree, nfree);
    for (int i = 0; i < nfree; ++i)
      for (int j = 0; j < nfree; ++j) r(i, j) = m(free_idx[i], free_idx[j]);
    return r;
  };

  PhaseSolverState st = make_phase_state(x, init, amps);
  PhaseSolveResult out;
  out.phase = init;
  out.cost = st.cost;

  double radius = 0.0;
  bool converged = false;
  int it = 0;
  for (; it < opts.phase_tr_iters; ++it) {
    Eigen::VectorXd g = restrict_vec(st.jacobian);
    Eigen::MatrixXd H = restrict_mat(st.hessian);

    // diagonal scaling keeps the spherical region meaningful across the
    // very different magnitudes of the coefficients
    Eigen::VectorXd scale(nfree);
    const double hmax = std::max(H.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    for (int i = 0; i < nfree; ++i)
      scale[i] = std::sqrt(std::max(std::abs(H(i, i)), 1e-12 * hmax));
    if (!(hmax > 0.0) || g.norm() <= opts.gradient_tol * (1.0 + st.cost)) {
      converged = true;
      break;
    }
    Eigen::VectorXd gs = g.cwiseQuotient(scale);
    Eigen::MatrixXd Hs = scale.cwiseInverse().asDiagonal() * H *
                         scale.cwiseInverse().asDiagonal();
    if (radius <= 0.0) radius = std::max(1.0, gs.norm());

    Eigen::VectorXd step_free = detail::tr_subproblem(Hs, gs, radius).cwiseQuotient(scale);
    Eigen::VectorXd step = expand(step_free);
    double alpha = cons.max_step(out.phase.phi, step);

    if (alpha * step.norm() < 1e-16 * (1.0 + out.phase.phi.norm())) {
      // stuck on the boundary: move within the face spanned by the active set
      const auto normals = cons.active_normals(out.phase.phi, free_idx, feas_tol);
      if (normals.empty() || static_cast<int>(normals.size()) >= nfree) {
        converged = true; // vertex or no room left
        break;
      }
      Eigen::MatrixXd Nact(nfree, normals.size());
      for (size_t c = 0; c < normals.size(); ++c) Nact.col(c) = normals[c];
      // first-order optimality on the face: nonnegative multipliers
      Eigen::VectorXd mu = Nact.colPivHouseholderQr().solve(-g);
      Eigen::FullPivLU<Eigen::MatrixXd> lu(Nact.transpose());
      Eigen::MatrixXd Z = lu.kernel();
      Eigen::VectorXd gz = Z.transpose() * g;
      if (gz.norm() <= opts.gradient_tol * (1.0 + st.cost) && mu.minCoeff() > -1e-8) {
        converged = true;
        break;
      }
      Eigen::MatrixXd Hz = Z.transpose() * H * Z;
      Eigen::VectorXd u = detail::tr_subproblem(Hz, gz, radius * 0.5);
      step_free = Z * u;
      step = expand(step_free);
      alpha = cons.max_step(out.phase.phi, step);
      if (alpha * step.norm() < 1e-16 * (1.0 + out.phase.phi.norm())) {
        converged = true;
        break;
      }
    }

    PhaseParams trial;
    trial.phi = out.phase.phi + alpha * step;
    PhaseSolverState st_trial = make_phase_state(x, trial, amps);
    const Eigen::VectorXd astep = restrict_vec(alpha * step);
    const double pred = -(g.dot(astep) + 0.5 * astep.dot(H * astep));
    const double actual = st.cost - st_trial.cost;
    const double ratio = pred > 0.0 ? actual / pred : -1.0;

    if (st_trial.cost < out.cost) {
      out.phase = trial;
      out.cost = st_trial.cost;
      st = std::move(st_trial);
    }
    const double used = astep.cwiseProduct(scale).norm();
    if (ratio < 0.25)
      radius = std::max(0.25 * used, 0.125 * radius);
    else if (ratio > 0.75 && alpha >= 1.0 - 1e-12)
      radius = std::max(radius, 2.0 * used);
    if (radius < opts.tr_radius_min) break;
  }

  out.iters = it;
  out.converged = converged;
  return out;
}

struct F0Estimate {
  double f0 = 0.0;   // cycles/sample
  double peak = 0.0; // normalized autocorrelation at the chosen lag
  bool voiced = false;
};

/// Initial F0 via the normalized autocorrelation peak in a lag band, refined
/// by 3-point parabolic interpolation. The biased estimate (no lag-count
/// compensation) naturally penalizes subharmonic lags.
inline F0Estimate init_f0_autocorrelation(const Eigen::VectorXd& x, double f_lo, double f_hi,
                                          double voicing_threshold = 0.3) {
  const int N = static_cast<int>(x.size());
  if (!(f_lo > 0.0) || !(f_hi > f_lo) || f_hi >= 0.5)
    throw std::invalid_argument("init_f0_autocorrelation: band must satisfy 0 < f_lo < f_hi < 0.5");
  const int lag_lo = std::max(1, static_cast<int>(std::ceil(1.0 / f_hi)));
  const int lag_hi = static_cast<int>(std::floor(1.0 / f_lo));
  if (2 * lag_hi >= N)
    throw std::invalid_argument("init_f0_autocorrelation: frame shorter than two periods of f_lo");

  const Eigen::VectorXd xc = x.array() - x.mean();
  const double r0 = xc.squaredNorm();
  F0Estimate out;
  if (r0 <= 0.0) return out; // silence

  auto r_at = [&](int lag) {
    return xc.head(N - lag).dot(xc.tail(N - lag)) / r0;
  };
  std::vector<double> r(lag_hi + 2, 0.0);
  int best = lag_lo;
  for (int lag = lag_lo; lag <= lag_hi; ++lag) {
    r[lag] = r_at(lag);
    if (r[lag] > r[best]) best = lag;
  }
  out.peak = r[best];
  if (out.peak < voicing_threshold) return out;

  double refined = best;
  if (best > lag_lo && best < lag_hi) {
    // interpolate on lag-count-compensated values; the biased curve's taper
    // would otherwise drag the vertex toward shorter lags
    const double ym = r[best - 1] / (N - best + 1);
    const double y0 = r[best] / (N - best);
    const double yp = r[best + 1] / (N - best - 1);
    const double denom = ym - 2.0 * y0 + yp;
    if (denom < 0.0) refined += std::clamp(0.5 * (ym - yp) / denom, -0.5, 0.5);
  }
  out.f0 = std::clamp(1.0 / refined, f_lo, f_hi);
  out.voiced = true;
  return out;
}

namespace detail {

/// Projected cost of a candidate phase: exact amplitude re-solve via normal
/// equations (cheap scan path; the returned fits always use the
/// rank-revealing solve).
inline double projected_cost_l0(const Eigen::VectorXd& x, const PhaseParams& phase,
                                const ModelConfig& config) {
  ModelConfig c0 = config;
  c0.amp_degree = 0;
  const Eigen::MatrixXd A = build_design_matrix(phase, c0, static_cast<int>(x.size())).A;
  const Eigen::MatrixXd AtA = A.transpose() * A;
  const Eigen::VectorXd Atx = A.transpose() * x;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(AtA + 1e-12 * AtA.diagonal().maxCoeff() *
                                              Eigen::MatrixXd::Identity(AtA.rows(), AtA.cols()));
  const Eigen::VectorXd theta = ldlt.solve(Atx);
  return 0.5 * (x.squaredNorm() - theta.dot(Atx) * 2.0 + theta.dot(AtA * theta));
}

/// Deterministic 1-D sweep of one higher-order phase coefficient over its
/// feasible interval, evaluated against one or more base parameter vectors
/// (the current iterate, and the initial-F0 anchor: the solution is expected
/// in the basin around the initial fundamental with zero rate terms, and a
/// warmup step on a mismatched lower-order model can drift off it).
/// Zero-initialized rate coefficients sit many sidelobes away from the
/// solution on long windows, so a local step alone cannot reach the global
/// basin; the grid step is sized to the fundamental's half-lobe so one
/// candidate always lands inside it.
inline PhaseParams scan_phase_coefficient(const Eigen::VectorXd& x,
                                          const std::vector<PhaseParams>& bases, int ell,
                                          const ModelConfig& config) {
  const int N = static_cast<int>(x.size());
  const int lphi = bases.front().degree();
  const auto cons = PhaseConstraints::make(config, N, lphi);
  const double half_window = center_offset(N);
  const double lobe_step = 0.5 * M_PI / taylor_basis(ell, half_window);

  PhaseParams best = bases.front();
  double best_cost = projected_cost_l0(x, best, config);

  for (const PhaseParams& phase : bases) {
    // feasible interval of phi_ell with the other coefficients frozen
    Eigen::VectorXd base = phase.phi;
    base[ell - 1] = 0.0;
    const Eigen::VectorXd f_base = cons.f0_basis * base;
    const Eigen::VectorXd g_col = cons.f0_basis.col(ell - 1);
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (int n = 0; n < N; ++n) {
      if (g_col[n] > 0.0) {
        hi = std::min(hi, (cons.f0_max - f_base[n]) / g_col[n]);
        lo = std::max(lo, (cons.f0_min - f_base[n]) / g_col[n]);
      } else if (g_col[n] < 0.0) {
        lo = std::max(lo, (cons.f0_max - f_base[n]) / g_col[n]);
        hi = std::min(hi, (cons.f0_min - f_base[n]) / g_col[n]);
      }
    }
    if (config.f0dot_max && ell >= 2) {
      const Eigen::VectorXd fd_base = cons.f0dot_basis * base;
      const Eigen::VectorXd gd = cons.f0dot_basis.col(ell - 1);
      for (int n = 0; n < N; ++n) {
        if (gd[n] > 0.0) {
          hi = std::min(hi, (*config.f0dot_max - fd_base[n]) / gd[n]);
          lo = std::max(lo, (-*config.f0dot_max - fd_base[n]) / gd[n]);
        } else if (gd[n] < 0.0) {
          lo = std::max(lo, (*config.f0dot_max - fd_base[n]) / gd[n]);
          hi = std::min(hi, (-*config.f0dot_max - fd_base[n]) / gd[n]);
        }
      }
    }
    if (!(lo < hi)) continue;

    double step = lobe_step;
    const int max_candidates = 20000;
    if ((hi - lo) / step > max_candidates) step = (hi - lo) / max_candidates;

    PhaseParams trial = phase;
    for (double v = lo; v <= hi + 0.5 * step; v += step) {
      trial.phi[ell - 1] = std::min(v, hi);
      const double c = projected_cost_l0(x, trial, config);
      if (c < best_cost) {
        best_cost = c;
        best = trial;
      }
    }
  }
  return best;
}

/// Variable-projection Gauss-Newton refinement of the phase parameters on
/// the projected cost min_theta G. The alternation converges only linearly
/// along the coupled amplitude-rate/frequency-rate valley; these steps use
/// the projected curvature U'U with U = (I - A A^+) D and restore quadratic
/// convergence near the solution.
struct PolishResult {
  PhaseParams phase;
  AmplitudeParams amps;
  AmpWorkspace ws;
  std::vector<double> costs;
};

inline PolishResult varpro_polish(const Eigen::VectorXd& x, PhaseParams phase,
                                  const ModelConfig& config, const FitOptions& opts) {
  const int N = static_cast<int>(x.size());
  const int lphi = phase.degree();
  const auto cons = PhaseConstraints::make(config, N, lphi);

  PolishResult out;
  out.ws.factor(phase, config, N);
  AmplitudeParams amps = out.ws.solve(x, config);
  double G = cost(x, phase, amps);

  std::vector<Eigen::VectorXd> h(lphi);
  for (int ell = 1; ell <= lphi; ++ell) h[ell - 1] = basis_column(ell, N);

  double radius = 0.0;
  for (int it = 0; it < opts.polish_iters; ++it) {
    PhaseSolverState st = make_phase_state(x, phase, amps);
    Eigen::MatrixXd D(N, lphi);
    for (int ell = 0; ell < lphi; ++ell) D.col(ell) = st.c1.cwiseProduct(h[ell]);
    const Eigen::VectorXd g = D.transpose() * st.residual;
    if (g.norm() <= opts.gradient_tol * (1.0 + G)) break;
    const Eigen::MatrixXd U = D - out.ws.A * out.ws.cod.solve(D);
    const Eigen::MatrixXd H = U.transpose() * U;

    Eigen::VectorXd scale(lphi);
    const double hmax = std::max(H.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    for (int i = 0; i < lphi; ++i)
      scale[i] = std::sqrt(std::max(H(i, i), 1e-12 * hmax));
    const Eigen::VectorXd gs = g.cwiseQuotient(scale);
    const Eigen::MatrixXd Hs =
        scale.cwiseInverse().asDiagonal() * H * scale.cwiseInverse().asDiagonal();
    if (radius <= 0.0) radius = std::max(1.0, gs.norm());

    const Eigen::VectorXd step = tr_subproblem(Hs, gs, radius).cwiseQuotient(scale);
    const double alpha = cons.max_step(phase.phi, step);
    if (alpha * step.norm() < 1e-18 * (1.0 + phase.phi.norm())) break;

    PhaseParams trial;
    trial.phi = phase.phi + alpha * step;
    AmpWorkspace ws_trial;
    ws_trial.factor(trial, config, N);
    const AmplitudeParams amps_trial = ws_trial.solve(x, config);
    const double Gt = cost(x, trial, amps_trial);

    const Eigen::VectorXd astep = alpha * step;
    const double pred = -(g.dot(astep) + 0.5 * astep.dot(H * astep));
    const double ratio = pred > 0.0 ? (G - Gt) / pred : -1.0;
    const double used = astep.cwiseProduct(scale).norm();
    if (Gt < G) {
      phase = trial;
      amps = amps_trial;
      out.ws = std::move(ws_trial);
      G = Gt;
      out.costs.push_back(G);
    }
    if (ratio < 0.25)
      radius = std::max(0.25 * used, 0.125 * radius);
    else if (ratio > 0.75 && alpha >= 1.0 - 1e-12)
      radius = std::max(radius, 2.0 * used);
    if (radius < opts.tr_radius_min) break;
  }

  out.phase = std::move(phase);
  out.amps = std::move(amps);
  return out;
}

}  // namespace detail

/// Returns the trivial zero-harmonic model (s_n = 0) for windows with no
/// detectable periodic component.
inline FittedModel unvoiced_model(const WindowedFrame& frame, const ModelConfig& config) {
  FittedModel out;
  out.config = config;
  out.phase.phi = Eigen::VectorXd::Zero(config.phase_degree);
  out.amps = AmplitudeParams::zeros(config.harmonics, config.amp_degree);
  out.s_hat = Eigen::VectorXd::Zero(frame.samples.size());
  out.v_hat = frame.samples;
  out.fs = frame.fs;
  out.t_center = frame.t_center;
  out.converged = true;
  out.voiced = false;
  return out;
}

/// Fits the model by alternating the closed-form amplitude solve with the
/// constrained phase step, with staged warmup on the phase coefficients,
/// then refines both jointly once the stop rule fires.
inline FittedModel fit(const WindowedFrame& frame, const ModelConfig& config,
                       const FitOptions& opts = {}) {
  config.validate();
  const int N = static_cast<int>(frame.samples.size());
  if (!(frame.fs > 0.0)) throw std::invalid_argument("fit: sample rate must be positive");
  if (N < config.amp_param_count() + config.phase_degree)
    throw std::invalid_argument("fit: window too short for the requested orders");

  double init_f0 = opts.init_f0;
  if (opts.init_strategy == FitOptions::InitStrategy::autocorrelation) {
    const double lo = opts.search_f_lo > 0.0
                          ? opts.search_f_lo
                          : std::max(config.f0_min, 2.0 / static_cast<double>(N));
    const double hi = opts.search_f_hi > 0.0 ? opts.search_f_hi : config.f0_upper();
    const F0Estimate est =
        init_f0_autocorrelation(frame.samples, lo, hi, opts.voicing_threshold);
    if (!est.voiced) return unvoiced_model(frame, config);
    init_f0 = std::clamp(est.f0, std::nextafter(config.f0_min, 1.0), config.f0_upper());
  }
  if (!(init_f0 > config.f0_min) || !(init_f0 <= config.f0_upper()))
    throw std::invalid_argument("fit: initial f0 outside the configured bounds");

  FittedModel out;
  out.config = config;
  out.fs = frame.fs;
  out.t_center = frame.t_center;
  out.phase.phi = Eigen::VectorXd::Zero(config.phase_degree);
  out.phase.phi[0] = 2.0 * M_PI * init_f0;

  const Eigen::VectorXd& x = frame.samples;
  const int lphi = config.phase_degree;
  double last_cost = std::numeric_limits<double>::infinity();

  for (int k = 1; k <= config.max_iters; ++k) {
    out.iters = k;
    AmplitudeSolve amp = solve_amplitudes(x, out.phase, config);
    out.rank_deficient = out.rank_deficient || amp.rank_deficient;
    last_cost = cost(x, out.phase, amp.params);
    out.cost_trace.push_back(last_cost);

    std::vector<int> warm_mask;
    const std::vector<int>* mask = nullptr;
    if (opts.stage_warmup && k <= lphi) {
      if (k >= 2) {
        std::vector<PhaseParams> bases{out.phase};
        if (out.phase.phi[0] != 2.0 * M_PI * init_f0) {
          bases.push_back(out.phase);
          bases.back().phi[0] = 2.0 * M_PI * init_f0;
        }
        const PhaseParams scanned = detail::scan_phase_coefficient(x, bases, k, config);
        AmplitudeSolve amp_scan = solve_amplitudes(x, scanned, config);
        const double c_scan = cost(x, scanned, amp_scan.params);
        if (c_scan <= last_cost) { // guard: the scan ranks candidates at L=0
          out.phase = scanned;
          amp = std::move(amp_scan);
          out.rank_deficient = out.rank_deficient || amp.rank_deficient;
          last_cost = c_scan;
          out.cost_trace.back() = std::min(out.cost_trace.back(), c_scan);
        }
      }
      warm_mask = {k - 1};
      mask = &warm_mask;
    }

    const PhaseSolveResult ps = solve_phase(x, amp.params, config, out.phase, opts, mask);
    out.cost_trace.push_back(ps.cost);
    const double delta2 = (ps.phase.phi - out.phase.phi).squaredNorm();
    out.phase = ps.phase;
    if (k > (opts.stage_warmup ? lphi : 1) && delta2 < config.rho) {
      out.converged = true;
      break;
    }
  }

  detail::AmpWorkspace ws;
  if (opts.joint_polish) {
    detail::PolishResult pr = detail::varpro_polish(x, out.phase, config, opts);
    out.phase = pr.phase;
    out.amps = pr.amps;
    ws = std::move(pr.ws);
    for (double c : pr.costs) out.cost_trace.push_back(c);
  } else {
    ws.factor(out.phase, config, N);
    out.amps = ws.solve(x, config);
  }
  out.rank_deficient = out.rank_deficient || ws.rank < ws.A.cols();
  out.cost_trace.push_back(cost(x, out.phase, out.amps));

  out.s_hat = ws.A * out.amps.coeffs;
  out.v_hat = x - out.s_hat;

  if (config.amp_rate_max) {
    const RateTracks rt = rate_tracks(out.phase, out.amps, N);
    const auto& idx = config.rate_harmonics;
    for (int p = 0; p <= config.harmonics; ++p) {
      if (idx && std::find(idx->begin(), idx->end(), p) == idx->end()) continue;
      if (rt.adot.row(p).cwiseAbs().maxCoeff() > *config.amp_rate_max)
        out.amp_rate_exceeded = true;
      if (p >= 1 && rt.bdot.row(p - 1).cwiseAbs().maxCoeff() > *config.amp_rate_max)
        out.amp_rate_exceeded = true;
    }
  }
  return out;
}

}  // namespace tvharm
