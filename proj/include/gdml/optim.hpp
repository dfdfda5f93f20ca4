#pragma once

// Building blocks shared by the distributed optimizers: configuration, the per-DC
// quadratic model, conjugate gradient and backtracking line search.

#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <span>
#include <string>

#include "gdml/comm/topology.hpp"
#include "gdml/error.hpp"
#include "gdml/linalg.hpp"
#include "gdml/loss.hpp"

namespace gdml {

struct FadlConfig {
  double lambda = 1.0;
  double eps_g = 1e-4;  // exit when ||g^r|| <= eps_g ||g^0||
  int max_outer = 100;
  double cg_tol = 0.1;  // relative residual
  int cg_max_iter = 50;
  double ls_c1 = 1e-4;
  double ls_backtrack = 0.5;
  int ls_max_steps = 30;

  void validate() const {
    if (!(lambda > 0.0)) throw ConfigError("lambda must be > 0");
    if (!(eps_g > 0.0 && eps_g < 1.0)) throw ConfigError("eps_g must be in (0, 1)");
    if (max_outer < 0) throw ConfigError("max_outer must be >= 0");
    if (!(cg_tol > 0.0)) throw ConfigError("cg_tol must be > 0");
    if (cg_max_iter < 1) throw ConfigError("cg_max_iter must be >= 1");
    if (!(ls_c1 > 0.0 && ls_c1 < 0.5)) throw ConfigError("ls_c1 must be in (0, 0.5)");
    if (!(ls_backtrack > 0.0 && ls_backtrack < 1.0)) throw ConfigError("ls_backtrack must be in (0, 1)");
    if (ls_max_steps < 1) throw ConfigError("ls_max_steps must be >= 1");
  }
};

inline void set_fadl_field(FadlConfig& c, const std::string& key, const std::string& value) {
  auto real = [&] {
    try {
      std::size_t pos = 0;
      double v = std::stod(value, &pos);
      if (pos != value.size()) throw ConfigError("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: bad number for '" + key + "': " + value);
    }
  };
  auto integer = [&] {
    double v = real();
    if (v != std::floor(v)) throw ConfigError("config: '" + key + "' must be an integer");
    return static_cast<int>(v);
  };
  if (key == "lambda") c.lambda = real();
  else if (key == "eps_g") c.eps_g = real();
  else if (key == "max_outer") c.max_outer = integer();
  else if (key == "cg_tol") c.cg_tol = real();
  else if (key == "cg_max_iter") c.cg_max_iter = integer();
  else if (key == "ls_c1") c.ls_c1 = real();
  else if (key == "ls_backtrack") c.ls_backtrack = real();
  else if (key == "ls_max_steps") c.ls_max_steps = integer();
  else throw ConfigError("config: unknown key '" + key + "'");
}

// `key = value` lines with the FadlConfig field names.
inline FadlConfig parse_fadl_config(std::istream& in) {
  FadlConfig c;
  std::string line;
  while (std::getline(in, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config: expected key = value, got '" + line + "'");
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    set_fadl_field(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  c.validate();
  return c;
}

inline FadlConfig load_fadl_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_fadl_config(in);
}

// ---------------------------------------------------------------------------
// Local quadratic model of one data center around w^r:
//
//   f_p(w) = lambda/2 ||w||^2 + g . (w - w^r) + P/2 (w - w^r)' H_p (w - w^r)
//
// with g the aggregated loss gradient at w^r and H_p the loss Hessian of the DC's data
// at w^r. At w = w^r its gradient equals the full objective gradient lambda w^r + g.

template <class HessianOp>
class QuadraticModel {
 public:
  QuadraticModel(Vector w_r, Vector loss_grad, double lambda, int P, HessianOp hessian)
      : w_r_(std::move(w_r)), g_(std::move(loss_grad)), lambda_(lambda), P_(P), hessian_(std::move(hessian)) {
    la::require_same_size(w_r_.size(), g_.size(), "QuadraticModel");
    if (!(lambda_ > 0.0)) throw ConfigError("lambda must be > 0");
    if (P_ < 1) throw ConfigError("P must be >= 1");
  }

  std::size_t dimension() const noexcept { return w_r_.size(); }
  const Vector& anchor() const noexcept { return w_r_; }

  double value(std::span<const double> w) {
    Vector delta(w.begin(), w.end());
    la::axpy(-1.0, w_r_, delta);
    Vector hd = hessian_(std::span<const double>(delta));
    return 0.5 * lambda_ * la::dot(w, w) + la::dot(g_, delta) + 0.5 * P_ * la::dot(delta, hd);
  }

  // lambda w + g + P H_p (w - w^r)
  Vector gradient(std::span<const double> w) {
    la::require_same_size(w.size(), w_r_.size(), "QuadraticModel::gradient");
    Vector delta(w.begin(), w.end());
    la::axpy(-1.0, w_r_, delta);
    Vector out = hessian_(std::span<const double>(delta));
    la::scale(static_cast<double>(P_), out);
    la::axpy(lambda_, w, out);
    la::axpy(1.0, g_, out);
    return out;
  }

  // (lambda I + P H_p) u
  Vector hessian_vec(std::span<const double> u) {
    Vector out = hessian_(u);
    la::scale(static_cast<double>(P_), out);
    la::axpy(lambda_, u, out);
    return out;
  }

 private:
  Vector w_r_;
  Vector g_;
  double lambda_;
  int P_;
  HessianOp hessian_;
};

template <class HessianOp>
QuadraticModel<HessianOp> build_local_model(Vector w_r, Vector loss_grad, double lambda, int P, HessianOp hessian) {
  return QuadraticModel<HessianOp>(std::move(w_r), std::move(loss_grad), lambda, P, std::move(hessian));
}

// Model of a shard held in memory, with H_p evaluated at w^r.
inline auto build_local_model(std::span<const SparseExample> shard, const Vector& w_r, const Vector& loss_grad,
                              double lambda, int P) {
  auto hessian = [shard, w_r](std::span<const double> u) { return local_hessian_vec(shard, w_r, u); };
  return build_local_model(w_r, loss_grad, lambda, P, std::move(hessian));
}

// ---------------------------------------------------------------------------

struct CgResult {
  Vector solution;
  int iterations = 0;
  double residual_norm = 0.0;
  double rhs_norm = 0.0;
};

// Solves A x = b from x = 0, stopping when ||r|| <= tol ||b|| or after max_iter products.
// `apply` computes A p and is called exactly once per iteration.
template <class Apply>
CgResult conjugate_gradient(Apply&& apply, std::span<const double> b, double tol, int max_iter) {
  CgResult out;
  out.solution.assign(b.size(), 0.0);
  Vector r(b.begin(), b.end());
  Vector p = r;
  double rr = la::dot(r, r);
  out.rhs_norm = std::sqrt(rr);
  out.residual_norm = out.rhs_norm;
  if (out.rhs_norm == 0.0) return out;
  if (!std::isfinite(out.rhs_norm)) throw OptimizationError("CG: non-finite right-hand side");
  while (out.iterations < max_iter && std::sqrt(rr) > tol * out.rhs_norm) {
    Vector ap = apply(std::span<const double>(p));
    const double pap = la::dot(p, ap);
    if (!(pap > 0.0)) throw OptimizationError("CG: operator is not positive definite (p'Ap = " + std::to_string(pap) + ")");
    const double alpha = rr / pap;
    la::axpy(alpha, p, out.solution);
    la::axpy(-alpha, ap, r);
    ++out.iterations;
    const double rr_new = la::dot(r, r);
    if (!std::isfinite(rr_new) || !la::all_finite(out.solution)) throw OptimizationError("CG: non-finite iterate");
    const double beta = rr_new / rr;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
    rr = rr_new;
  }
  out.residual_norm = std::sqrt(rr);
  return out;
}

struct LocalSolve {
  Vector w_p;
  int cg_iterations = 0;
};

// Minimizes the model by CG on (lambda I + P H_p) delta = -grad f_p(w^r), returning w^r + delta.
template <class Model>
LocalSolve cg_minimize(Model& model, double cg_tol, int cg_max_iter) {
  const Vector& w_r = model.anchor();
  Vector rhs = model.gradient(w_r);
  la::scale(-1.0, rhs);
  auto cg = conjugate_gradient([&](std::span<const double> u) { return model.hessian_vec(u); }, rhs, cg_tol,
                               cg_max_iter);
  LocalSolve out{w_r, cg.iterations};
  la::axpy(1.0, cg.solution, out.w_p);
  return out;
}

// ---------------------------------------------------------------------------

struct LineSearchResult {
  double t = 0.0;
  double f_new = 0.0;
  int trials = 0;
};

// Backtracking Armijo search from t = 1: accepts the first t with
//   f(w + t d) <= f(w) + c1 t (g . d).
// `objective_at(t)` returns f(w + t d). `round_step` maps each trial t to the value that
// will actually be used (for example, its wire representation).
template <class Evaluator, class Round>
LineSearchResult line_search(double f_r, double slope, const FadlConfig& cfg, Evaluator&& objective_at,
                             Round&& round_step) {
  if (!(slope < 0.0)) throw OptimizationError("line search: direction is not a descent direction (g.d = " +
                                              std::to_string(slope) + ")");
  double t = 1.0;
  for (int k = 0; k < cfg.ls_max_steps; ++k, t *= cfg.ls_backtrack) {
    const double trial = round_step(t);
    const double f_trial = objective_at(trial);
    if (f_trial <= f_r + cfg.ls_c1 * trial * slope) return {trial, f_trial, k + 1};
  }
  throw OptimizationError("line search: no sufficient decrease within " + std::to_string(cfg.ls_max_steps) +
                          " steps (non-descent)");
}

template <class Evaluator>
LineSearchResult line_search(std::span<const double> w_r, std::span<const double> d_r, double f_r,
                             std::span<const double> g_full, const FadlConfig& cfg, Evaluator&& objective_at) {
  la::require_same_size(w_r.size(), d_r.size(), "line_search");
  return line_search(f_r, la::dot(g_full, d_r), cfg, std::forward<Evaluator>(objective_at),
                     [](double t) { return t; });
}

}  // namespace gdml
