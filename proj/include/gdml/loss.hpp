#pragma once

// Logistic-loss statistical queries over one shard: loss, gradient, Hessian-vector
// products. Regularization is never applied here; it is added once, globally.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include "gdml/data.hpp"
#include "gdml/error.hpp"
#include "gdml/linalg.hpp"

namespace gdml {

using WeightVector = Vector;

struct LossStats {
  double loss_sum = 0.0;
  Vector grad;
};

// log(1 + exp(-z)) without overflow.
inline double logistic_loss(double z) noexcept {
  return z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

inline double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

inline double sparse_dot(const SparseExample& ex, std::span<const double> w) {
  double s = 0.0;
  for (std::size_t k = 0; k < ex.nnz(); ++k) s += ex.values[k] * w[ex.indices[k]];
  return s;
}

namespace detail {

inline void check_dims(std::span<const SparseExample> shard, std::size_t d) {
  for (const auto& ex : shard)
    if (!ex.indices.empty() && ex.indices.back() >= d)
      throw DimensionError("example feature index " + std::to_string(ex.indices.back()) +
                           " out of range for weight dimension " + std::to_string(d));
}

}  // namespace detail

inline LossStats local_loss_grad(std::span<const SparseExample> shard, std::span<const double> w) {
  detail::check_dims(shard, w.size());
  LossStats out{0.0, Vector(w.size(), 0.0)};
  for (const auto& ex : shard) {
    const double y = ex.label;
    const double z = y * sparse_dot(ex, w);
    out.loss_sum += logistic_loss(z);
    const double coef = -y * sigmoid(-z);
    for (std::size_t k = 0; k < ex.nnz(); ++k) out.grad[ex.indices[k]] += coef * ex.values[k];
  }
  return out;
}

// Loss-only Hessian at w applied to v: sum_i s_i (1 - s_i) (x_i . v) x_i, s_i = sigmoid(w . x_i).
inline Vector local_hessian_vec(std::span<const SparseExample> shard, std::span<const double> w,
                                std::span<const double> v) {
  la::require_same_size(w.size(), v.size(), "local_hessian_vec");
  detail::check_dims(shard, w.size());
  Vector out(w.size(), 0.0);
  for (const auto& ex : shard) {
    const double s = sigmoid(sparse_dot(ex, w));
    const double coef = s * (1.0 - s) * sparse_dot(ex, v);
    for (std::size_t k = 0; k < ex.nnz(); ++k) out[ex.indices[k]] += coef * ex.values[k];
  }
  return out;
}

inline double global_objective(double loss_sum_total, std::span<const double> w, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("regularization lambda must be > 0");
  return 0.5 * lambda * la::dot(w, w) + loss_sum_total;
}

// ---------------------------------------------------------------------------
// The per-worker view of a loss used by the distributed optimizers. A worker evaluates
// loss and gradient at an iterate, then serves Hessian-vector products at that iterate
// and loss differences along a search direction.

template <class T>
concept LocalObjective = requires(T& obj, std::span<const double> v, double t) {
  { obj.dimension() } -> std::convertible_to<std::size_t>;
  { obj.begin_iterate(v) } -> std::same_as<LossStats>;
  { obj.hessian_vec(v) } -> std::same_as<Vector>;
  obj.set_direction(v);
  // L(w + t d) - L(w) for the current iterate w and direction d.
  { obj.loss_delta(t) } -> std::convertible_to<double>;
  // Work units (non-zeros touched per pass) for the simulated compute clock.
  { obj.work_units() } -> std::convertible_to<double>;
};

class LogisticShardObjective {
 public:
  LogisticShardObjective(std::span<const SparseExample> shard, std::size_t dim) : shard_(shard), dim_(dim) {
    detail::check_dims(shard, dim);
    for (const auto& ex : shard) nnz_ += static_cast<double>(ex.nnz());
  }

  std::size_t dimension() const noexcept { return dim_; }

  LossStats begin_iterate(std::span<const double> w) {
    la::require_same_size(w.size(), dim_, "begin_iterate");
    margins_.assign(shard_.size(), 0.0);
    curvature_.assign(shard_.size(), 0.0);
    dir_margins_.assign(shard_.size(), 0.0);
    LossStats out{0.0, Vector(dim_, 0.0)};
    for (std::size_t i = 0; i < shard_.size(); ++i) {
      const auto& ex = shard_[i];
      const double y = ex.label;
      const double m = sparse_dot(ex, w);
      margins_[i] = m;
      const double s = sigmoid(m);
      curvature_[i] = s * (1.0 - s);
      out.loss_sum += logistic_loss(y * m);
      const double coef = -y * sigmoid(-y * m);
      for (std::size_t k = 0; k < ex.nnz(); ++k) out.grad[ex.indices[k]] += coef * ex.values[k];
    }
    return out;
  }

  Vector hessian_vec(std::span<const double> v) const {
    la::require_same_size(v.size(), dim_, "hessian_vec");
    Vector out(dim_, 0.0);
    for (std::size_t i = 0; i < shard_.size(); ++i) {
      const auto& ex = shard_[i];
      const double coef = curvature_[i] * sparse_dot(ex, v);
      for (std::size_t k = 0; k < ex.nnz(); ++k) out[ex.indices[k]] += coef * ex.values[k];
    }
    return out;
  }

  void set_direction(std::span<const double> d) {
    la::require_same_size(d.size(), dim_, "set_direction");
    for (std::size_t i = 0; i < shard_.size(); ++i) dir_margins_[i] = sparse_dot(shard_[i], d);
  }

  double loss_delta(double t) const {
    double s = 0.0;
    for (std::size_t i = 0; i < shard_.size(); ++i) {
      const double y = shard_[i].label;
      s += logistic_loss(y * (margins_[i] + t * dir_margins_[i])) - logistic_loss(y * margins_[i]);
    }
    return s;
  }

  double work_units() const noexcept { return nnz_; }

 private:
  std::span<const SparseExample> shard_;
  std::size_t dim_;
  double nnz_ = 0.0;
  std::vector<double> margins_;
  std::vector<double> curvature_;
  std::vector<double> dir_margins_;
};

static_assert(LocalObjective<LogisticShardObjective>);

}  // namespace gdml
