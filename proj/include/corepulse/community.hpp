#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "corepulse/attributes.hpp"
#include "corepulse/graphcore.hpp"

namespace corepulse {

// ---------------------------------------------------------------------------
// Attribute-aware affiliation model
//
// Edge channel:       p(u,v) = 1 - exp(-F_u . F_v)
// Attribute channel:  p(x_ua = 1) = logistic(W_a . F_u + b_a)
// Objective:          L_G + lambda * L_X - rho * |W|_1
//
// where L_G = sum_{edges} log(1 - exp(-F_u.F_v)) - sum_{non-edges} F_u.F_v
// over unordered pairs, and L_X is the Bernoulli log-likelihood of the
// attribute bits. Pairs and attribute entries can be masked out, which is
// how cross-validation holds data back.

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct AffiliationModel {
  MatrixX<Scalar> F;  // nodes x K, nonnegative
  MatrixX<Scalar> W;  // attributes x K
  VectorX<Scalar> b;  // attributes
  Scalar lambda = Scalar(1);
  Scalar rho = Scalar(0.1);

  Eigen::Index communities() const { return F.cols(); }

  template <typename Other>
  AffiliationModel<Other> cast() const {
    return {F.template cast<Other>(), W.template cast<Other>(), b.template cast<Other>(),
            static_cast<Other>(lambda), static_cast<Other>(rho)};
  }
};

/// Observations for one ego-network. Masks are 1 where an entry takes part
/// in the likelihood; the pair mask diagonal is always 0.
struct AffiliationData {
  Eigen::MatrixXd adjacency;       // N x N, symmetric 0/1
  Eigen::MatrixXd attributes;      // N x A, 0/1
  Eigen::MatrixXd pair_mask;       // N x N, symmetric
  Eigen::MatrixXd attribute_mask;  // N x A

  static AffiliationData full(Eigen::MatrixXd adjacency, Eigen::MatrixXd attributes);
  Eigen::Index nodes() const { return adjacency.rows(); }
  Eigen::Index attribute_count() const { return attributes.cols(); }
};

namespace detail {

/// Dot products below this are floored inside the edge term so an edge
/// between zero rows stays finite.
inline constexpr double kMinDot = 1e-10;

template <typename Scalar>
Scalar log_one_minus_exp_neg(Scalar d) {
  using std::expm1;
  using std::log;
  using std::max;
  d = max(d, Scalar(kMinDot));
  return log(-expm1(-d));
}

/// d/dd log(1 - exp(-d)) = 1 / (exp(d) - 1)
template <typename Scalar>
Scalar edge_weight(Scalar d) {
  using std::expm1;
  using std::max;
  return Scalar(1) / expm1(max(d, Scalar(kMinDot)));
}

template <typename Scalar>
Scalar log_sigmoid(Scalar z) {
  using std::exp;
  using std::log1p;
  return z < Scalar(0) ? z - log1p(exp(z)) : -log1p(exp(-z));
}

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  using std::exp;
  return z < Scalar(0) ? exp(z) / (Scalar(1) + exp(z)) : Scalar(1) / (Scalar(1) + exp(-z));
}

}  // namespace detail

template <typename Scalar>
Scalar graph_loglik(const MatrixX<Scalar>& F, const AffiliationData& data) {
  const MatrixX<Scalar> dots = F * F.transpose();
  Scalar total(0);
  const Eigen::Index n = F.rows();
  for (Eigen::Index v = 1; v < n; ++v) {
    for (Eigen::Index u = 0; u < v; ++u) {
      if (data.pair_mask(u, v) == 0.0) continue;
      total += data.adjacency(u, v) != 0.0 ? detail::log_one_minus_exp_neg(dots(u, v))
                                           : -dots(u, v);
    }
  }
  return total;
}

/// dL_G/dF, nodes x K.
template <typename Scalar>
MatrixX<Scalar> graph_gradient(const MatrixX<Scalar>& F, const AffiliationData& data) {
  const MatrixX<Scalar> dots = F * F.transpose();
  const Eigen::Index n = F.rows();
  MatrixX<Scalar> coeff = MatrixX<Scalar>::Zero(n, n);
  for (Eigen::Index v = 0; v < n; ++v) {
    for (Eigen::Index u = 0; u < n; ++u) {
      if (u == v || data.pair_mask(u, v) == 0.0) continue;
      coeff(u, v) = data.adjacency(u, v) != 0.0 ? detail::edge_weight(dots(u, v)) : Scalar(-1);
    }
  }
  return coeff * F;
}

template <typename Scalar>
Scalar attribute_loglik(const AffiliationModel<Scalar>& m, const AffiliationData& data) {
  const MatrixX<Scalar> z = (m.F * m.W.transpose()).rowwise() + m.b.transpose();
  Scalar total(0);
  for (Eigen::Index a = 0; a < z.cols(); ++a) {
    for (Eigen::Index u = 0; u < z.rows(); ++u) {
      if (data.attribute_mask(u, a) == 0.0) continue;
      total += data.attributes(u, a) != 0.0 ? detail::log_sigmoid(z(u, a))
                                            : detail::log_sigmoid(-z(u, a));
    }
  }
  return total;
}

/// Masked residuals x - logistic(z), nodes x attributes.
template <typename Scalar>
MatrixX<Scalar> attribute_residual(const AffiliationModel<Scalar>& m, const AffiliationData& data) {
  const MatrixX<Scalar> z = (m.F * m.W.transpose()).rowwise() + m.b.transpose();
  MatrixX<Scalar> r(z.rows(), z.cols());
  for (Eigen::Index a = 0; a < z.cols(); ++a) {
    for (Eigen::Index u = 0; u < z.rows(); ++u) {
      r(u, a) = data.attribute_mask(u, a) == 0.0
                    ? Scalar(0)
                    : static_cast<Scalar>(data.attributes(u, a)) - detail::sigmoid(z(u, a));
    }
  }
  return r;
}

/// Gradients of L_X (not scaled by lambda).
template <typename Scalar>
struct AttributeGradient {
  MatrixX<Scalar> F;
  MatrixX<Scalar> W;
  VectorX<Scalar> b;
};

template <typename Scalar>
AttributeGradient<Scalar> attribute_gradient(const AffiliationModel<Scalar>& m,
                                             const AffiliationData& data) {
  const MatrixX<Scalar> r = attribute_residual(m, data);
  return {r * m.W, r.transpose() * m.F, r.colwise().sum().transpose()};
}

template <typename Scalar>
Scalar objective(const AffiliationModel<Scalar>& m, const AffiliationData& data) {
  Scalar value = graph_loglik(m.F, data);
  if (m.lambda != Scalar(0)) value += m.lambda * attribute_loglik(m, data);
  return value - m.rho * m.W.cwiseAbs().sum();
}

// ---------------------------------------------------------------------------
// Fitting

struct CesnaOptions {
  double lambda = 1.0;
  double rho = 0.1;
  double tol = 1e-4;
  int max_iter = 500;
  bool conductance_init = false;
};

struct CesnaFit {
  AffiliationModel<double> model;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // objective after each sweep, starting with the initial value
};

/// Block-coordinate ascent: projected gradient steps on each row of F with
/// backtracking, then a proximal (soft-threshold) step on W and a gradient
/// step on b. Throws Error("diverged ...") on a non-finite objective.
CesnaFit fit(const AffiliationData& data, int communities, std::uint64_t seed,
             const CesnaOptions& options = {});
CesnaFit fit(const EgoNetwork& ego, const AttributeMatrix& attrs, int communities,
             std::uint64_t seed, const CesnaOptions& options = {});

/// Initial F rows from locally minimal neighbourhood conductance.
Eigen::MatrixXd conductance_seeds(const Eigen::MatrixXd& adjacency, int communities,
                                  std::uint64_t seed);

/// Log-likelihood of the entries whose mask is 1 in `heldout` (with the
/// attribute part weighted by the model's lambda).
double heldout_loglik(const AffiliationModel<double>& model, const AffiliationData& heldout);

struct SelectKResult {
  int best_k = 1;
  std::vector<int> grid;
  std::vector<double> scores;  // mean held-out log-likelihood per grid entry
};

/// Cross-validated choice of the community count. Each fold holds out
/// 1/folds of the node pairs and of the attribute entries.
SelectKResult select_k(const AffiliationData& data, std::span<const int> k_grid, int folds,
                       std::uint64_t seed, const CesnaOptions& options = {});

/// Argmax with ties (relative difference < 1e-9) resolved to the smallest K.
int pick_best_k(std::span<const int> grid, std::span<const double> scores);

// ---------------------------------------------------------------------------
// Community sets

struct Community {
  SubscriberId ego = 0;
  std::vector<SubscriberId> members;  // sorted
};

/// delta = sqrt(-log(1 - eps)), eps = 2|E| / (N(N-1)). Throws Error("no
/// background density") when eps = 0. A complete ego-network (eps = 1) uses
/// eps = 1 - 1/(N(N-1)).
double affiliation_threshold(std::size_t edges, std::size_t nodes);

/// Columns of F as index sets {u : F(u,c) >= delta}; empty sets dropped.
std::vector<std::vector<Eigen::Index>> threshold_columns(const Eigen::MatrixXd& F, double delta);

std::vector<Community> extract(const AffiliationModel<double>& model, const EgoNetwork& ego);
std::vector<Community> extract(const Eigen::MatrixXd& F, std::span<const SubscriberId> ids,
                               std::size_t edge_count, SubscriberId ego);

/// Collapses duplicates (keeping the smallest ego id), removes strict
/// subsets of other sets, drops sets without adopters. Output ordered by
/// size descending, then member list ascending.
std::vector<Community> dedup_filter(std::vector<Community> communities,
                                    const std::set<SubscriberId>& adopters);

struct MembershipCounts {
  std::map<SubscriberId, int> count;
  std::map<int, std::size_t> hist_all;
  std::map<int, std::size_t> hist_adopters;
};

/// Counts over every community member plus `universe`, whose entries
/// outside all communities count 0.
MembershipCounts membership_counts(std::span<const Community> communities,
                                   const std::set<SubscriberId>& adopters,
                                   std::span<const SubscriberId> universe = {});

/// Symmetric best-match F1: mean of (avg best F1 of each detected set
/// against planted) and (avg best F1 of each planted set against detected).
double best_match_f1(std::span<const std::vector<SubscriberId>> detected,
                     std::span<const std::vector<SubscriberId>> planted);

}  // namespace corepulse
