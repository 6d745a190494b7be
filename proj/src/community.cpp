#include "corepulse/community.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <unordered_map>

#include "corepulse/error.hpp"
#include "corepulse/rng.hpp"

namespace corepulse {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

AffiliationData AffiliationData::full(MatrixXd adjacency, MatrixXd attributes) {
  AffiliationData d;
  const Index n = adjacency.rows();
  if (attributes.rows() != n) attributes.resize(n, 0);
  d.pair_mask = MatrixXd::Ones(n, n);
  d.pair_mask.diagonal().setZero();
  d.attribute_mask = MatrixXd::Ones(n, attributes.cols());
  d.adjacency = std::move(adjacency);
  d.attributes = std::move(attributes);
  return d;
}

namespace {

constexpr int kMaxHalvings = 30;
constexpr double kArmijo = 1e-4;
constexpr double kMaxStep = 1e3;

/// Terms of the objective that involve row u of F.
class NodeObjective {
 public:
  NodeObjective(const AffiliationData& data, const AffiliationModel<double>& model)
      : data_(data), model_(model) {}

  // Masks and adjacency are symmetric, so column u is read instead of row u.
  double value(Index u, const VectorXd& f) const {
    const VectorXd dots = model_.F * f;
    double total = 0.0;
    for (Index v = 0; v < dots.size(); ++v) {
      if (data_.pair_mask(v, u) == 0.0) continue;
      total += data_.adjacency(v, u) != 0.0 ? detail::log_one_minus_exp_neg(dots(v)) : -dots(v);
    }
    if (model_.lambda != 0.0 && model_.W.rows() > 0) {
      const VectorXd z = model_.W * f + model_.b;
      double attr = 0.0;
      for (Index a = 0; a < z.size(); ++a) {
        if (data_.attribute_mask(u, a) == 0.0) continue;
        attr += data_.attributes(u, a) != 0.0 ? detail::log_sigmoid(z(a)) : detail::log_sigmoid(-z(a));
      }
      total += model_.lambda * attr;
    }
    return total;
  }

  /// value(u, f), with the gradient written to `g`.
  double value_and_gradient(Index u, const VectorXd& f, VectorXd& g) const {
    const VectorXd dots = model_.F * f;
    VectorXd coeff = VectorXd::Zero(dots.size());
    double total = 0.0;
    for (Index v = 0; v < dots.size(); ++v) {
      if (data_.pair_mask(v, u) == 0.0) continue;
      if (data_.adjacency(v, u) != 0.0) {
        total += detail::log_one_minus_exp_neg(dots(v));
        coeff(v) = detail::edge_weight(dots(v));
      } else {
        total -= dots(v);
        coeff(v) = -1.0;
      }
    }
    g = model_.F.transpose() * coeff;
    if (model_.lambda != 0.0 && model_.W.rows() > 0) {
      const VectorXd z = model_.W * f + model_.b;
      VectorXd r(z.size());
      double attr = 0.0;
      for (Index a = 0; a < z.size(); ++a) {
        if (data_.attribute_mask(u, a) == 0.0) {
          r(a) = 0.0;
          continue;
        }
        const bool on = data_.attributes(u, a) != 0.0;
        attr += on ? detail::log_sigmoid(z(a)) : detail::log_sigmoid(-z(a));
        r(a) = (on ? 1.0 : 0.0) - detail::sigmoid(z(a));
      }
      total += model_.lambda * attr;
      g += model_.lambda * (model_.W.transpose() * r);
    }
    return total;
  }

 private:
  const AffiliationData& data_;
  const AffiliationModel<double>& model_;
};

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

/// Proximal gradient step on (W, b); returns true if a step was taken.
bool update_attribute_weights(AffiliationModel<double>& m, const AffiliationData& data, double& step) {
  const MatrixXd r = attribute_residual(m, data);
  const MatrixXd gw = m.lambda * (r.transpose() * m.F);
  const VectorXd gb = m.lambda * r.colwise().sum().transpose();
  const double smooth0 = m.lambda * attribute_loglik(m, data);
  const double total0 = smooth0 - m.rho * m.W.cwiseAbs().sum();

  const MatrixXd w0 = m.W;
  const VectorXd b0 = m.b;
  double eta = std::min(step * 2.0, kMaxStep);
  for (int h = 0; h < kMaxHalvings; ++h, eta *= 0.5) {
    m.W = (w0 + eta * gw).unaryExpr([&](double x) { return soft_threshold(x, eta * m.rho); });
    m.b = b0 + eta * gb;
    const double smooth = m.lambda * attribute_loglik(m, data);
    const double total = smooth - m.rho * m.W.cwiseAbs().sum();
    const double lin = ((m.W - w0).cwiseProduct(gw)).sum() + (m.b - b0).dot(gb);
    const double quad = ((m.W - w0).squaredNorm() + (m.b - b0).squaredNorm()) / (2.0 * eta);
    if (std::isfinite(total) && total >= total0 && smooth >= smooth0 + lin - quad) {
      step = eta;
      return true;
    }
  }
  m.W = w0;
  m.b = b0;
  step = std::max(step * 0.5, 1e-12);
  return false;
}

MatrixXd random_init(Index n, int k, Rng& rng) {
  MatrixXd F(n, k);
  for (Index c = 0; c < k; ++c) {
    for (Index u = 0; u < n; ++u) F(u, c) = rng.uniform() / k;
  }
  return F;
}

}  // namespace

MatrixXd conductance_seeds(const MatrixXd& adjacency, int communities, std::uint64_t seed) {
  const Index n = adjacency.rows();
  const VectorXd degree = adjacency.rowwise().sum();
  const double total_volume = degree.sum();
  VectorXd phi = VectorXd::Ones(n);
  for (Index u = 0; u < n; ++u) {
    std::vector<char> in(static_cast<std::size_t>(n), 0);
    in[static_cast<std::size_t>(u)] = 1;
    for (Index v = 0; v < n; ++v) {
      if (adjacency(u, v) != 0.0) in[static_cast<std::size_t>(v)] = 1;
    }
    double volume = 0.0, cut = 0.0;
    for (Index v = 0; v < n; ++v) {
      if (!in[static_cast<std::size_t>(v)]) continue;
      volume += degree(v);
      for (Index w = 0; w < n; ++w) {
        if (adjacency(v, w) != 0.0 && !in[static_cast<std::size_t>(w)]) cut += 1.0;
      }
    }
    const double denom = std::min(volume, total_volume - volume);
    phi(u) = denom > 0.0 ? cut / denom : 1.0;
  }
  std::vector<Index> minima;
  for (Index u = 0; u < n; ++u) {
    bool local_min = true;
    for (Index v = 0; v < n && local_min; ++v) {
      if (adjacency(u, v) != 0.0 && phi(v) < phi(u)) local_min = false;
    }
    if (local_min) minima.push_back(u);
  }
  std::stable_sort(minima.begin(), minima.end(), [&](Index a, Index b) { return phi(a) < phi(b); });

  Rng rng(seed);
  MatrixXd F = random_init(n, communities, rng) * 0.1;
  for (int c = 0; c < communities; ++c) {
    const Index s = c < static_cast<int>(minima.size()) ? minima[static_cast<std::size_t>(c)]
                                                         : static_cast<Index>(rng.index(static_cast<std::uint64_t>(n)));
    F(s, c) = 1.0;
    for (Index v = 0; v < n; ++v) {
      if (adjacency(s, v) != 0.0) F(v, c) = 1.0;
    }
  }
  return F;
}

CesnaFit fit(const AffiliationData& data, int communities, std::uint64_t seed,
             const CesnaOptions& options) {
  const Index n = data.nodes();
  const Index attrs = data.attribute_count();
  if (n < 2) throw Error("fit: ego-network needs at least 2 members");
  if (communities < 1) throw Error("fit: need at least one community");

  Rng rng(seed);
  CesnaFit result;
  auto& m = result.model;
  m.lambda = options.lambda;
  m.rho = options.rho;
  m.F = options.conductance_init ? conductance_seeds(data.adjacency, communities, seed)
                                 : random_init(n, communities, rng);
  m.W = MatrixXd::Zero(attrs, communities);
  m.b = VectorXd::Zero(attrs);
  for (Index a = 0; a < attrs; ++a) {
    const double count = data.attribute_mask.col(a).sum();
    const double ones = data.attribute_mask.col(a).cwiseProduct(data.attributes.col(a)).sum();
    const double p = std::clamp(count > 0 ? ones / count : 0.5, 1e-3, 1.0 - 1e-3);
    m.b(a) = std::log(p / (1.0 - p));
  }

  double current = objective(m, data);
  if (!std::isfinite(current)) throw Error("fit: diverged at iteration 0");
  result.trace.push_back(current);

  const NodeObjective local(data, m);
  std::vector<double> node_step(static_cast<std::size_t>(n), 1.0);
  double attr_step = 1.0;

  for (int iter = 1; iter <= options.max_iter; ++iter) {
    for (Index u = 0; u < n; ++u) {
      const VectorXd f0 = m.F.row(u).transpose();
      VectorXd g;
      const double v0 = local.value_and_gradient(u, f0, g);
      double& step = node_step[static_cast<std::size_t>(u)];
      double eta = std::min(step * 2.0, kMaxStep);
      bool accepted = false;
      for (int h = 0; h < kMaxHalvings; ++h, eta *= 0.5) {
        const VectorXd f1 = (f0 + eta * g).cwiseMax(0.0);
        const double gain = g.dot(f1 - f0);
        if (gain <= 0.0) break;
        const double v1 = local.value(u, f1);
        if (std::isfinite(v1) && v1 >= v0 + kArmijo * gain) {
          m.F.row(u) = f1.transpose();
          step = eta;
          accepted = true;
          break;
        }
      }
      if (!accepted) step = std::max(step * 0.5, 1e-12);
    }
    if (m.lambda != 0.0 && attrs > 0) update_attribute_weights(m, data, attr_step);

    const double next = objective(m, data);
    if (!std::isfinite(next)) throw Error("fit: diverged at iteration " + std::to_string(iter));
    if (next < current - 1e-9 * std::max(1.0, std::abs(current))) {
      throw Error("fit: objective decreased at iteration " + std::to_string(iter));
    }
    result.trace.push_back(next);
    result.iterations = iter;
    const double change = std::abs(next - current);
    const double scale = std::abs(current);
    current = next;
    if (change == 0.0 || change < options.tol * scale) {
      result.converged = true;
      break;
    }
  }
  result.objective = current;
  return result;
}

CesnaFit fit(const EgoNetwork& ego, const AttributeMatrix& attrs, int communities,
             std::uint64_t seed, const CesnaOptions& options) {
  if (attrs.ids != ego.members) throw Error("fit: attribute rows do not match ego members");
  return fit(AffiliationData::full(ego.adjacency(), attrs.bits), communities, seed, options);
}

double heldout_loglik(const AffiliationModel<double>& model, const AffiliationData& heldout) {
  double value = graph_loglik(model.F, heldout);
  if (model.lambda != 0.0 && heldout.attribute_count() > 0) {
    value += model.lambda * attribute_loglik(model, heldout);
  }
  return value;
}

int pick_best_k(std::span<const int> grid, std::span<const double> scores) {
  if (grid.empty() || grid.size() != scores.size()) throw Error("pick_best_k: bad grid");
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double tol = 1e-9 * std::max(std::abs(scores[i]), std::abs(scores[best]));
    if (scores[i] > scores[best] + tol) {
      best = i;
    } else if (std::abs(scores[i] - scores[best]) <= tol && grid[i] < grid[best]) {
      best = i;
    }
  }
  return grid[best];
}

SelectKResult select_k(const AffiliationData& data, std::span<const int> k_grid, int folds,
                       std::uint64_t seed, const CesnaOptions& options) {
  if (k_grid.empty()) throw Error("select_k: empty K grid");
  if (folds < 2) throw Error("select_k: need at least 2 folds");
  const Index n = data.nodes();
  const Index attrs = data.attribute_count();
  const Index pairs = n * (n - 1) / 2;
  if (pairs < folds) {
    throw Error("select_k: ego too small for " + std::to_string(folds) + " folds");
  }

  SelectKResult result;
  result.grid.assign(k_grid.begin(), k_grid.end());
  if (k_grid.size() == 1) {
    result.best_k = k_grid[0];
    result.scores = {0.0};
    return result;
  }

  Rng rng(mix_seed(seed, 0xF01D));
  auto fold_assignment = [&](Index count) {
    std::vector<int> fold(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i) fold[static_cast<std::size_t>(i)] = static_cast<int>(i % folds);
    for (Index i = count - 1; i > 0; --i) {  // Fisher-Yates
      const auto j = static_cast<Index>(rng.index(static_cast<std::uint64_t>(i + 1)));
      std::swap(fold[static_cast<std::size_t>(i)], fold[static_cast<std::size_t>(j)]);
    }
    return fold;
  };
  const auto pair_fold = fold_assignment(pairs);
  const auto attr_fold = fold_assignment(n * attrs);

  result.scores.assign(k_grid.size(), 0.0);
  for (int f = 0; f < folds; ++f) {
    AffiliationData train = data;
    AffiliationData test = data;
    test.pair_mask.setZero();
    test.attribute_mask.setZero();
    std::size_t p = 0;
    for (Index v = 1; v < n; ++v) {
      for (Index u = 0; u < v; ++u, ++p) {
        if (pair_fold[p] != f) continue;
        train.pair_mask(u, v) = train.pair_mask(v, u) = 0.0;
        test.pair_mask(u, v) = test.pair_mask(v, u) = 1.0;
      }
    }
    for (Index a = 0; a < attrs; ++a) {
      for (Index u = 0; u < n; ++u) {
        if (attr_fold[static_cast<std::size_t>(a * n + u)] != f) continue;
        train.attribute_mask(u, a) = 0.0;
        test.attribute_mask(u, a) = 1.0;
      }
    }
    for (std::size_t i = 0; i < k_grid.size(); ++i) {
      const auto fitted = fit(train, k_grid[i], mix_seed(seed, static_cast<std::uint64_t>(f * 1000 + k_grid[i])), options);
      result.scores[i] += heldout_loglik(fitted.model, test) / folds;
    }
  }
  result.best_k = pick_best_k(result.grid, result.scores);
  return result;
}

// ---------------------------------------------------------------------------
// Extraction and set operations

double affiliation_threshold(std::size_t edges, std::size_t nodes) {
  if (nodes < 2) throw Error("no background density");
  const double pairs = 0.5 * static_cast<double>(nodes) * static_cast<double>(nodes - 1);
  double eps = static_cast<double>(edges) / pairs;
  if (eps <= 0.0) throw Error("no background density");
  eps = std::min(eps, 1.0 - 0.5 / pairs);
  return std::sqrt(-std::log1p(-eps));
}

std::vector<std::vector<Index>> threshold_columns(const MatrixXd& F, double delta) {
  std::vector<std::vector<Index>> out;
  for (Index c = 0; c < F.cols(); ++c) {
    std::vector<Index> members;
    for (Index u = 0; u < F.rows(); ++u) {
      if (F(u, c) >= delta) members.push_back(u);
    }
    if (!members.empty()) out.push_back(std::move(members));
  }
  return out;
}

std::vector<Community> extract(const MatrixXd& F, std::span<const SubscriberId> ids,
                               std::size_t edge_count, SubscriberId ego) {
  const double delta = affiliation_threshold(edge_count, ids.size());
  std::vector<Community> out;
  for (const auto& cols : threshold_columns(F, delta)) {
    Community c;
    c.ego = ego;
    for (Index u : cols) c.members.push_back(ids[static_cast<std::size_t>(u)]);
    std::sort(c.members.begin(), c.members.end());
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<Community> extract(const AffiliationModel<double>& model, const EgoNetwork& ego) {
  return extract(model.F, ego.members, ego.induced_edges.size(), ego.ego);
}

std::vector<Community> dedup_filter(std::vector<Community> communities,
                                    const std::set<SubscriberId>& adopters) {
  for (auto& c : communities) {
    std::sort(c.members.begin(), c.members.end());
    c.members.erase(std::unique(c.members.begin(), c.members.end()), c.members.end());
  }
  std::erase_if(communities, [](const Community& c) { return c.members.empty(); });
  std::sort(communities.begin(), communities.end(), [](const Community& a, const Community& b) {
    if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
    if (a.members != b.members) return a.members < b.members;
    return a.ego < b.ego;
  });
  communities.erase(std::unique(communities.begin(), communities.end(),
                                [](const Community& a, const Community& b) { return a.members == b.members; }),
                    communities.end());

  // Strict-subset removal. Sets are ordered by size descending, so every
  // potential superset of set i appears before it.
  std::unordered_map<SubscriberId, std::vector<std::size_t>> containing;
  std::vector<char> keep(communities.size(), 1);
  for (std::size_t i = 0; i < communities.size(); ++i) {
    const auto& members = communities[i].members;
    // candidate supersets: the sets containing the rarest member
    const std::vector<std::size_t>* rarest = nullptr;
    bool impossible = false;
    for (SubscriberId id : members) {
      auto it = containing.find(id);
      if (it == containing.end()) {
        impossible = true;
        break;
      }
      if (!rarest || it->second.size() < rarest->size()) rarest = &it->second;
    }
    if (!impossible && rarest) {
      for (std::size_t j : *rarest) {
        const auto& sup = communities[j].members;
        if (sup.size() > members.size() &&
            std::includes(sup.begin(), sup.end(), members.begin(), members.end())) {
          keep[i] = 0;
          break;
        }
      }
    }
    for (SubscriberId id : members) containing[id].push_back(i);
  }

  std::vector<Community> out;
  for (std::size_t i = 0; i < communities.size(); ++i) {
    if (!keep[i]) continue;
    const auto& members = communities[i].members;
    const bool has_adopter = std::any_of(members.begin(), members.end(),
                                         [&](SubscriberId id) { return adopters.count(id) > 0; });
    if (has_adopter) out.push_back(std::move(communities[i]));
  }
  return out;
}

MembershipCounts membership_counts(std::span<const Community> communities,
                                   const std::set<SubscriberId>& adopters,
                                   std::span<const SubscriberId> universe) {
  MembershipCounts out;
  for (SubscriberId id : universe) out.count.emplace(id, 0);
  for (const auto& c : communities) {
    for (SubscriberId id : c.members) ++out.count[id];
  }
  for (const auto& [id, count] : out.count) {
    ++out.hist_all[count];
    if (adopters.count(id)) ++out.hist_adopters[count];
  }
  return out;
}

namespace {

double f1(const std::vector<SubscriberId>& a, const std::vector<SubscriberId>& b) {
  std::size_t common = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++common;
      ++i;
      ++j;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(a.size());
  const double recall = static_cast<double>(common) / static_cast<double>(b.size());
  return 2.0 * precision * recall / (precision + recall);
}

double mean_best(std::span<const std::vector<SubscriberId>> from,
                 std::span<const std::vector<SubscriberId>> to) {
  if (from.empty()) return 0.0;
  double total = 0.0;
  for (const auto& a : from) {
    double best = 0.0;
    for (const auto& b : to) best = std::max(best, f1(a, b));
    total += best;
  }
  return total / static_cast<double>(from.size());
}

}  // namespace

double best_match_f1(std::span<const std::vector<SubscriberId>> detected,
                     std::span<const std::vector<SubscriberId>> planted) {
  auto sorted = [](std::span<const std::vector<SubscriberId>> sets) {
    std::vector<std::vector<SubscriberId>> out(sets.begin(), sets.end());
    for (auto& s : out) std::sort(s.begin(), s.end());
    return out;
  };
  const auto d = sorted(detected);
  const auto p = sorted(planted);
  return 0.5 * (mean_best(d, p) + mean_best(p, d));
}

}  // namespace corepulse
