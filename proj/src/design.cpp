#include "corepulse/design.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "corepulse/error.hpp"

namespace corepulse {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

std::vector<std::string> DesignMatrix::names() const {
  std::vector<std::string> out = dense_names;
  out.insert(out.end(), sparse_names.begin(), sparse_names.end());
  return out;
}

std::optional<Index> DesignMatrix::column(const std::string& name) const {
  for (std::size_t i = 0; i < dense_names.size(); ++i) {
    if (dense_names[i] == name) return static_cast<Index>(i);
  }
  for (std::size_t i = 0; i < sparse_names.size(); ++i) {
    if (sparse_names[i] == name) return dense.cols() + static_cast<Index>(i);
  }
  return std::nullopt;
}

VectorXd DesignMatrix::column_values(Index j) const {
  if (j < dense.cols()) return dense.col(j);
  return VectorXd(sparse.col(j - dense.cols()));
}

VectorXd DesignMatrix::multiply(const VectorXd& beta) const {
  VectorXd out = dense * beta.head(dense.cols());
  if (sparse.cols() > 0) out += sparse * beta.tail(sparse.cols());
  return out;
}

VectorXd DesignMatrix::transpose_multiply(const VectorXd& w) const {
  VectorXd out(cols());
  out.head(dense.cols()) = dense.transpose() * w;
  if (sparse.cols() > 0) out.tail(sparse.cols()) = sparse.transpose() * w;
  return out;
}

MatrixXd DesignMatrix::weighted_gram(const VectorXd& weights) const {
  const Index pd = dense.cols(), ps = sparse.cols();
  MatrixXd gram(pd + ps, pd + ps);
  const MatrixXd weighted = dense.array().colwise() * weights.array();
  gram.topLeftCorner(pd, pd).noalias() = weighted.transpose() * dense;
  if (ps > 0) {
    SparseMatrix sw = sparse;
    for (Index k = 0; k < sw.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(sw, k); it; ++it) it.valueRef() *= weights(it.row());
    }
    const MatrixXd cross = sw.transpose() * dense;  // ps x pd
    gram.bottomLeftCorner(ps, pd) = cross;
    gram.topRightCorner(pd, ps) = cross.transpose();
    const SparseMatrix block = sparse.transpose() * sw;
    gram.bottomRightCorner(ps, ps) = MatrixXd(block);
  }
  return gram;
}

MatrixXd DesignMatrix::to_dense() const {
  MatrixXd out(rows(), cols());
  out.leftCols(dense.cols()) = dense;
  if (sparse.cols() > 0) out.rightCols(sparse.cols()) = MatrixXd(sparse);
  return out;
}

void DesignMatrix::add_dense_column(const std::string& name, const VectorXd& values) {
  if (values.size() != rows()) throw Error("add_dense_column: row count mismatch");
  dense.conservativeResize(Eigen::NoChange, dense.cols() + 1);
  dense.col(dense.cols() - 1) = values;
  dense_names.push_back(name);
}

DesignMatrix DesignMatrix::select_rows(std::span<const Index> rows_) const {
  DesignMatrix out;
  const std::vector<Index> idx(rows_.begin(), rows_.end());
  out.dense = dense(idx, Eigen::all);
  out.dense_names = dense_names;
  out.response = response(idx);
  out.instruments = instruments.cols() > 0 ? MatrixXd(instruments(idx, Eigen::all))
                                           : MatrixXd(static_cast<Index>(idx.size()), 0);
  out.instrument_names = instrument_names;
  for (Index r : idx) out.row_ids.push_back(row_ids.empty() ? 0 : row_ids[static_cast<std::size_t>(r)]);
  out.sparse_names = sparse_names;
  out.log = log;

  std::vector<std::vector<Index>> targets(static_cast<std::size_t>(rows()));
  for (std::size_t i = 0; i < idx.size(); ++i) targets[static_cast<std::size_t>(idx[i])].push_back(static_cast<Index>(i));
  std::vector<Triplet> triplets;
  for (Index k = 0; k < sparse.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(sparse, k); it; ++it) {
      for (Index r : targets[static_cast<std::size_t>(it.row())]) triplets.emplace_back(r, it.col(), it.value());
    }
  }
  out.sparse.resize(static_cast<Index>(idx.size()), sparse.cols());
  out.sparse.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

DesignMatrix DesignMatrix::drop_columns(std::span<const Index> cols_) const {
  const std::set<Index> drop(cols_.begin(), cols_.end());
  DesignMatrix out;
  out.response = response;
  out.instruments = instruments;
  out.instrument_names = instrument_names;
  out.row_ids = row_ids;
  out.log = log;

  std::vector<Index> dense_keep;
  for (Index j = 0; j < dense.cols(); ++j) {
    if (!drop.count(j)) {
      dense_keep.push_back(j);
      out.dense_names.push_back(dense_names[static_cast<std::size_t>(j)]);
    }
  }
  out.dense = dense(Eigen::all, dense_keep);

  std::vector<Triplet> triplets;
  Index next = 0;
  for (Index k = 0; k < sparse.cols(); ++k) {
    if (drop.count(dense.cols() + k)) continue;
    for (SparseMatrix::InnerIterator it(sparse, k); it; ++it) triplets.emplace_back(it.row(), next, it.value());
    out.sparse_names.push_back(sparse_names[static_cast<std::size_t>(k)]);
    ++next;
  }
  out.sparse.resize(rows(), next);
  out.sparse.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

DesignMatrix DesignMatrix::from_dense(MatrixXd X, VectorXd y, std::vector<std::string> names) {
  if (X.rows() != y.size() || static_cast<std::size_t>(X.cols()) != names.size()) {
    throw Error("from_dense: dimension mismatch");
  }
  DesignMatrix d;
  d.sparse.resize(X.rows(), 0);
  d.instruments.resize(X.rows(), 0);
  d.row_ids.assign(static_cast<std::size_t>(X.rows()), 0);
  d.dense = std::move(X);
  d.response = std::move(y);
  d.dense_names = std::move(names);
  return d;
}

const std::vector<std::string>& covariate_names() {
  static const std::vector<std::string> names = {
      "core_frd_adopt_lag", "peri_frd_adopt_lag", "core_frd",   "peri_frd",
      "gender_male",        "gender_female",      "prepaid",    "phone_2.5G",
      "phone_3G",           "phone_3.5G",         "phone_other", "mobile_internet",
      "phone_age",          "tenure_t"};
  return names;
}

DesignMatrix to_design_matrix(const Panel& stratum, const Formula& formula) {
  const auto n = static_cast<Index>(stratum.rows.size());
  if (n == 0) throw Error("to_design_matrix: empty stratum");

  DesignMatrix d;
  d.response.resize(n);
  for (Index r = 0; r < n; ++r) d.response(r) = stratum.rows[static_cast<std::size_t>(r)].adopted;
  if (d.response.minCoeff() == d.response.maxCoeff()) throw Error("degenerate response");

  d.dense_names = {"intercept"};
  const auto& cov = covariate_names();
  d.dense_names.insert(d.dense_names.end(), cov.begin(), cov.end());
  d.dense.resize(n, static_cast<Index>(d.dense_names.size()));
  d.instrument_names = {"z_core", "z_peri"};
  d.instruments.resize(n, 2);
  d.row_ids.reserve(static_cast<std::size_t>(n));

  std::set<std::string> regions;
  std::set<int> months;
  std::map<int, std::set<SubscriberId>> comm_members;
  for (Index r = 0; r < n; ++r) {
    const auto& row = stratum.rows[static_cast<std::size_t>(r)];
    d.dense.row(r) << 1.0, row.core_frd_adopt_lag, row.peri_frd_adopt_lag, row.core_frd, row.peri_frd,
        row.gender == Gender::male, row.gender == Gender::female, row.prepaid,
        row.phone == PhoneTechnology::g2_5, row.phone == PhoneTechnology::g3,
        row.phone == PhoneTechnology::g3_5, row.phone == PhoneTechnology::other, row.mobile_internet,
        row.phone_age, row.tenure_months;
    d.instruments.row(r) << row.z_core, row.z_peri;
    d.row_ids.push_back(row.id);
    regions.insert(row.region);
    months.insert(row.t);
    for (int c : row.communities) comm_members[c].insert(row.id);
  }
  std::set<int> comms;
  for (const auto& [c, ids] : comm_members) {
    if (static_cast<int>(ids.size()) >= formula.min_community_subscribers) comms.insert(c);
  }

  // sparse dummy families, reference (first) level dropped
  std::map<std::string, Index> region_col;
  std::map<int, Index> month_col, comm_col;
  Index next = 0;
  if (formula.region_effects) {
    for (auto it = std::next(regions.begin()); it != regions.end(); ++it) {
      region_col[*it] = next++;
      d.sparse_names.push_back("region_" + *it);
    }
  }
  if (formula.month_effects && !months.empty()) {
    for (auto it = std::next(months.begin()); it != months.end(); ++it) {
      month_col[*it] = next++;
      d.sparse_names.push_back("month_" + stratum.window.at(*it).to_string());
    }
  }
  if (formula.community_effects && !comms.empty()) {
    for (auto it = std::next(comms.begin()); it != comms.end(); ++it) {
      comm_col[*it] = next++;
      d.sparse_names.push_back("community_" + std::to_string(*it));
    }
  }
  std::vector<Triplet> triplets;
  for (Index r = 0; r < n; ++r) {
    const auto& row = stratum.rows[static_cast<std::size_t>(r)];
    if (auto it = region_col.find(row.region); it != region_col.end()) triplets.emplace_back(r, it->second, 1.0);
    if (auto it = month_col.find(row.t); it != month_col.end()) triplets.emplace_back(r, it->second, 1.0);
    for (int c : row.communities) {
      if (auto it = comm_col.find(c); it != comm_col.end()) triplets.emplace_back(r, it->second, 1.0);
    }
  }
  d.sparse.resize(n, next);
  d.sparse.setFromTriplets(triplets.begin(), triplets.end());

  prune_collinear(d);
  return d;
}

void prune_collinear(DesignMatrix& design, double tol) {
  const Index p = design.cols();
  const MatrixXd gram = design.weighted_gram(VectorXd::Ones(design.rows()));
  const auto names = design.names();
  MatrixXd chol = MatrixXd::Zero(p, p);
  std::vector<Index> kept, dropped;
  for (Index j = 0; j < p; ++j) {
    const double gjj = gram(j, j);
    if (!(gjj > 0.0)) {
      dropped.push_back(j);
      design.log.push_back("pruned all-zero column " + names[static_cast<std::size_t>(j)]);
      continue;
    }
    const auto k = static_cast<Index>(kept.size());
    VectorXd v;
    double residual = gjj;
    if (k > 0) {
      const VectorXd rhs = gram(kept, j);
      v = chol.topLeftCorner(k, k).triangularView<Eigen::Lower>().solve(rhs);
      residual = gjj - v.squaredNorm();
    }
    if (residual <= tol * gjj) {
      dropped.push_back(j);
      design.log.push_back("pruned collinear column " + names[static_cast<std::size_t>(j)]);
      continue;
    }
    if (k > 0) chol.row(k).head(k) = v.transpose();
    chol(k, k) = std::sqrt(residual);
    kept.push_back(j);
  }
  if (!dropped.empty()) {
    auto log = std::move(design.log);
    design = design.drop_columns(dropped);
    design.log = std::move(log);
  }
}

DesignMatrix drop_perfect_predictors(const DesignMatrix& input, std::span<const std::string> keep) {
  DesignMatrix design = input;
  const std::set<std::string> protect(keep.begin(), keep.end());
  while (true) {
    const Index n = design.rows();
    std::vector<char> drop_row(static_cast<std::size_t>(n), 0);
    std::vector<Index> drop_cols;
    const auto names = design.names();

    auto check = [&](Index j, const std::vector<Index>& active, bool binary) {
      const auto& name = names[static_cast<std::size_t>(j)];
      if (!binary || active.empty() || name == "intercept" || protect.count(name)) return;
      const double y0 = design.response(active.front());
      for (Index r : active) {
        if (design.response(r) != y0) return;
      }
      drop_cols.push_back(j);
      for (Index r : active) drop_row[static_cast<std::size_t>(r)] = 1;
      design.log.push_back("dropped perfect predictor " + name + " with " +
                           std::to_string(active.size()) + " rows");
    };

    for (Index j = 0; j < design.dense.cols(); ++j) {
      std::vector<Index> active;
      bool binary = true;
      for (Index r = 0; r < n && binary; ++r) {
        const double x = design.dense(r, j);
        if (x == 1.0) {
          active.push_back(r);
        } else if (x != 0.0) {
          binary = false;
        }
      }
      check(j, active, binary);
    }
    for (Index k = 0; k < design.sparse.cols(); ++k) {
      std::vector<Index> active;
      bool binary = true;
      for (SparseMatrix::InnerIterator it(design.sparse, k); it; ++it) {
        if (it.value() == 1.0) {
          active.push_back(it.row());
        } else if (it.value() != 0.0) {
          binary = false;
        }
      }
      check(design.dense.cols() + k, active, binary);
    }
    bool reference_dropped = false;
    if (drop_cols.empty()) {
      // rows sitting at the reference level of a dummy family are predicted
      // by the intercept alone
      std::map<std::string, std::vector<char>> touched;
      for (Index k = 0; k < design.sparse.cols(); ++k) {
        const auto& name = design.sparse_names[static_cast<std::size_t>(k)];
        const std::string family = name.substr(0, name.find('_') + 1);
        auto& hit = touched[family];
        hit.resize(static_cast<std::size_t>(n), 0);
        for (SparseMatrix::InnerIterator it(design.sparse, k); it; ++it) {
          if (it.value() != 0.0) hit[static_cast<std::size_t>(it.row())] = 1;
        }
      }
      for (const auto& [family, hit] : touched) {
        std::vector<Index> ref;
        for (Index r = 0; r < n; ++r) {
          if (!hit[static_cast<std::size_t>(r)]) ref.push_back(r);
        }
        if (ref.empty() || static_cast<Index>(ref.size()) == n) continue;
        const double y0 = design.response(ref.front());
        if (std::all_of(ref.begin(), ref.end(), [&](Index r) { return design.response(r) == y0; })) {
          for (Index r : ref) drop_row[static_cast<std::size_t>(r)] = 1;
          design.log.push_back("dropped " + std::to_string(ref.size()) + " rows at the reference level of " +
                               family.substr(0, family.size() - 1) + " (outcome constant)");
          reference_dropped = true;
          break;
        }
      }
    }
    if (drop_cols.empty() && !reference_dropped) break;

    std::vector<Index> rows;
    for (Index r = 0; r < n; ++r) {
      if (!drop_row[static_cast<std::size_t>(r)]) rows.push_back(r);
    }
    if (rows.empty()) throw Error("degenerate response");
    design = design.drop_columns(drop_cols).select_rows(rows);
  }
  if (design.response.minCoeff() == design.response.maxCoeff()) throw Error("degenerate response");
  prune_collinear(design);
  return design;
}

}  // namespace corepulse
