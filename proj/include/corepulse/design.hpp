#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "corepulse/graphcore.hpp"
#include "corepulse/panel.hpp"

namespace corepulse {

/// Regressors split into a dense covariate block and a column-compressed
/// dummy block. Column j < dense.cols() is dense column j; the rest index
/// the sparse block. Instruments ride along row-aligned but are not
/// regressors.
struct DesignMatrix {
  Eigen::MatrixXd dense;
  std::vector<std::string> dense_names;
  Eigen::SparseMatrix<double> sparse;  // column-major
  std::vector<std::string> sparse_names;
  Eigen::VectorXd response;
  Eigen::MatrixXd instruments;
  std::vector<std::string> instrument_names;
  std::vector<SubscriberId> row_ids;
  std::vector<std::string> log;  // pruning decisions

  Eigen::Index rows() const { return dense.rows(); }
  Eigen::Index cols() const { return dense.cols() + sparse.cols(); }
  std::vector<std::string> names() const;
  std::optional<Eigen::Index> column(const std::string& name) const;
  Eigen::VectorXd column_values(Eigen::Index j) const;

  Eigen::VectorXd multiply(const Eigen::VectorXd& beta) const;        // X beta
  Eigen::VectorXd transpose_multiply(const Eigen::VectorXd& w) const; // X' w
  /// X' diag(weights) X assembled block-wise (dense-dense, sparse-dense,
  /// sparse-sparse).
  Eigen::MatrixXd weighted_gram(const Eigen::VectorXd& weights) const;
  Eigen::MatrixXd to_dense() const;

  void add_dense_column(const std::string& name, const Eigen::VectorXd& values);
  DesignMatrix select_rows(std::span<const Eigen::Index> rows) const;
  DesignMatrix drop_columns(std::span<const Eigen::Index> cols) const;

  static DesignMatrix from_dense(Eigen::MatrixXd X, Eigen::VectorXd y, std::vector<std::string> names);
};

/// Which fixed-effect families enter the design.
struct Formula {
  bool region_effects = true;
  bool month_effects = true;
  bool community_effects = true;
  // communities held by fewer stratum subscribers get no dummy
  int min_community_subscribers = 1;
};

/// Dense covariate names in design order (after the intercept).
const std::vector<std::string>& covariate_names();

/// Expands a panel stratum into a design matrix. Reference categories:
/// gender=unknown, phone=2G, and the first region, month, and community
/// present in the stratum. Community dummies are multi-hot. Exactly
/// collinear columns are pruned and logged. Throws Error("degenerate
/// response") when the response is constant.
DesignMatrix to_design_matrix(const Panel& stratum, const Formula& formula = {});

/// Drops columns that are zero or exactly collinear with earlier columns
/// (sequential Cholesky on X'X, relative pivot tolerance `tol`).
void prune_collinear(DesignMatrix& design, double tol = 1e-9);

/// Repeatedly drops 0/1 indicator columns whose active rows all share one
/// response value, together with those rows, then re-prunes collinear
/// columns. `keep` names are never dropped.
DesignMatrix drop_perfect_predictors(const DesignMatrix& design, std::span<const std::string> keep = {});

}  // namespace corepulse
