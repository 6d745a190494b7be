#include "corepulse/econ.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "corepulse/error.hpp"
#include "corepulse/rng.hpp"

namespace corepulse {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::optional<Index> FitResult::index(const std::string& name) const {
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j] == name) return static_cast<Index>(j);
  }
  return std::nullopt;
}

double FitResult::coef(const std::string& name) const {
  auto j = index(name);
  if (!j) throw Error("no coefficient named " + name);
  return beta(*j);
}

double FitResult::std_error(const std::string& name) const {
  auto j = index(name);
  if (!j) throw Error("no coefficient named " + name);
  return se(*j);
}

double null_loglik(const VectorXd& y) {
  const double n = static_cast<double>(y.size());
  const double n1 = (y.array() > 0.5).count();
  const double n0 = n - n1;
  double ll = 0.0;
  if (n1 > 0) ll += n1 * std::log(n1 / n);
  if (n0 > 0) ll += n0 * std::log(n0 / n);
  return ll;
}

namespace {

struct Evaluation {
  double ll = 0.0;
  VectorXd score;   // d ll / d eta
  VectorXd weight;  // -d2 ll / d eta2
};

Evaluation evaluate(const DesignMatrix& d, const VectorXd& beta, bool derivatives) {
  const VectorXd eta = d.multiply(beta);
  Evaluation e;
  if (derivatives) {
    e.score.resize(eta.size());
    e.weight.resize(eta.size());
  }
  for (Index i = 0; i < eta.size(); ++i) {
    const double q = d.response(i) > 0.5 ? 1.0 : -1.0;
    const double s = q * eta(i);
    const double lc = log_norm_cdf(s);
    e.ll += lc;
    if (derivatives) {
      const double lam = std::exp(norm_log_pdf(s) - lc);
      e.score(i) = q * lam;
      e.weight(i) = lam * (s + lam);
    }
  }
  return e;
}

VectorXd column_scales(const DesignMatrix& d) {
  VectorXd scale(d.cols());
  const double n = static_cast<double>(d.rows());
  for (Index j = 0; j < d.cols(); ++j) {
    const VectorXd x = d.column_values(j);
    const double mean = x.sum() / n;
    const double sd = std::sqrt(std::max(0.0, x.squaredNorm() / n - mean * mean));
    scale(j) = sd > 0.0 ? sd : std::abs(mean);
  }
  return scale;
}

std::string format_trace(const std::vector<double>& trace) {
  std::ostringstream out;
  out.precision(10);
  for (std::size_t i = 0; i < trace.size(); ++i) out << (i ? " " : "") << trace[i];
  return out.str();
}

}  // namespace

FitResult probit_fit(const DesignMatrix& design, const ProbitOptions& opts) {
  const Index p = design.cols();
  if (design.rows() == 0 || p == 0) throw Error("probit: empty design");
  for (Index i = 0; i < design.rows(); ++i) {
    const double y = design.response(i);
    if (y != 0.0 && y != 1.0) throw Error("probit: response must be 0/1");
  }
  const auto names = design.names();
  const VectorXd scale = column_scales(design);

  VectorXd beta = VectorXd::Zero(p);
  Evaluation cur = evaluate(design, beta, true);
  std::vector<double> trace{cur.ll};
  bool converged = false;
  int iter = 0;
  while (iter < opts.max_iter) {
    ++iter;
    const VectorXd grad = design.transpose_multiply(cur.score);
    const Eigen::LDLT<MatrixXd> info(design.weighted_gram(cur.weight));
    if (info.info() != Eigen::Success || !(info.vectorD().array() > 0.0).all()) {
      throw Error("probit: information matrix not positive definite");
    }
    const VectorXd step = info.solve(grad);
    const double decrement = grad.dot(step);
    const bool last = decrement < opts.tol;

    double t = 1.0;
    Evaluation next;
    VectorXd cand;
    bool accepted = false;
    for (int h = 0; h < 60; ++h, t *= 0.5) {
      cand = beta + t * step;
      next = evaluate(design, cand, true);
      if (std::isfinite(next.ll) && next.ll >= cur.ll) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (last || decrement < 1e-6) {
        converged = true;
        break;
      }
      throw Error("probit: step halving failed at iteration " + std::to_string(iter) +
                  "; loglik trace: " + format_trace(trace));
    }
    const double gain = next.ll - cur.ll;
    beta = cand;
    cur = std::move(next);
    trace.push_back(cur.ll);
    if (last) {
      converged = true;
      break;
    }
    if (gain > opts.tol) {
      for (Index j = 0; j < p; ++j) {
        if (std::abs(beta(j)) * scale(j) > opts.separation_bound) {
          throw Error("separation: coefficient " + names[static_cast<std::size_t>(j)] +
                      " diverging while the likelihood improves");
        }
      }
    }
  }
  if (!converged) {
    throw Error("probit: no convergence after " + std::to_string(opts.max_iter) +
                " iterations; loglik trace: " + format_trace(trace));
  }

  FitResult fit;
  fit.names = names;
  fit.beta = beta;
  const VectorXd grad = design.transpose_multiply(cur.score);
  const MatrixXd info = design.weighted_gram(cur.weight);
  const Eigen::LDLT<MatrixXd> ldlt(info);
  const MatrixXd cov = ldlt.solve(MatrixXd::Identity(p, p));
  fit.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  fit.loglik = cur.ll;
  fit.null_loglik = null_loglik(design.response);
  fit.pseudo_r2 = fit.null_loglik < 0.0 ? 1.0 - fit.loglik / fit.null_loglik : 0.0;
  fit.n_obs = design.rows();
  fit.iterations = iter;
  fit.gradient_norm = grad.norm();
  fit.converged = true;
  fit.loglik_trace = std::move(trace);
  fit.notes = design.log;
  return fit;
}

FitResult probit_fit(const MatrixXd& X, const VectorXd& y, std::vector<std::string> names,
                     const ProbitOptions& opts) {
  return probit_fit(DesignMatrix::from_dense(X, y, std::move(names)), opts);
}

FirstStageResult first_stage(const DesignMatrix& exogenous, const MatrixXd& instruments,
                             std::span<const std::string> instrument_names, const MatrixXd& endogenous,
                             std::span<const std::string> endogenous_names) {
  const Index n = exogenous.rows();
  const Index q = instruments.cols();
  if (instruments.rows() != n || endogenous.rows() != n) throw Error("first_stage: row count mismatch");
  if (static_cast<std::size_t>(q) != instrument_names.size() ||
      static_cast<std::size_t>(endogenous.cols()) != endogenous_names.size()) {
    throw Error("first_stage: name count mismatch");
  }
  if (q == 0) throw Error("weak/degenerate instrument: none supplied");

  DesignMatrix aug = exogenous;
  const Index first_z = aug.dense.cols();
  for (Index k = 0; k < q; ++k) {
    const VectorXd z = instruments.col(k);
    const double mean = z.mean();
    if ((z.array() - mean).square().sum() <= 0.0) {
      throw Error("weak/degenerate instrument: " + instrument_names[static_cast<std::size_t>(k)] +
                  " has zero variance");
    }
    aug.add_dense_column(instrument_names[static_cast<std::size_t>(k)], z);
  }

  const MatrixXd gram = aug.weighted_gram(VectorXd::Ones(n));
  std::vector<Index> xi, zi;
  for (Index j = 0; j < aug.cols(); ++j) (j >= first_z && j < first_z + q ? zi : xi).push_back(j);
  if (!xi.empty()) {
    // Schur complement of the exogenous block: instrument variation left
    // after projecting on the exogenous columns.
    const MatrixXd A = gram(xi, xi);
    const MatrixXd B = gram(xi, zi);
    const MatrixXd C = gram(zi, zi);
    const Eigen::LDLT<MatrixXd> a(A);
    const MatrixXd S = C - B.transpose() * a.solve(B);
    const Eigen::LDLT<MatrixXd> s(S);
    const VectorXd d = s.vectorD();
    for (Index k = 0; k < q; ++k) {
      if (!(d(k) > 1e-9 * C.diagonal().maxCoeff())) {
        throw Error("weak/degenerate instrument: instruments collinear with exogenous regressors");
      }
    }
  }

  const Eigen::LDLT<MatrixXd> solver(gram);
  FirstStageResult out;
  out.endogenous.assign(endogenous_names.begin(), endogenous_names.end());
  out.regressors = aug.names();
  const Index m = endogenous.cols();
  out.coefficients.resize(aug.cols(), m);
  out.fitted.resize(n, m);
  out.residuals.resize(n, m);
  out.r2.resize(m);
  for (Index k = 0; k < m; ++k) {
    const VectorXd e = endogenous.col(k);
    const VectorXd coef = solver.solve(aug.transpose_multiply(e));
    out.coefficients.col(k) = coef;
    out.fitted.col(k) = aug.multiply(coef);
    out.residuals.col(k) = e - out.fitted.col(k);
    const double tss = (e.array() - e.mean()).square().sum();
    const double rss = out.residuals.col(k).squaredNorm();
    out.r2(k) = tss > 0.0 ? 1.0 - rss / tss : 1.0;
  }
  return out;
}

namespace {

FitResult two_sri_once(const DesignMatrix& design, std::span<const std::string> endogenous,
                       const ProbitOptions& opts) {
  std::vector<Index> idx;
  MatrixXd endog(design.rows(), static_cast<Index>(endogenous.size()));
  for (std::size_t k = 0; k < endogenous.size(); ++k) {
    auto j = design.column(endogenous[k]);
    if (!j) throw Error("two_sri_fit: no column " + endogenous[k]);
    idx.push_back(*j);
    endog.col(static_cast<Index>(k)) = design.column_values(*j);
  }
  const DesignMatrix exog = design.drop_columns(idx);
  const auto fs = first_stage(exog, design.instruments, design.instrument_names, endog, endogenous);

  DesignMatrix second = design;
  for (std::size_t k = 0; k < endogenous.size(); ++k) {
    const VectorXd r = fs.residuals.col(static_cast<Index>(k));
    const double ref = std::max(1.0, endog.col(static_cast<Index>(k)).squaredNorm());
    const std::string name = "resid_" + endogenous[k];
    if (r.squaredNorm() <= 1e-20 * ref) {
      second.log.push_back("pruned zero-variance residual column " + name);
      continue;
    }
    second.add_dense_column(name, r);
  }
  FitResult fit = probit_fit(second, opts);
  fit.model = "2sri";
  return fit;
}

}  // namespace

FitResult two_sri_fit(const DesignMatrix& design, std::span<const std::string> endogenous,
                      const TwoSriOptions& opts) {
  FitResult fit = two_sri_once(design, endogenous, opts.probit);
  if (opts.bootstrap <= 0) {
    fit.notes.push_back("standard errors are naive (not corrected for first-stage estimation)");
    return fit;
  }

  std::map<SubscriberId, std::vector<Index>> groups;
  for (Index i = 0; i < design.rows(); ++i) groups[design.row_ids[static_cast<std::size_t>(i)]].push_back(i);
  std::vector<const std::vector<Index>*> members;
  for (const auto& [id, rows] : groups) members.push_back(&rows);

  const Index p = fit.beta.size();
  std::vector<std::vector<double>> draws(static_cast<std::size_t>(p));
  Rng rng(mix_seed(opts.seed, 0x2a1));
  int ok = 0;
  for (int b = 0; b < opts.bootstrap; ++b) {
    std::vector<Index> rows;
    for (std::size_t g = 0; g < members.size(); ++g) {
      const auto& pick = *members[rng.index(members.size())];
      rows.insert(rows.end(), pick.begin(), pick.end());
    }
    try {
      DesignMatrix sub = design.select_rows(rows);
      prune_collinear(sub);
      const FitResult r = two_sri_once(sub, endogenous, opts.probit);
      for (Index j = 0; j < p; ++j) {
        if (auto k = r.index(fit.names[static_cast<std::size_t>(j)])) {
          draws[static_cast<std::size_t>(j)].push_back(r.beta(*k));
        }
      }
      ++ok;
    } catch (const Error&) {
      // replicate lost to separation or a degenerate resample
    }
  }
  for (Index j = 0; j < p; ++j) {
    const auto& d = draws[static_cast<std::size_t>(j)];
    if (d.size() < 2) {
      fit.se(j) = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double mean = 0.0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(d.size());
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    fit.se(j) = std::sqrt(ss / static_cast<double>(d.size() - 1));
  }
  fit.se_corrected = true;
  fit.bootstrap_replicates = ok;
  fit.notes.push_back("bootstrap standard errors from " + std::to_string(ok) + " of " +
                      std::to_string(opts.bootstrap) + " subscriber-level replicates");
  return fit;
}

}  // namespace corepulse
