// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "corepulse/community.hpp"
#include "corepulse/coreperi.hpp"
#include "corepulse/design.hpp"
#include "corepulse/econ.hpp"
#include "corepulse/panel.hpp"
#include "corepulse/synth.hpp"
#include "helpers.hpp"

using namespace corepulse;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// 1

template <typename M>
long double rel_err(const M& analytic, const M& numeric) {
  const long double scale = std::max<long double>(numeric.cwiseAbs().maxCoeff(), 1e-12L);
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

Outcome gradients() {
  using LM = MatrixX<long double>;
  using LV = VectorX<long double>;
  const auto t0 = Clock::now();
  Rng rng(101);
  long double worst_probit = 0, worst_cesna = 0;
  const long double h = 1e-6L;
  for (int inst = 0; inst < 20; ++inst) {
    const int n = 30 + static_cast<int>(rng.index(40)), p = 2 + static_cast<int>(rng.index(4));
    LM X(n, p);
    LV y(n), beta(p);
    for (int i = 0; i < n; ++i) {
      X(i, 0) = 1;
      for (int j = 1; j < p; ++j) X(i, j) = static_cast<long double>(rng.normal());
      y(i) = rng.bernoulli(0.4) ? 1 : 0;
    }
    for (int j = 0; j < p; ++j) beta(j) = static_cast<long double>(rng.normal(0.0, 0.6));
    LV fd(p);
    for (int j = 0; j < p; ++j) {
      LV a = beta, b = beta;
      a(j) += h;
      b(j) -= h;
      fd(j) = (probit_loglik(X, y, a) - probit_loglik(X, y, b)) / (2 * h);
    }
    worst_probit = std::max(worst_probit, rel_err(probit_gradient(X, y, beta), fd));
  }
  for (int inst = 0; inst < 20; ++inst) {
    const int n = 5 + static_cast<int>(rng.index(16)), k = 1 + static_cast<int>(rng.index(4));
    const int attrs = 3 + static_cast<int>(rng.index(5));
    MatrixXd adj = MatrixXd::Zero(n, n), x(n, attrs);
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v)
        if (rng.bernoulli(0.3)) adj(u, v) = adj(v, u) = 1;
    for (int u = 0; u < n; ++u)
      for (int a = 0; a < attrs; ++a) x(u, a) = rng.bernoulli(0.4);
    const auto data = AffiliationData::full(adj, x);
    AffiliationModel<long double> m;
    m.F = LM(n, k);
    m.W = LM(attrs, k);
    m.b = LV(attrs);
    for (int u = 0; u < n; ++u)
      for (int c = 0; c < k; ++c) m.F(u, c) = 0.05L + static_cast<long double>(rng.uniform());
    for (int a = 0; a < attrs; ++a) {
      for (int c = 0; c < k; ++c) m.W(a, c) = static_cast<long double>(rng.normal());
      m.b(a) = static_cast<long double>(rng.normal());
    }
    m.lambda = 1;
    m.rho = 0;  // the L1 term has no derivative at 0
    const auto smooth = [&](const AffiliationModel<long double>& mm) { return objective(mm, data); };
    LM fdF(n, k), fdW(attrs, k);
    LV fdb(attrs);
    for (int u = 0; u < n; ++u)
      for (int c = 0; c < k; ++c) {
        auto a = m, b = m;
        a.F(u, c) += h;
        b.F(u, c) -= h;
        fdF(u, c) = (smooth(a) - smooth(b)) / (2 * h);
      }
    for (int a = 0; a < attrs; ++a) {
      for (int c = 0; c < k; ++c) {
        auto p = m, q = m;
        p.W(a, c) += h;
        q.W(a, c) -= h;
        fdW(a, c) = (smooth(p) - smooth(q)) / (2 * h);
      }
      auto p = m, q = m;
      p.b(a) += h;
      q.b(a) -= h;
      fdb(a) = (smooth(p) - smooth(q)) / (2 * h);
    }
    const auto ag = attribute_gradient(m, data);
    const LM gF = graph_gradient(m.F, data) + ag.F;
    worst_cesna = std::max({worst_cesna, rel_err(gF, fdF), rel_err(LM(ag.W), fdW), rel_err(LV(ag.b), fdb)});
  }
  const double secs = seconds_since(t0);
  return {worst_probit < 1e-5L && worst_cesna < 1e-5L && secs < 30.0,
          fmt("max rel err probit %.2e, affiliation objective %.2e; %.1f s", static_cast<double>(worst_probit),
              static_cast<double>(worst_cesna), secs)};
}

// ---------------------------------------------------------------------------
// 2

Outcome probit_oracle() {
  Rng rng(202);
  const int n = 50;
  MatrixXd X(n, 2);
  VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = rng.normal();
    y(i) = -0.2 + 0.9 * X(i, 1) + rng.normal() > 0 ? 1.0 : 0.0;
  }
  const auto fit = probit_fit(X, y, {"intercept", "x"});
  auto ll = [&](double a, double b) {
    VectorXd beta(2);
    beta << a, b;
    return probit_loglik<double>(X, y, beta);
  };
  // exhaustive 1e-2 grid over [-3,3]^2, then exhaustive 1e-3 grid around its argmax
  double best = -1e300, ba = 0, bb = 0;
  for (int i = -300; i <= 300; ++i)
    for (int j = -300; j <= 300; ++j)
      if (const double v = ll(i * 0.01, j * 0.01); v > best) best = v, ba = i * 0.01, bb = j * 0.01;
  const double ca = ba, cb = bb;
  for (int i = -30; i <= 30; ++i)
    for (int j = -30; j <= 30; ++j)
      if (const double v = ll(ca + i * 0.001, cb + j * 0.001); v > best) best = v, ba = ca + i * 0.001, bb = cb + j * 0.001;
  const double d0 = std::abs(fit.beta(0) - ba), d1 = std::abs(fit.beta(1) - bb);

  VectorXd half(10);
  half << 1, 0, 1, 0, 1, 0, 1, 0, 1, 0;
  const double b0 = probit_fit(MatrixXd::Ones(10, 1), half, {"intercept"}).beta(0);
  return {d0 <= 1e-3 && d1 <= 1e-3 && std::abs(b0) <= 1e-8,
          fmt("newton (%.4f, %.4f) vs grid (%.3f, %.3f); half-ones beta0 = %.1e", fit.beta(0), fit.beta(1), ba, bb,
              b0)};
}

// ---------------------------------------------------------------------------
// 3

Outcome community_recovery() {
  const auto t0 = Clock::now();
  const std::vector<int> grid = {1, 2, 3, 4, 5};
  double f1_sum = 0;
  int picks = 0;
  std::string ks;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto inst = sample_planted(PlantedOptions{}, seed);
    const auto sel = select_k(inst.data, grid, 3, mix_seed(seed, 1));
    picks += sel.best_k == 3;
    ks += std::to_string(sel.best_k);
    const auto f = fit(inst.data, sel.best_k, mix_seed(seed, 2));
    std::vector<SubscriberId> ids(100);
    for (int u = 0; u < 100; ++u) ids[static_cast<std::size_t>(u)] = u;
    const auto edges = static_cast<std::size_t>(inst.data.adjacency.sum() / 2);
    std::vector<std::vector<SubscriberId>> detected;
    for (const auto& c : extract(f.model.F, ids, edges, 0)) detected.push_back(c.members);
    f1_sum += best_match_f1(detected, inst.communities);
  }
  const double secs = seconds_since(t0);
  const double f1 = f1_sum / 10.0;
  return {f1 >= 0.75 && picks >= 6 && secs < 120.0,
          fmt("mean F1 %.3f, K=3 chosen %d/10 (picks %s); %.1f s", f1, picks, ks.c_str(), secs)};
}

// ---------------------------------------------------------------------------
// 4 and 5 share the planted population

struct PlantedEstimates {
  double iv_core, iv_core_se, iv_peri, iv_peri_se, naive_core, naive_peri, seconds;
};

PlantedEstimates planted_estimates(std::uint64_t seed) {
  const auto t0 = Clock::now();
  GenConfig cfg;
  cfg.seed = seed;
  const auto pop = simulate(cfg);
  std::vector<Community> comms;
  for (const auto& c : pop.truth.communities) comms.push_back({0, c});
  std::vector<CoreLabel> labels;
  for (const auto& [id, c] : pop.truth.memberships)
    if (pop.graph.contains(id)) labels.push_back({id, c, c >= 5});
  const auto panel =
      build_panel(pop.graph, labels, pop.truth.adoptions, make_profile_table(pop.profiles), comms, cfg.window);
  const auto peri = stratify(panel, labels).second;
  const std::vector<std::string> endo = {"core_frd_adopt_lag", "peri_frd_adopt_lag"};

  const auto with = drop_perfect_predictors(to_design_matrix(peri, Formula{}), endo);
  const auto iv = two_sri_fit(with, endo);
  Formula naive_formula;
  naive_formula.community_effects = false;
  const auto naive = probit_fit(drop_perfect_predictors(to_design_matrix(peri, naive_formula), endo));
  return {iv.coef(endo[0]),    iv.std_error(endo[0]),  iv.coef(endo[1]), iv.std_error(endo[1]),
          naive.coef(endo[0]), naive.coef(endo[1]), seconds_since(t0)};
}

std::vector<PlantedEstimates> planted_runs() {
  std::vector<PlantedEstimates> out;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) out.push_back(planted_estimates(seed));
  return out;
}

Outcome asymmetry(const std::vector<PlantedEstimates>& runs) {
  const GenConfig truth;
  int covered = 0, ordered = 0;
  double slowest = 0;
  std::string detail;
  for (const auto& r : runs) {
    covered += std::abs(r.iv_core - truth.adoption.beta_core) <= 2 * r.iv_core_se &&
               std::abs(r.iv_peri - truth.adoption.beta_peri) <= 2 * r.iv_peri_se;
    ordered += r.iv_core > r.iv_peri;
    slowest = std::max(slowest, r.seconds);
    detail += fmt(" %.2f(%.2f)/%.3f(%.3f)", r.iv_core, r.iv_core_se, r.iv_peri, r.iv_peri_se);
  }
  return {covered >= 9 && ordered >= 9 && slowest < 300.0,
          fmt("both within 2 SE in %d/10, core > peri in %d/10, slowest seed %.1f s; core/peri:", covered, ordered,
              slowest) +
              detail};
}

Outcome confounding(const std::vector<PlantedEstimates>& runs) {
  int above = 0;
  std::string detail;
  for (const auto& r : runs) {
    above += r.naive_core > r.iv_core;
    detail += fmt(" %.3f/%.3f", r.naive_core, r.iv_core);
  }
  return {above >= 8, fmt("naive core coefficient above 2SRI in %d/10; naive/2SRI:", above) + detail};
}

// ---------------------------------------------------------------------------
// 6 and 7

struct PanelInputs {
  SocialGraph graph;
  std::vector<CoreLabel> labels;
  std::map<SubscriberId, Month> adoptions;
  ProfileTable profiles;
  std::vector<Community> communities;
  StudyWindow window;
  std::map<SubscriberId, bool> core;

  int adopt(SubscriberId id) const {
    auto it = adoptions.find(id);
    return it == adoptions.end() ? 1000 : window.index_of(it->second);
  }
  Panel panel() const { return build_panel(graph, labels, adoptions, profiles, communities, window); }
};

PanelInputs random_inputs(std::uint64_t seed, int n, int labeled) {
  Rng rng(seed);
  PanelInputs in;
  in.graph = testing::random_graph(n, 0.1, rng);
  for (SubscriberId id = 1; id <= labeled; ++id) {
    const int c = static_cast<int>(rng.index(9));
    in.labels.push_back({id, c, c >= 5});
    in.core[id] = c >= 5;
  }
  for (SubscriberId id = 1; id <= n; ++id) {
    in.profiles[id] = testing::random_profile(id, rng);
    if (rng.bernoulli(0.5)) in.adoptions[id] = in.window.at(1 + static_cast<int>(rng.index(11)));
  }
  for (int c = 0; c < 3; ++c) {
    Community com;
    for (SubscriberId id = 1; id <= n; ++id)
      if (rng.bernoulli(0.25)) com.members.push_back(id);
    in.communities.push_back(com);
  }
  return in;
}

Outcome instrument_oracle() {
  std::size_t rows = 0, mismatches = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto in = random_inputs(600 + seed, 50, 50);
    for (const auto& r : in.panel().rows) {
      ++rows;
      std::set<SubscriberId> zc, zp;
      for (const auto& j : in.labels) {
        if (!in.graph.has_edge(r.id, j.node)) continue;
        for (const auto& k : in.labels) {
          if (k.node == r.id || !in.graph.has_edge(j.node, k.node) || in.graph.has_edge(r.id, k.node)) continue;
          if (in.adopt(k.node) < r.t) (j.is_core ? zc : zp).insert(k.node);
        }
      }
      mismatches += static_cast<int>(zc.size()) != r.z_core || static_cast<int>(zp.size()) != r.z_peri;
    }
  }
  return {mismatches == 0, fmt("%zu rows over 20 graphs, %zu mismatches", rows, mismatches)};
}

Outcome panel_invariants() {
  int lookahead = 0, censoring = 0, degree = 0, dedup = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto in = random_inputs(seed, 40, 34);
    const auto panel = in.panel();

    // no look-ahead: erasing adoptions from month T on leaves rows t <= T unchanged
    {
      const int cutoff = 1 + static_cast<int>(seed % 11);
      auto cut = in;
      std::erase_if(cut.adoptions, [&](const auto& kv) { return in.window.index_of(kv.second) >= cutoff; });
      std::map<std::pair<SubscriberId, int>, PanelRow> other;
      for (const auto& r : cut.panel().rows) other[{r.id, r.t}] = r;
      bool ok = true;
      for (const auto& r : panel.rows) {
        if (r.t > cutoff) continue;
        auto it = other.find({r.id, r.t});
        ok = ok && it != other.end() && it->second.core_frd_adopt_lag == r.core_frd_adopt_lag &&
             it->second.peri_frd_adopt_lag == r.peri_frd_adopt_lag && it->second.z_core == r.z_core &&
             it->second.z_peri == r.z_peri;
      }
      lookahead += ok;
    }
    // censoring: rows stop at the first adoption, which is the only positive row
    {
      std::map<SubscriberId, std::vector<const PanelRow*>> by_id;
      for (const auto& r : panel.rows) by_id[r.id].push_back(&r);
      bool ok = by_id.size() == in.labels.size();
      for (const auto& [id, rs] : by_id) {
        const int a = in.adopt(id);
        const int expect = std::min(a, in.window.length());
        ok = ok && static_cast<int>(rs.size()) == expect;
        for (std::size_t i = 0; i < rs.size(); ++i) {
          const bool last = i + 1 == rs.size();
          ok = ok && rs[i]->t == static_cast<int>(i) + 1 && rs[i]->adopted == ((last && a <= in.window.length()) ? 1 : 0);
        }
      }
      censoring += ok;
    }
    // degree accounting: core + periphery friends = labeled degree, lags bounded by them
    {
      bool ok = true;
      for (const auto& r : panel.rows) {
        int deg = 0, core = 0;
        for (const auto& l : in.labels) {
          if (!in.graph.has_edge(r.id, l.node)) continue;
          ++deg;
          core += l.is_core;
        }
        ok = ok && r.core_frd + r.peri_frd == deg && r.core_frd == core &&
             r.core_frd_adopt_lag <= r.core_frd && r.peri_frd_adopt_lag <= r.peri_frd;
      }
      degree += ok;
    }
    // dedup idempotence on random overlapping sets
    {
      Rng rng(seed * 7919);
      std::vector<Community> sets;
      for (int i = 0; i < 40; ++i) {
        Community c{static_cast<SubscriberId>(i), {}};
        const auto size = 1 + rng.index(8);
        for (std::uint64_t k = 0; k < size; ++k) c.members.push_back(static_cast<SubscriberId>(1 + rng.index(15)));
        sets.push_back(c);
      }
      const std::set<SubscriberId> adopters = {1, 2, 3, 4};
      const auto once = dedup_filter(sets, adopters);
      const auto twice = dedup_filter(once, adopters);
      bool ok = once.size() == twice.size();
      for (std::size_t i = 0; ok && i < once.size(); ++i) ok = once[i].members == twice[i].members && once[i].ego == twice[i].ego;
      dedup += ok;
    }
  }
  return {lookahead == 100 && censoring == 100 && degree == 100 && dedup == 100,
          fmt("no look-ahead %d/100, censoring %d/100, degree accounting %d/100, dedup idempotence %d/100", lookahead,
              censoring, degree, dedup)};
}

// ---------------------------------------------------------------------------
// 8

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

const std::vector<std::string> kArtifacts = {
    "cdr.csv",          "subscribers.csv",     "adoptions.csv",            "truth.json",
    "graph.csv",        "degree_hist.csv",     "home_regions.csv",         "graph_summary.json",
    "communities.json", "membership_hist.csv", "communities_summary.json", "corelabels.csv",
    "calpha.csv",       "coreperi_summary.json", "panel.csv",              "estimates.json",
    "fig1_degree.svg",  "fig2_membership.svg", "fig3_calpha.svg",          "table3.csv",
    "table3.txt"};

fs::path smoke_dir() { return fs::temp_directory_path() / "corepulse_acceptance"; }

Outcome end_to_end() {
  const auto root = smoke_dir();
  fs::remove_all(root);
  fs::create_directories(root);
  double secs[2] = {0, 0};
  for (int k = 0; k < 2; ++k) {
    const auto dir = root / (k ? "b" : "a");
    const std::string cmd = std::string("\"") + COREPULSE_BIN + "\" pipeline --config \"" + COREPULSE_CONFIG +
                            "\" --out \"" + dir.string() + "\" >\"" + (root / "log.txt").string() + "\" 2>&1";
    const auto t0 = Clock::now();
    const int status = std::system(cmd.c_str());
    secs[k] = seconds_since(t0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      return {false, "pipeline run failed: " + slurp(root / "log.txt")};
    }
  }
  int present = 0, identical = 0;
  for (const auto& name : kArtifacts) {
    const auto a = root / "a" / name;
    present += fs::exists(a) && fs::file_size(a) > 0;
    identical += slurp(a) == slurp(root / "b" / name);
  }
  const auto table = slurp(root / "a" / "table3.txt");
  const bool shaped = table.find("Core Probit [1]") != std::string::npos &&
                      table.find("Observations") != std::string::npos;
  const int total = static_cast<int>(kArtifacts.size());
  return {secs[0] < 300.0 && present == total && identical == total && shaped,
          fmt("%.1f s first run, %.1f s second; %d/%d artifacts present, %d/%d byte-identical", secs[0], secs[1],
              present, total, identical, total)};
}

// ---------------------------------------------------------------------------
// 9

double hist_mean(const std::map<int, std::size_t>& h) {
  double n = 0, s = 0;
  for (auto [k, c] : h) n += static_cast<double>(c), s += static_cast<double>(k) * static_cast<double>(c);
  return n > 0 ? s / n : 0.0;
}

int hist_mode(const std::map<int, std::size_t>& h) {
  int mode = 0;
  std::size_t best = 0;
  for (auto [k, c] : h)
    if (c > best) best = c, mode = k;
  return mode;
}

Outcome calibration() {
  const auto pop = simulate(GenConfig{});
  const auto d = degree_stats(pop.graph);
  std::vector<Community> comms;
  for (const auto& c : pop.truth.communities) comms.push_back({0, c});
  std::set<SubscriberId> adopters;
  for (const auto& [id, m] : pop.truth.adoptions) adopters.insert(id);
  const auto mc = membership_counts(comms, adopters);
  const int mode_all = hist_mode(mc.hist_all);
  const double mean_all = hist_mean(mc.hist_all), mean_ad = hist_mean(mc.hist_adopters);

  // share of nodes and adopters with two or more memberships
  auto tail = [](const std::map<int, std::size_t>& h) {
    double n = 0, t = 0;
    for (auto [k, c] : h) n += static_cast<double>(c), t += k >= 2 ? static_cast<double>(c) : 0.0;
    return t / n;
  };
  const bool ok = std::abs(d.mean - 24.1) <= 0.1 * 24.1 && std::abs(d.median - 16.0) <= 3.0 && mode_all == 1 &&
                  mean_ad > mean_all && tail(mc.hist_adopters) > tail(mc.hist_all);
  std::string detected;
  if (fs::exists(smoke_dir() / "a" / "communities_summary.json")) {
    const auto s = nlohmann::json::parse(slurp(smoke_dir() / "a" / "communities_summary.json"));
    detected = "; pipeline communities summary " + s.dump();
  }
  return {ok, fmt("degree mean %.2f median %.1f; planted memberships mode %d, mean all %.3f vs adopters %.3f", d.mean,
                  d.median, mode_all, mean_all, mean_ad) +
                  detected};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << o.detail << std::endl;
  };

  report(1, "gradient suites", gradients);
  report(2, "probit oracle", probit_oracle);
  report(3, "community recovery", community_recovery);
  std::vector<PlantedEstimates> runs;
  try {
    runs = planted_runs();
  } catch (const std::exception& e) {
    std::cout << "planted estimation failed: " << e.what() << std::endl;
  }
  report(4, "asymmetry recovery", [&] { return runs.size() == 10 ? asymmetry(runs) : Outcome{false, "no runs"}; });
  report(5, "confounding direction", [&] { return runs.size() == 10 ? confounding(runs) : Outcome{false, "no runs"}; });
  report(6, "instrument oracle", instrument_oracle);
  report(7, "panel invariants", panel_invariants);
  report(8, "end-to-end smoke", end_to_end);
  report(9, "generator calibration", calibration);
  fs::remove_all(smoke_dir());
  std::cout << (9 - failed) << "/9 criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
