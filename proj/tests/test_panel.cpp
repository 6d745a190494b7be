#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "corepulse/design.hpp"
#include "corepulse/econ.hpp"
#include "corepulse/panel.hpp"
#include "corepulse/synth.hpp"
#include "helpers.hpp"

using namespace corepulse;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Inputs {
  SocialGraph graph;
  std::vector<CoreLabel> labels;
  std::map<SubscriberId, Month> adoptions;
  ProfileTable profiles;
  std::vector<Community> communities;
  StudyWindow window;
};

// random graph on 1..n; ids above `labeled` stay unlabeled
Inputs random_inputs(std::uint64_t seed, int n = 40, int labeled = 32) {
  Rng rng(seed);
  Inputs in;
  in.graph = testing::random_graph(n, 0.12, rng);
  for (SubscriberId id = 1; id <= labeled; ++id) {
    const int count = static_cast<int>(rng.index(8));
    in.labels.push_back({id, count, count >= 5});
  }
  for (SubscriberId id = 1; id <= n; ++id) {
    in.profiles[id] = testing::random_profile(id, rng);
    if (rng.bernoulli(0.5)) in.adoptions[id] = in.window.at(1 + static_cast<int>(rng.index(11)));
  }
  for (int c = 0; c < 4; ++c) {
    Community com;
    for (SubscriberId id = 1; id <= n; ++id)
      if (rng.bernoulli(0.2)) com.members.push_back(id);
    in.communities.push_back(com);
  }
  return in;
}

Panel panel_of(const Inputs& in) {
  return build_panel(in.graph, in.labels, in.adoptions, in.profiles, in.communities, in.window);
}

bool labeled(const Inputs& in, SubscriberId id) {
  return std::any_of(in.labels.begin(), in.labels.end(), [&](const CoreLabel& l) { return l.node == id; });
}

bool core_of(const Inputs& in, SubscriberId id) {
  for (const auto& l : in.labels)
    if (l.node == id) return l.is_core;
  return false;
}

int adopt_index(const Inputs& in, SubscriberId id) {
  auto it = in.adoptions.find(id);
  return it == in.adoptions.end() ? 1000 : in.window.index_of(it->second);
}

// triple loop over (i, j, k) on labeled ids
InstrumentValues oracle_instruments(const Inputs& in, SubscriberId i, int t) {
  std::set<SubscriberId> zc, zp;
  for (const auto& lj : in.labels) {
    const auto j = lj.node;
    if (!in.graph.has_edge(i, j)) continue;
    for (const auto& lk : in.labels) {
      const auto k = lk.node;
      if (k == i || !in.graph.has_edge(j, k) || in.graph.has_edge(i, k)) continue;
      if (adopt_index(in, k) >= t) continue;
      (lj.is_core ? zc : zp).insert(k);
    }
  }
  return {static_cast<int>(zc.size()), static_cast<int>(zp.size())};
}

}  // namespace

TEST_CASE("panel rows follow the hazard construction") {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto in = random_inputs(seed);
    const auto panel = panel_of(in);

    std::size_t expected_rows = 0;
    for (const auto& l : in.labels) {
      const int a = adopt_index(in, l.node);
      expected_rows += static_cast<std::size_t>(std::min(a, in.window.length()));
    }
    CHECK(panel.rows.size() == expected_rows);

    std::map<SubscriberId, int> last_t;
    for (const auto& r : panel.rows) {
      CHECK(labeled(in, r.id));
      const int a = adopt_index(in, r.id);
      CHECK(r.t <= std::min(a, in.window.length()));
      CHECK(r.adopted == (r.t == a ? 1 : 0));
      CHECK(r.t == last_t[r.id] + 1);
      last_t[r.id] = r.t;

      int core_lag = 0, peri_lag = 0, core_deg = 0, peri_deg = 0;
      for (const auto& l : in.labels) {
        if (!in.graph.has_edge(r.id, l.node)) continue;
        (l.is_core ? core_deg : peri_deg) += 1;
        if (adopt_index(in, l.node) < r.t) (l.is_core ? core_lag : peri_lag) += 1;
      }
      CHECK(r.core_frd_adopt_lag == core_lag);
      CHECK(r.peri_frd_adopt_lag == peri_lag);
      CHECK(r.core_frd == core_deg);
      CHECK(r.peri_frd == peri_deg);
      CHECK(r.core_frd_adopt_lag <= r.core_frd);
      CHECK(r.peri_frd_adopt_lag <= r.peri_frd);
    }
  }
}

TEST_CASE("friend degrees add up to the labeled degree") {
  const auto in = random_inputs(5);
  const auto panel = panel_of(in);
  std::vector<SubscriberId> ids;
  for (const auto& l : in.labels) ids.push_back(l.node);
  const auto sub = in.graph.induced(ids);
  for (const auto& r : panel.rows) {
    const auto idx = sub.index_of(r.id);
    const std::size_t deg = idx ? sub.degree(*idx) : 0;
    CHECK(static_cast<std::size_t>(r.core_frd + r.peri_frd) == deg);
  }
}

TEST_CASE("panel has no look-ahead") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    auto in = random_inputs(seed);
    const auto base = panel_of(in);
    const int cutoff = 1 + static_cast<int>(seed % 10);
    auto later = in;
    for (auto it = later.adoptions.begin(); it != later.adoptions.end();) {
      if (in.window.index_of(it->second) >= cutoff) {
        it = later.adoptions.erase(it);
      } else {
        ++it;
      }
    }
    const auto other = panel_of(later);
    std::map<std::pair<SubscriberId, int>, const PanelRow*> index;
    for (const auto& r : other.rows) index[{r.id, r.t}] = &r;
    for (const auto& r : base.rows) {
      if (r.t > cutoff) continue;
      auto it = index.find({r.id, r.t});
      REQUIRE(it != index.end());
      CHECK(it->second->core_frd_adopt_lag == r.core_frd_adopt_lag);
      CHECK(it->second->peri_frd_adopt_lag == r.peri_frd_adopt_lag);
      CHECK(it->second->z_core == r.z_core);
      CHECK(it->second->z_peri == r.z_peri);
    }
  }
}

TEST_CASE("instruments match the triple loop") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto in = random_inputs(100 + seed, 50, 45);
    const auto panel = panel_of(in);
    for (const auto& r : panel.rows) {
      const auto z = oracle_instruments(in, r.id, r.t);
      CHECK(r.z_core == z.z_core);
      CHECK(r.z_peri == z.z_peri);
    }
  }
}

TEST_CASE("instrument on a path") {
  // 1 - 2 - 3 with 2 core; 3 adopts in month 2
  Inputs in;
  in.graph = testing::graph_of({{1, 2}, {2, 3}}, {1, 2, 3});
  in.labels = {{1, 0, false}, {2, 6, true}, {3, 1, false}};
  in.adoptions[3] = in.window.at(2);
  for (SubscriberId id = 1; id <= 3; ++id) in.profiles[id].id = id;
  const auto panel = panel_of(in);
  std::vector<int> z1;
  for (const auto& r : panel.rows)
    if (r.id == 1) z1.push_back(r.z_core);
  REQUIRE(z1.size() == 11);
  CHECK(z1[0] == 0);
  CHECK(z1[1] == 0);
  CHECK(z1[2] == 1);
  CHECK(z1[10] == 1);
}

TEST_CASE("adoption outside the window is rejected") {
  auto in = random_inputs(1);
  in.adoptions[1] = Month{2010, 1};
  CHECK_THROWS_WITH_AS(panel_of(in), doctest::Contains("subscriber 1"), Error);
}

TEST_CASE("stratify splits by own label") {
  const auto in = random_inputs(9);
  const auto panel = panel_of(in);
  const auto [core, peri] = stratify(panel, in.labels);
  CHECK(core.rows.size() + peri.rows.size() == panel.rows.size());
  for (const auto& r : core.rows) CHECK(core_of(in, r.id));
  for (const auto& r : peri.rows) CHECK_FALSE(core_of(in, r.id));
  const std::vector<CoreLabel> partial(in.labels.begin(), in.labels.begin() + 3);
  CHECK_THROWS_AS(stratify(panel, partial), Error);
}

TEST_CASE("panel csv round trip") {
  const auto in = random_inputs(21);
  const auto panel = panel_of(in);
  std::stringstream ss;
  write_panel_csv(ss, panel);
  const auto back = read_panel_csv(ss, in.window);
  REQUIRE(back.rows.size() == panel.rows.size());
  std::stringstream again;
  write_panel_csv(again, back);
  std::stringstream first;
  write_panel_csv(first, panel);
  CHECK(again.str() == first.str());
  for (std::size_t i = 0; i < panel.rows.size(); ++i) {
    CHECK(back.rows[i].communities == panel.rows[i].communities);
    CHECK(back.rows[i].region == panel.rows[i].region);
    CHECK(back.rows[i].phone == panel.rows[i].phone);
    CHECK(back.rows[i].gender == panel.rows[i].gender);
  }
  std::stringstream bad("id,month\n");
  CHECK_THROWS_AS(read_panel_csv(bad, in.window), Error);
}

// ---------------------------------------------------------------------------
// design matrix

namespace {

Panel small_panel() {
  Rng rng(17);
  Panel p;
  const std::vector<std::string> regions = {"B", "A", "C"};
  for (int i = 0; i < 30; ++i) {
    const double tenure = rng.uniform(0.0, 24.0);
    const double phone_age = rng.uniform(0.0, 3.0);
    const auto gender = static_cast<Gender>(rng.index(3));
    const auto phone = static_cast<PhoneTechnology>(rng.index(5));
    const bool prepaid = rng.bernoulli(0.5), internet = rng.bernoulli(0.3);
    for (int t = 1; t <= 3; ++t) {
      PanelRow r;
      r.id = i + 1;
      r.t = t;
      r.adopted = (t == 3 && i % 2 == 0) ? 1 : 0;
      r.core_frd_adopt_lag = static_cast<int>(rng.index(4));
      r.peri_frd_adopt_lag = static_cast<int>(rng.index(6));
      r.core_frd = 3 + static_cast<int>(rng.index(3));
      r.peri_frd = 5 + static_cast<int>(rng.index(5));
      r.gender = gender;
      r.prepaid = prepaid;
      r.phone = phone;
      r.mobile_internet = internet;
      r.phone_age = phone_age;
      r.tenure_months = tenure + t;
      r.region = regions[static_cast<std::size_t>(i % 3)];
      r.communities = {i < 4 ? 1 : i < 8 ? 2 : 0, i < 15 ? 3 : 4};
      r.z_core = static_cast<int>(rng.index(5));
      r.z_peri = static_cast<int>(rng.index(9));
      p.rows.push_back(r);
    }
  }
  return p;
}

}  // namespace

TEST_CASE("design drops reference levels") {
  const auto p = small_panel();
  Formula f;
  f.community_effects = false;
  const auto d = to_design_matrix(p, f);
  const auto names = d.names();
  auto has = [&](const std::string& n) { return std::find(names.begin(), names.end(), n) != names.end(); };
  CHECK(names.front() == "intercept");
  CHECK_FALSE(has("region_A"));
  CHECK(has("region_B"));
  CHECK(has("region_C"));
  CHECK_FALSE(has("month_2008-08"));
  CHECK(has("month_2008-09"));
  CHECK(d.instruments.cols() == 2);
  CHECK(d.rows() == 90);
  CHECK(d.row_ids.size() == 90);
  REQUIRE(d.column("region_B"));
  CHECK(d.column_values(*d.column("region_B")).sum() == 30.0);
}

TEST_CASE("design prunes zero and collinear columns") {
  auto p = small_panel();
  for (auto& r : p.rows) r.mobile_internet = false;  // all-zero column
  for (auto& r : p.rows) r.phone_age = 2.0 * r.tenure_months;  // collinear with tenure_t after
  Formula f;
  f.community_effects = false;
  const auto d = to_design_matrix(p, f);
  CHECK_FALSE(d.column("mobile_internet"));
  CHECK(d.column("phone_age"));
  CHECK_FALSE(d.column("tenure_t"));
  bool zero_logged = false, collinear_logged = false;
  for (const auto& line : d.log) {
    zero_logged |= line.find("all-zero column mobile_internet") != std::string::npos;
    collinear_logged |= line.find("collinear column tenure_t") != std::string::npos;
  }
  CHECK(zero_logged);
  CHECK(collinear_logged);
  const MatrixXd X = d.to_dense();
  Eigen::FullPivLU<MatrixXd> lu(X);
  CHECK(lu.rank() == X.cols());
}

TEST_CASE("design rejects a constant response") {
  auto p = small_panel();
  for (auto& r : p.rows) r.adopted = 0;
  CHECK_THROWS_WITH_AS(to_design_matrix(p), doctest::Contains("degenerate response"), Error);
}

TEST_CASE("community dummies are multi-hot and respect the size floor") {
  const auto p = small_panel();
  Formula f;
  f.region_effects = false;
  f.month_effects = false;
  const auto d = to_design_matrix(p, f);
  // community 0 is the reference; 3 and 4 together span every row, so 4 is pruned
  CHECK_FALSE(d.column("community_0"));
  REQUIRE(d.column("community_3"));
  CHECK_FALSE(d.column("community_4"));
  CHECK(d.column_values(*d.column("community_3")).sum() == 45.0);

  Formula floor = f;
  floor.min_community_subscribers = 5;  // communities 1 and 2 hold four subscribers each
  const auto e = to_design_matrix(p, floor);
  CHECK_FALSE(e.column("community_1"));
  CHECK_FALSE(e.column("community_2"));
  CHECK(e.column("community_3"));
}

TEST_CASE("weighted gram equals the dense product") {
  Rng rng(4);
  const auto p = small_panel();
  const auto d = to_design_matrix(p);
  VectorXd w(d.rows());
  for (Index i = 0; i < w.size(); ++i) w(i) = rng.uniform(0.1, 2.0);
  const MatrixXd X = d.to_dense();
  const MatrixXd dense = X.transpose() * w.asDiagonal() * X;
  CHECK((d.weighted_gram(w) - dense).cwiseAbs().maxCoeff() < 1e-10 * dense.cwiseAbs().maxCoeff());

  VectorXd beta(d.cols());
  for (Index j = 0; j < beta.size(); ++j) beta(j) = rng.normal();
  CHECK((d.multiply(beta) - X * beta).norm() < 1e-10);
  CHECK((d.transpose_multiply(w) - X.transpose() * w).norm() < 1e-10);
}

TEST_CASE("select_rows and drop_columns keep blocks aligned") {
  const auto d = to_design_matrix(small_panel());
  const std::vector<Index> rows = {0, 5, 5, 89};
  const auto s = d.select_rows(rows);
  const MatrixXd X = d.to_dense();
  CHECK(s.to_dense() == X(rows, Eigen::all));
  CHECK(s.response(1) == d.response(5));
  CHECK(s.instruments.row(3) == d.instruments.row(89));
  CHECK(s.row_ids[2] == d.row_ids[5]);

  const std::vector<Index> cols = {1, d.cols() - 1};
  const auto c = d.drop_columns(cols);
  CHECK(c.cols() == d.cols() - 2);
  std::vector<Index> keep;
  for (Index j = 0; j < d.cols(); ++j)
    if (j != 1 && j != d.cols() - 1) keep.push_back(j);
  CHECK(c.to_dense() == X(Eigen::all, keep));
}

TEST_CASE("drop_perfect_predictors removes separating dummies and their rows") {
  MatrixXd X(8, 3);
  VectorXd y(8);
  // column 2 is 1 only where y = 1
  X << 1, 0.3, 0,
       1, 1.2, 0,
       1, -0.4, 1,
       1, 0.8, 1,
       1, 0.1, 0,
       1, -1.0, 0,
       1, 0.5, 0,
       1, 2.0, 0;
  y << 0, 1, 1, 1, 0, 1, 0, 0;
  auto d = DesignMatrix::from_dense(X, y, {"intercept", "x", "flag"});
  const auto out = drop_perfect_predictors(d);
  CHECK_FALSE(out.column("flag"));
  CHECK(out.rows() == 6);
  CHECK(out.log.back().find("flag") != std::string::npos);

  const std::vector<std::string> keep = {"flag"};
  const auto kept = drop_perfect_predictors(d, keep);
  CHECK(kept.column("flag"));
  CHECK(kept.rows() == 8);
}

TEST_CASE("instrument residual is insignificant without social effects") {
  int quiet = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    GenConfig cfg;
    cfg.seed = seed;
    cfg.n_nodes = 1000;
    cfg.adoption.beta_core = 0.0;
    cfg.adoption.beta_peri = 0.0;
    cfg.adoption.beta0 = -3.0;
    cfg.sigma_u = 0.0;
    const auto pop = simulate(cfg);
    std::vector<Community> comms;
    for (const auto& c : pop.truth.communities) comms.push_back({0, c});
    std::vector<CoreLabel> labels;
    for (const auto& [id, c] : pop.truth.memberships) labels.push_back({id, c, c >= 5});
    const auto panel = build_panel(pop.graph, labels, pop.truth.adoptions, make_profile_table(pop.profiles),
                                   comms, cfg.window);
    const auto peri = stratify(panel, labels).second;
    Formula f;
    f.community_effects = false;
    const std::vector<std::string> endo = {"core_frd_adopt_lag", "peri_frd_adopt_lag"};
    const auto d = drop_perfect_predictors(to_design_matrix(peri, f), endo);
    const auto fit = two_sri_fit(d, endo);
    const auto j = *fit.index("resid_peri_frd_adopt_lag");
    quiet += std::abs(fit.z(j)) < 2.0;
  }
  CHECK(quiet >= 9);
}
