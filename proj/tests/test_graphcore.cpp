#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "corepulse/error.hpp"
#include "corepulse/graphcore.hpp"
#include "helpers.hpp"

using namespace corepulse;
using testing::call;
using testing::graph_of;

namespace {

CdrParseResult parse(const std::string& body, std::optional<StudyWindow> w = std::nullopt) {
  std::istringstream in("caller_id,callee_id,timestamp,cell_region\n" + body);
  return parse_cdr(in, w);
}

std::set<Edge> edge_set(const std::vector<Edge>& es) { return {es.begin(), es.end()}; }

}  // namespace

TEST_CASE("parse_cdr reads well-formed rows") {
  const auto r = parse(
      "1,2,2008-09-03T10:00:00,R1\n"
      "2,1,2008-09-01T09:00:00,R2\n"
      "3,1,2008-10-01,\n");
  CHECK(r.events.size() == 3);
  CHECK(r.skipped == 0);
  // sorted by timestamp
  CHECK(r.events[0].caller == 2);
  CHECK(r.events[1].caller == 1);
  CHECK(r.events[2].cell_region.empty());
}

TEST_CASE("parse_cdr drops self calls, malformed rows and out-of-window rows") {
  const auto r = parse(
      "1,1,2008-09-03T10:00:00,R1\n"
      "1,2,2008-09-03T10:00:00,R1\n"
      "x,2,2008-09-03T10:00:00,R1\n"
      "1,2,not-a-date,R1\n"
      "1,2,2008-09-03\n"
      "1,2,2010-01-01T00:00:00,R1\n",
      StudyWindow{});
  CHECK(r.events.size() == 1);
  CHECK(r.skipped == 5);
  CHECK(r.skip_reasons.at("self_call") == 1);
  CHECK(r.skip_reasons.at("malformed") == 3);
  CHECK(r.skip_reasons.at("window") == 1);
}

TEST_CASE("parse_cdr hard errors") {
  std::istringstream bad("a,b,c\n1,2,2008-09-01,R1\n");
  CHECK_THROWS_AS(parse_cdr(bad), Error);
  CHECK_THROWS_WITH_AS(parse("1,1,2008-09-01,R1\n"), doctest::Contains("zero valid rows"), Error);
  CHECK_THROWS_AS(read_cdr_file("/nonexistent/cdr.csv"), MissingInputError);
}

TEST_CASE("cdr write/parse round trip") {
  std::vector<CallEvent> ev = {call(5, 7, "2008-08-02T01:02:03", "R9"), call(7, 5, "2008-08-05T00:00:00")};
  std::ostringstream out;
  write_cdr(out, ev);
  std::istringstream in(out.str());
  const auto r = parse_cdr(in);
  REQUIRE(r.events.size() == 2);
  CHECK(r.events[0].timestamp.key == ev[0].timestamp.key);
  CHECK(r.events[0].cell_region == "R9");
  CHECK(r.events[1].callee == 5);
}

TEST_CASE("build_graph reciprocity rules") {
  const Month jan{2009, 1};
  SUBCASE("both directions in the same month") {
    std::vector<CallEvent> ev = {call(1, 2, "2009-01-03"), call(2, 1, "2009-01-20")};
    const auto g = build_graph(ev);
    REQUIRE(g.edge_count() == 1);
    CHECK(g.monthly_layers().at(jan.serial()).size() == 1);
    CHECK(g.has_edge(1, 2));
    CHECK(g.has_edge(2, 1));
  }
  SUBCASE("directions in different months") {
    std::vector<CallEvent> ev = {call(1, 2, "2009-01-03"), call(2, 1, "2009-02-03")};
    CHECK(build_graph(ev).edge_count() == 0);
    CHECK(build_graph(ev, ReciprocityRule::any_direction_same_month).edge_count() == 1);
  }
  SUBCASE("one-directional bulk caller") {
    std::vector<CallEvent> ev;
    for (int v = 2; v < 200; ++v) ev.push_back(call(1, v, "2009-01-05"));
    CHECK(build_graph(ev).edge_count() == 0);
  }
  SUBCASE("empty input") { CHECK(build_graph({}).empty()); }
}

TEST_CASE("build_graph invariants on random call streams") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    std::vector<CallEvent> ev;
    const char* months[] = {"2008-08-10", "2008-09-10", "2008-10-10"};
    for (int k = 0; k < 400; ++k) {
      const auto a = static_cast<SubscriberId>(1 + rng.index(25));
      const auto b = static_cast<SubscriberId>(1 + rng.index(25));
      if (a != b) ev.push_back(call(a, b, months[rng.index(3)]));
    }
    const auto g = build_graph(ev);

    // union = union of layers; no loops; canonical order
    std::set<Edge> layered;
    for (const auto& [m, es] : g.monthly_layers()) layered.insert(es.begin(), es.end());
    CHECK(layered == edge_set(g.union_edges()));
    std::size_t deg_sum = 0;
    for (NodeIndex i = 0; i < static_cast<NodeIndex>(g.node_count()); ++i) {
      deg_sum += g.degree(i);
      for (NodeIndex j : g.neighbors(i)) {
        CHECK(j != i);
        const auto back = g.neighbors(j);
        CHECK(std::find(back.begin(), back.end(), i) != back.end());
      }
    }
    CHECK(deg_sum == 2 * g.edge_count());
    for (const auto& e : g.union_edges()) CHECK(e.u < e.v);

    // order insensitivity
    auto shuffled = ev;
    for (std::size_t i = shuffled.size() - 1; i > 0; --i) std::swap(shuffled[i], shuffled[rng.index(i + 1)]);
    const auto h = build_graph(shuffled);
    CHECK(h.union_edges() == g.union_edges());
    CHECK(h.monthly_layers() == g.monthly_layers());
    CHECK(h.nodes() == g.nodes());
  }
}

TEST_CASE("degree_stats") {
  SUBCASE("triangle") {
    const auto s = degree_stats(graph_of({{1, 2}, {2, 3}, {1, 3}}));
    CHECK(s.mean == doctest::Approx(2.0));
    CHECK(s.std == doctest::Approx(0.0));
    CHECK(s.median == doctest::Approx(2.0));
    CHECK(s.histogram.at(2) == 3);
  }
  SUBCASE("path of three nodes") {
    const auto s = degree_stats(graph_of({{1, 2}, {2, 3}}));
    CHECK(s.mean == doctest::Approx(4.0 / 3.0));
    CHECK(s.median == doctest::Approx(1.0));
  }
  SUBCASE("empty graph") { CHECK_THROWS_WITH_AS(degree_stats(SocialGraph{}), "empty graph", Error); }
  SUBCASE("stats recomputable from the histogram") {
    Rng rng(3);
    const auto s = degree_stats(testing::random_graph(60, 0.1, rng));
    double n = 0, sum = 0, sq = 0;
    for (auto [d, c] : s.histogram) {
      n += static_cast<double>(c);
      sum += static_cast<double>(d * c);
      sq += static_cast<double>(d * d * c);
    }
    CHECK(n == 60);
    CHECK(s.mean == doctest::Approx(sum / n));
    CHECK(s.std == doctest::Approx(std::sqrt(sq / n - (sum / n) * (sum / n))));
  }
}

TEST_CASE("ego_network") {
  SUBCASE("star with a chord") {
    const auto g = graph_of({{1, 2}, {1, 3}, {2, 3}, {3, 4}});
    const auto e = ego_network(g, 1);
    CHECK(e.members == std::vector<SubscriberId>{1, 2, 3});
    CHECK(e.induced_edges.size() == 3);
  }
  SUBCASE("isolated node") {
    const auto g = graph_of({{1, 2}}, {1, 2, 9});
    const auto e = ego_network(g, 9);
    CHECK(e.members == std::vector<SubscriberId>{9});
    CHECK(e.induced_edges.empty());
  }
  SUBCASE("5-clique") {
    std::vector<std::pair<SubscriberId, SubscriberId>> es;
    for (int a = 1; a <= 5; ++a)
      for (int b = a + 1; b <= 5; ++b) es.emplace_back(a, b);
    const auto g = graph_of(es);
    for (SubscriberId u = 1; u <= 5; ++u) {
      const auto e = ego_network(g, u);
      CHECK(e.members.size() == 5);
      CHECK(e.induced_edges.size() == 10);
    }
  }
  SUBCASE("unknown node") { CHECK_THROWS_AS(ego_network(graph_of({{1, 2}}), 77), Error); }
  SUBCASE("brute-force induced subgraph on random graphs") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      Rng rng(seed);
      const auto g = testing::random_graph(30, 0.15, rng);
      for (SubscriberId u : g.nodes()) {
        const auto e = ego_network(g, u);
        CHECK(e.members.size() == g.degree(*g.index_of(u)) + 1);
        CHECK(std::binary_search(e.members.begin(), e.members.end(), u));
        std::set<Edge> expect;
        for (auto a : e.members)
          for (auto b : e.members)
            if (a < b && g.has_edge(a, b)) expect.insert(Edge{a, b});
        CHECK(edge_set(e.induced_edges) == expect);
        const auto adj = e.adjacency();
        CHECK(adj.sum() == doctest::Approx(2.0 * static_cast<double>(expect.size())));
      }
    }
  }
}

TEST_CASE("infer_home_region") {
  SUBCASE("mode") {
    std::vector<CallEvent> ev = {call(1, 2, "2008-09-01", "R1"), call(1, 3, "2008-09-02", "R1"),
                                 call(1, 2, "2008-09-03", "R2")};
    CHECK(infer_home_region(ev, 1) == "R1");
  }
  SUBCASE("tie goes to the smaller code") {
    std::vector<CallEvent> ev = {call(1, 2, "2008-09-01", "R2"), call(1, 3, "2008-09-02", "R1")};
    CHECK(infer_home_region(ev, 1) == "R1");
  }
  SUBCASE("no located events") {
    std::vector<CallEvent> ev = {call(1, 2, "2008-09-01", "")};
    CHECK_FALSE(infer_home_region(ev, 1).has_value());
    CHECK_FALSE(infer_home_region(ev, 5).has_value());
  }
  SUBCASE("planted 60% region over 1000 events") {
    int hits = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
      Rng rng(seed);
      std::vector<CallEvent> ev;
      for (int k = 0; k < 1000; ++k) {
        const std::string r = rng.bernoulli(0.6) ? "R3" : "R" + std::to_string(4 + rng.index(4));
        ev.push_back(call(1, 2, "2008-09-01", r));
      }
      hits += infer_home_region(ev, 1) == "R3";
      CHECK(infer_home_regions(ev).at(1) == *infer_home_region(ev, 1));
    }
    CHECK(hits >= 99);
  }
}

TEST_CASE("graph dump round trip") {
  const StudyWindow w;
  std::vector<CallEvent> ev = {call(1, 2, "2008-08-03"), call(2, 1, "2008-08-04"), call(1, 2, "2009-06-03"),
                               call(2, 1, "2009-06-04"), call(3, 2, "2008-12-01"), call(2, 3, "2008-12-01")};
  const auto g = build_graph(ev);
  std::ostringstream out;
  write_graph_dump(out, g, w);
  CHECK(out.str() == "u,v,month_bitmask\n1,2,1025\n2,3,16\n");
  std::istringstream in(out.str());
  const auto h = read_graph_dump(in, w);
  CHECK(h.union_edges() == g.union_edges());
  CHECK(h.monthly_layers() == g.monthly_layers());
}

TEST_CASE("subscriber and adoption files round trip") {
  Rng rng(5);
  std::vector<SubscriberProfile> ps;
  for (SubscriberId id = 1; id <= 20; ++id) ps.push_back(testing::random_profile(id, rng));
  std::ostringstream out;
  write_subscribers(out, ps);
  std::istringstream in(out.str());
  const auto back = read_subscribers(in);
  REQUIRE(back.size() == ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    CHECK(back[i].id == ps[i].id);
    CHECK(back[i].gender == ps[i].gender);
    CHECK(back[i].wage == ps[i].wage);
    CHECK(back[i].phone_technology == ps[i].phone_technology);
    CHECK(back[i].phone_age == ps[i].phone_age);
    CHECK(back[i].region == ps[i].region);
  }
  std::istringstream bad("id,gender,wage,prepaid,phone_technology,mobile_internet,phone_age,tenure,region\n"
                         "1,male,9,0,3G,0,1.0,1.0,R1\n");
  CHECK_THROWS_AS(read_subscribers(bad), Error);

  std::map<SubscriberId, Month> ad = {{3, {2008, 9}}, {11, {2009, 2}}};
  std::ostringstream ao;
  write_adoptions(ao, ad);
  std::istringstream ai(ao.str());
  CHECK(read_adoptions(ai) == ad);
}
