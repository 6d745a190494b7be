#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "corepulse/graphcore.hpp"
#include "corepulse/rng.hpp"

namespace testing {

using namespace corepulse;

inline Timestamp ts(const std::string& text) { return *parse_timestamp(text); }

inline CallEvent call(SubscriberId a, SubscriberId b, const std::string& when, std::string region = "") {
  return CallEvent{a, b, ts(when), std::move(region)};
}

/// Single-layer graph (first window month) from an edge list.
inline SocialGraph graph_of(const std::vector<std::pair<SubscriberId, SubscriberId>>& edges,
                            std::vector<SubscriberId> nodes = {}) {
  std::vector<Edge> es;
  for (auto [a, b] : edges) es.push_back(Edge::make(a, b));
  return SocialGraph(std::move(nodes), {{StudyWindow{}.start.serial(), es}});
}

/// G(n, p) on ids 1..n, every node kept.
inline SocialGraph random_graph(int n, double p, Rng& rng) {
  std::vector<std::pair<SubscriberId, SubscriberId>> edges;
  for (int u = 1; u <= n; ++u) {
    for (int v = u + 1; v <= n; ++v) {
      if (rng.bernoulli(p)) edges.emplace_back(u, v);
    }
  }
  std::vector<SubscriberId> nodes;
  for (int u = 1; u <= n; ++u) nodes.push_back(u);
  return graph_of(edges, nodes);
}

inline SubscriberProfile random_profile(SubscriberId id, Rng& rng, int regions = 3) {
  SubscriberProfile p;
  p.id = id;
  p.gender = static_cast<Gender>(rng.index(3));
  p.wage = 1 + static_cast<int>(rng.index(5));
  p.prepaid = rng.bernoulli(0.5);
  p.phone_technology = static_cast<PhoneTechnology>(rng.index(5));
  p.mobile_internet = rng.bernoulli(0.3);
  p.phone_age = std::round(rng.uniform(0.0, 3.0) * 1000.0) / 1000.0;
  p.tenure = std::round(rng.uniform(0.0, 5.0) * 1000.0) / 1000.0;
  p.region = "R" + std::to_string(1 + rng.index(static_cast<std::uint64_t>(regions)));
  return p;
}

}  // namespace testing
