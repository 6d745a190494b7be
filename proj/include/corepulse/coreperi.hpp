#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "corepulse/graphcore.hpp"

namespace corepulse {

struct CoreLabel {
  SubscriberId node = 0;
  int count = 0;
  bool is_core = false;
};

struct CoreSummary {
  std::size_t n_core = 0;
  std::size_t n_peri = 0;
  std::size_t core_adopters = 0;
  std::size_t peri_adopters = 0;

  double core_adopter_share() const { return n_core ? double(core_adopters) / double(n_core) : 0.0; }
  double peri_adopter_share() const { return n_peri ? double(peri_adopters) / double(n_peri) : 0.0; }
};

struct CoreClassification {
  std::vector<CoreLabel> labels;  // ascending id
  CoreSummary summary;
};

/// Core iff membership count >= threshold; everyone else (count 0
/// included) is periphery.
CoreClassification classify(const std::map<SubscriberId, int>& counts, int core_threshold = 5,
                            const std::set<SubscriberId>& adopters = {});

std::map<SubscriberId, bool> core_lookup(std::span<const CoreLabel> labels);

struct ConnectivityPoint {
  int alpha = 0;
  std::size_t n_nodes = 0;
  double c_alpha = 0.0;
};

struct ConnectivityProfile {
  std::vector<ConnectivityPoint> points;
  std::vector<std::string> notes;  // one per alpha with an empty induced set
};

/// C(alpha): share of the nodes with count >= alpha that sit in the largest
/// connected component of their induced union-graph subgraph.
ConnectivityProfile connectivity_profile(const SocialGraph& graph,
                                         const std::map<SubscriberId, int>& counts,
                                         std::span<const int> alpha_grid);

/// Components of the subgraph induced on `nodes`, largest first (ties: the
/// one holding the smallest id). Each component is sorted.
std::vector<std::vector<SubscriberId>> connected_components(const SocialGraph& graph,
                                                            std::span<const SubscriberId> nodes);

}  // namespace corepulse
