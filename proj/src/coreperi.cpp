#include "corepulse/coreperi.hpp"

#include <algorithm>
#include <unordered_map>

namespace corepulse {

CoreClassification classify(const std::map<SubscriberId, int>& counts, int core_threshold,
                            const std::set<SubscriberId>& adopters) {
  CoreClassification out;
  out.labels.reserve(counts.size());
  for (const auto& [id, count] : counts) {
    const bool core = count >= core_threshold;
    out.labels.push_back({id, count, core});
    const bool adopted = adopters.count(id) > 0;
    if (core) {
      ++out.summary.n_core;
      out.summary.core_adopters += adopted;
    } else {
      ++out.summary.n_peri;
      out.summary.peri_adopters += adopted;
    }
  }
  return out;
}

std::map<SubscriberId, bool> core_lookup(std::span<const CoreLabel> labels) {
  std::map<SubscriberId, bool> out;
  for (const auto& l : labels) out.emplace(l.node, l.is_core);
  return out;
}

std::vector<std::vector<SubscriberId>> connected_components(const SocialGraph& graph,
                                                            std::span<const SubscriberId> nodes) {
  std::vector<NodeIndex> members;
  for (SubscriberId id : nodes) {
    if (auto idx = graph.index_of(id)) members.push_back(*idx);
  }
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());

  std::unordered_map<NodeIndex, int> component;
  for (NodeIndex m : members) component.emplace(m, -1);

  std::vector<std::vector<SubscriberId>> out;
  std::vector<NodeIndex> stack;
  for (NodeIndex start : members) {
    if (component[start] >= 0) continue;
    const int label = static_cast<int>(out.size());
    out.emplace_back();
    component[start] = label;
    stack.push_back(start);
    while (!stack.empty()) {
      const NodeIndex u = stack.back();
      stack.pop_back();
      out.back().push_back(graph.id(u));
      for (NodeIndex v : graph.neighbors(u)) {
        auto it = component.find(v);
        if (it != component.end() && it->second < 0) {
          it->second = label;
          stack.push_back(v);
        }
      }
    }
    std::sort(out.back().begin(), out.back().end());
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a.front() < b.front();
  });
  return out;
}

ConnectivityProfile connectivity_profile(const SocialGraph& graph,
                                         const std::map<SubscriberId, int>& counts,
                                         std::span<const int> alpha_grid) {
  ConnectivityProfile out;
  for (int alpha : alpha_grid) {
    std::vector<SubscriberId> nodes;
    for (const auto& [id, count] : counts) {
      if (count >= alpha && graph.contains(id)) nodes.push_back(id);
    }
    if (nodes.empty()) {
      out.notes.push_back("alpha=" + std::to_string(alpha) + ": no nodes, C undefined");
      continue;
    }
    const auto comps = connected_components(graph, nodes);
    out.points.push_back({alpha, nodes.size(),
                          static_cast<double>(comps.front().size()) / static_cast<double>(nodes.size())});
  }
  return out;
}

}  // namespace corepulse
