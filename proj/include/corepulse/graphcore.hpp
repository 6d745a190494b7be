#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "corepulse/month.hpp"

namespace corepulse {

using SubscriberId = std::int64_t;
using NodeIndex = std::int32_t;

// ---------------------------------------------------------------------------
// Call records

struct CallEvent {
  SubscriberId caller = 0;
  SubscriberId callee = 0;
  Timestamp timestamp;
  std::string cell_region;  // empty when unknown
};

struct CdrParseResult {
  std::vector<CallEvent> events;  // sorted by timestamp
  std::size_t skipped = 0;
  std::map<std::string, std::size_t> skip_reasons;  // "malformed", "self_call", "window"
};

/// Reads the `caller_id,callee_id,timestamp,cell_region` wire format.
/// Rows outside `window` (when given) are dropped with reason "window".
/// Throws Error on a bad header or when no valid row remains.
CdrParseResult parse_cdr(std::istream& in, std::optional<StudyWindow> window = std::nullopt);
CdrParseResult read_cdr_file(const std::string& path,
                             std::optional<StudyWindow> window = std::nullopt);
void write_cdr(std::ostream& out, std::span<const CallEvent> events);

// ---------------------------------------------------------------------------
// Subscriber profiles

enum class Gender { male, female, unknown };
enum class PhoneTechnology { g2, g2_5, g3, g3_5, other };

inline constexpr int kWageLevels = 5;

struct SubscriberProfile {
  SubscriberId id = 0;
  Gender gender = Gender::unknown;
  int wage = 3;  // ordinal 1..5
  bool prepaid = false;
  PhoneTechnology phone_technology = PhoneTechnology::g2;
  bool mobile_internet = false;
  double phone_age = 0.0;  // years
  double tenure = 0.0;     // years
  std::string region;
};

using ProfileTable = std::unordered_map<SubscriberId, SubscriberProfile>;

std::string to_string(Gender g);
std::string to_string(PhoneTechnology p);
std::optional<Gender> parse_gender(std::string_view s);
std::optional<PhoneTechnology> parse_phone_technology(std::string_view s);

/// `id,gender,wage,prepaid,phone_technology,mobile_internet,phone_age,tenure,region`.
/// Invalid rows are a hard error naming the line.
std::vector<SubscriberProfile> read_subscribers(std::istream& in);
std::vector<SubscriberProfile> read_subscribers_file(const std::string& path);
void write_subscribers(std::ostream& out, std::span<const SubscriberProfile> profiles);
ProfileTable make_profile_table(std::span<const SubscriberProfile> profiles);

/// `id,adoption_month` with YYYY-MM months.
std::map<SubscriberId, Month> read_adoptions(std::istream& in);
std::map<SubscriberId, Month> read_adoptions_file(const std::string& path);
void write_adoptions(std::ostream& out, const std::map<SubscriberId, Month>& adoptions);

// ---------------------------------------------------------------------------
// Graph

/// Undirected edge in canonical order (u < v).
struct Edge {
  SubscriberId u = 0;
  SubscriberId v = 0;

  static Edge make(SubscriberId a, SubscriberId b) { return a < b ? Edge{a, b} : Edge{b, a}; }
  auto operator<=>(const Edge&) const = default;
};

enum class ReciprocityRule { both_directions_same_month, any_direction_same_month };

std::optional<ReciprocityRule> parse_reciprocity_rule(std::string_view s);
std::string to_string(ReciprocityRule r);

/// Immutable undirected simple graph with per-month edge layers and their
/// union. Nodes carry a dense index (position in the sorted id list).
class SocialGraph {
 public:
  SocialGraph() = default;

  /// `layers` maps Month::serial() to edges; edges are canonicalised,
  /// deduplicated and loop-free after construction. Every endpoint is added
  /// to the node set.
  SocialGraph(std::vector<SubscriberId> nodes, std::map<int, std::vector<Edge>> layers);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return union_edges_.size(); }
  bool empty() const { return nodes_.empty(); }

  const std::vector<SubscriberId>& nodes() const { return nodes_; }
  SubscriberId id(NodeIndex i) const { return nodes_[static_cast<std::size_t>(i)]; }
  std::optional<NodeIndex> index_of(SubscriberId id) const;
  bool contains(SubscriberId id) const { return index_of(id).has_value(); }

  std::span<const NodeIndex> neighbors(NodeIndex i) const;
  std::size_t degree(NodeIndex i) const { return neighbors(i).size(); }
  /// Neighbour ids of `id`; throws Error for unknown nodes.
  std::vector<SubscriberId> neighbor_ids(SubscriberId id) const;
  bool has_edge(SubscriberId a, SubscriberId b) const;

  const std::vector<Edge>& union_edges() const { return union_edges_; }
  const std::map<int, std::vector<Edge>>& monthly_layers() const { return layers_; }

  /// Subgraph induced on `keep` (ids absent from the graph are ignored).
  SocialGraph induced(std::span<const SubscriberId> keep) const;

 private:
  std::vector<SubscriberId> nodes_;
  std::unordered_map<SubscriberId, NodeIndex> index_;
  std::vector<std::size_t> offsets_;
  std::vector<NodeIndex> adjacency_;
  std::vector<Edge> union_edges_;
  std::map<int, std::vector<Edge>> layers_;
};

/// Builds the monthly mutual-call graph. Under the default rule an edge
/// exists in month m iff both directions were called in m.
SocialGraph build_graph(std::span<const CallEvent> events,
                        ReciprocityRule rule = ReciprocityRule::both_directions_same_month);

/// Edge list `u,v,month_bitmask`; bit i marks window month i+1.
void write_graph_dump(std::ostream& out, const SocialGraph& graph, const StudyWindow& window);
SocialGraph read_graph_dump(std::istream& in, const StudyWindow& window);
SocialGraph read_graph_dump_file(const std::string& path, const StudyWindow& window);

struct DegreeStats {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  double median = 0.0;
  std::map<std::size_t, std::size_t> histogram;  // degree -> node count
};

/// Statistics over union-graph degrees. Throws Error("empty graph").
DegreeStats degree_stats(const SocialGraph& graph);

struct EgoNetwork {
  SubscriberId ego = 0;
  std::vector<SubscriberId> members;  // sorted, includes ego
  std::vector<Edge> induced_edges;

  /// Dense 0/1 adjacency in `members` order.
  Eigen::MatrixXd adjacency() const;
};

EgoNetwork ego_network(const SocialGraph& graph, SubscriberId node);

/// Modal cell region over the calls a subscriber placed; ties go to the
/// lexicographically smallest code. nullopt when no located calls exist.
std::optional<std::string> infer_home_region(std::span<const CallEvent> events,
                                             SubscriberId subscriber);
std::map<SubscriberId, std::string> infer_home_regions(std::span<const CallEvent> events);

}  // namespace corepulse
