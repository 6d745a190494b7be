#include "corepulse/graphcore.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_set>

#include "corepulse/csv.hpp"
#include "corepulse/error.hpp"

namespace corepulse {

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError(path);
  return in;
}

bool expect_header(std::istream& in, std::string_view expected) {
  std::string line;
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line == expected;
}

std::optional<bool> parse_flag(std::string_view s) {
  if (s == "1" || s == "true" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "no") return false;
  return std::nullopt;
}

}  // namespace

// ---------------------------------------------------------------------------
// CDR

CdrParseResult parse_cdr(std::istream& in, std::optional<StudyWindow> window) {
  if (!expect_header(in, "caller_id,callee_id,timestamp,cell_region")) {
    throw Error("cdr: unreadable or unexpected header");
  }
  CdrParseResult result;
  auto skip = [&](const char* reason) {
    ++result.skipped;
    ++result.skip_reasons[reason];
  };
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = csv::split(line);
    if (fields.size() != 4) {
      skip("malformed");
      continue;
    }
    const auto caller = csv::to_int(fields[0]);
    const auto callee = csv::to_int(fields[1]);
    const auto ts = parse_timestamp(fields[2]);
    if (!caller || !callee || !ts) {
      skip("malformed");
      continue;
    }
    if (*caller == *callee) {
      skip("self_call");
      continue;
    }
    if (window && !window->contains(ts->month)) {
      skip("window");
      continue;
    }
    result.events.push_back(CallEvent{*caller, *callee, *ts, std::string(fields[3])});
  }
  if (result.events.empty()) throw Error("cdr: zero valid rows");
  std::stable_sort(result.events.begin(), result.events.end(),
                   [](const CallEvent& a, const CallEvent& b) {
                     return a.timestamp.key < b.timestamp.key;
                   });
  return result;
}

CdrParseResult read_cdr_file(const std::string& path, std::optional<StudyWindow> window) {
  auto in = open_input(path);
  return parse_cdr(in, window);
}

void write_cdr(std::ostream& out, std::span<const CallEvent> events) {
  out << "caller_id,callee_id,timestamp,cell_region\n";
  for (const auto& e : events) {
    out << e.caller << ',' << e.callee << ',' << e.timestamp.to_iso() << ',' << e.cell_region
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Profiles

std::string to_string(Gender g) {
  switch (g) {
    case Gender::male: return "male";
    case Gender::female: return "female";
    case Gender::unknown: return "unknown";
  }
  return "unknown";
}

std::string to_string(PhoneTechnology p) {
  switch (p) {
    case PhoneTechnology::g2: return "2G";
    case PhoneTechnology::g2_5: return "2.5G";
    case PhoneTechnology::g3: return "3G";
    case PhoneTechnology::g3_5: return "3.5G";
    case PhoneTechnology::other: return "other";
  }
  return "other";
}

std::optional<Gender> parse_gender(std::string_view s) {
  if (s == "male") return Gender::male;
  if (s == "female") return Gender::female;
  if (s == "unknown") return Gender::unknown;
  return std::nullopt;
}

std::optional<PhoneTechnology> parse_phone_technology(std::string_view s) {
  if (s == "2G") return PhoneTechnology::g2;
  if (s == "2.5G") return PhoneTechnology::g2_5;
  if (s == "3G") return PhoneTechnology::g3;
  if (s == "3.5G") return PhoneTechnology::g3_5;
  if (s == "other") return PhoneTechnology::other;
  return std::nullopt;
}

std::vector<SubscriberProfile> read_subscribers(std::istream& in) {
  if (!expect_header(
          in, "id,gender,wage,prepaid,phone_technology,mobile_internet,phone_age,tenure,region")) {
    throw Error("subscribers: unreadable or unexpected header");
  }
  std::vector<SubscriberProfile> out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = csv::split(line);
    auto bad = [&](const std::string& what) {
      return Error("subscribers: line " + std::to_string(line_no) + ": " + what);
    };
    if (f.size() != 9) throw bad("expected 9 fields");
    SubscriberProfile p;
    const auto id = csv::to_int(f[0]);
    const auto gender = parse_gender(f[1]);
    const auto wage = csv::to_int(f[2]);
    const auto prepaid = parse_flag(f[3]);
    const auto phone = parse_phone_technology(f[4]);
    const auto internet = parse_flag(f[5]);
    const auto phone_age = csv::to_double(f[6]);
    const auto tenure = csv::to_double(f[7]);
    if (!id) throw bad("bad id");
    if (!gender) throw bad("bad gender");
    if (!wage || *wage < 1 || *wage > kWageLevels) throw bad("bad wage");
    if (!prepaid) throw bad("bad prepaid");
    if (!phone) throw bad("bad phone_technology");
    if (!internet) throw bad("bad mobile_internet");
    if (!phone_age || *phone_age < 0) throw bad("bad phone_age");
    if (!tenure || *tenure < 0) throw bad("bad tenure");
    p.id = *id;
    p.gender = *gender;
    p.wage = static_cast<int>(*wage);
    p.prepaid = *prepaid;
    p.phone_technology = *phone;
    p.mobile_internet = *internet;
    p.phone_age = *phone_age;
    p.tenure = *tenure;
    p.region = std::string(f[8]);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<SubscriberProfile> read_subscribers_file(const std::string& path) {
  auto in = open_input(path);
  return read_subscribers(in);
}

void write_subscribers(std::ostream& out, std::span<const SubscriberProfile> profiles) {
  out << "id,gender,wage,prepaid,phone_technology,mobile_internet,phone_age,tenure,region\n";
  for (const auto& p : profiles) {
    out << p.id << ',' << to_string(p.gender) << ',' << p.wage << ',' << (p.prepaid ? 1 : 0)
        << ',' << to_string(p.phone_technology) << ',' << (p.mobile_internet ? 1 : 0) << ','
        << csv::format(p.phone_age) << ',' << csv::format(p.tenure) << ',' << p.region << '\n';
  }
}

ProfileTable make_profile_table(std::span<const SubscriberProfile> profiles) {
  ProfileTable table;
  table.reserve(profiles.size());
  for (const auto& p : profiles) table.emplace(p.id, p);
  return table;
}

std::map<SubscriberId, Month> read_adoptions(std::istream& in) {
  if (!expect_header(in, "id,adoption_month")) {
    throw Error("adoptions: unreadable or unexpected header");
  }
  std::map<SubscriberId, Month> out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = csv::split(line);
    const auto id = f.size() == 2 ? csv::to_int(f[0]) : std::nullopt;
    const auto month = f.size() == 2 ? Month::parse(f[1]) : std::nullopt;
    if (!id || !month) throw Error("adoptions: line " + std::to_string(line_no) + ": malformed");
    if (!out.emplace(*id, *month).second) {
      throw Error("adoptions: subscriber " + std::to_string(*id) + " adopts twice");
    }
  }
  return out;
}

std::map<SubscriberId, Month> read_adoptions_file(const std::string& path) {
  auto in = open_input(path);
  return read_adoptions(in);
}

void write_adoptions(std::ostream& out, const std::map<SubscriberId, Month>& adoptions) {
  out << "id,adoption_month\n";
  for (const auto& [id, m] : adoptions) out << id << ',' << m.to_string() << '\n';
}

// ---------------------------------------------------------------------------
// SocialGraph

std::optional<ReciprocityRule> parse_reciprocity_rule(std::string_view s) {
  if (s == "both_directions_same_month") return ReciprocityRule::both_directions_same_month;
  if (s == "any_direction_same_month") return ReciprocityRule::any_direction_same_month;
  return std::nullopt;
}

std::string to_string(ReciprocityRule r) {
  return r == ReciprocityRule::both_directions_same_month ? "both_directions_same_month"
                                                          : "any_direction_same_month";
}

SocialGraph::SocialGraph(std::vector<SubscriberId> nodes, std::map<int, std::vector<Edge>> layers) {
  std::set<Edge> all;
  for (auto& [month, edges] : layers) {
    std::vector<Edge> clean;
    clean.reserve(edges.size());
    for (const auto& e : edges) {
      if (e.u == e.v) continue;
      clean.push_back(Edge::make(e.u, e.v));
    }
    std::sort(clean.begin(), clean.end());
    clean.erase(std::unique(clean.begin(), clean.end()), clean.end());
    if (clean.empty()) continue;
    for (const auto& e : clean) {
      all.insert(e);
      nodes.push_back(e.u);
      nodes.push_back(e.v);
    }
    layers_.emplace(month, std::move(clean));
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  nodes_ = std::move(nodes);
  union_edges_.assign(all.begin(), all.end());

  index_.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) index_.emplace(nodes_[i], static_cast<NodeIndex>(i));

  std::vector<std::size_t> degree(nodes_.size(), 0);
  for (const auto& e : union_edges_) {
    ++degree[static_cast<std::size_t>(index_.at(e.u))];
    ++degree[static_cast<std::size_t>(index_.at(e.v))];
  }
  offsets_.assign(nodes_.size() + 1, 0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) offsets_[i + 1] = offsets_[i] + degree[i];
  adjacency_.assign(offsets_.back(), 0);
  std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (const auto& e : union_edges_) {
    const NodeIndex a = index_.at(e.u), b = index_.at(e.v);
    adjacency_[fill[static_cast<std::size_t>(a)]++] = b;
    adjacency_[fill[static_cast<std::size_t>(b)]++] = a;
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    std::sort(adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]),
              adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]));
  }
}

std::optional<NodeIndex> SocialGraph::index_of(SubscriberId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::span<const NodeIndex> SocialGraph::neighbors(NodeIndex i) const {
  const auto k = static_cast<std::size_t>(i);
  return {adjacency_.data() + offsets_[k], offsets_[k + 1] - offsets_[k]};
}

std::vector<SubscriberId> SocialGraph::neighbor_ids(SubscriberId id) const {
  const auto idx = index_of(id);
  if (!idx) throw Error("unknown node " + std::to_string(id));
  std::vector<SubscriberId> out;
  for (NodeIndex j : neighbors(*idx)) out.push_back(this->id(j));
  return out;
}

bool SocialGraph::has_edge(SubscriberId a, SubscriberId b) const {
  const auto ia = index_of(a), ib = index_of(b);
  if (!ia || !ib) return false;
  const auto nb = neighbors(*ia);
  return std::binary_search(nb.begin(), nb.end(), *ib);
}

SocialGraph SocialGraph::induced(std::span<const SubscriberId> keep) const {
  std::unordered_set<SubscriberId> keep_set;
  std::vector<SubscriberId> nodes;
  for (SubscriberId id : keep) {
    if (contains(id) && keep_set.insert(id).second) nodes.push_back(id);
  }
  std::map<int, std::vector<Edge>> layers;
  for (const auto& [month, edges] : layers_) {
    for (const auto& e : edges) {
      if (keep_set.count(e.u) && keep_set.count(e.v)) layers[month].push_back(e);
    }
  }
  return SocialGraph(std::move(nodes), std::move(layers));
}

SocialGraph build_graph(std::span<const CallEvent> events, ReciprocityRule rule) {
  // (month, caller, callee) directed observations
  std::set<std::tuple<int, SubscriberId, SubscriberId>> directed;
  std::vector<SubscriberId> nodes;
  for (const auto& e : events) {
    if (e.caller == e.callee) continue;
    directed.emplace(e.timestamp.month.serial(), e.caller, e.callee);
    nodes.push_back(e.caller);
    nodes.push_back(e.callee);
  }
  std::map<int, std::vector<Edge>> layers;
  for (const auto& [month, a, b] : directed) {
    if (rule == ReciprocityRule::any_direction_same_month) {
      layers[month].push_back(Edge::make(a, b));
    } else if (a < b && directed.count({month, b, a})) {
      layers[month].push_back(Edge{a, b});
    }
  }
  return SocialGraph(std::move(nodes), std::move(layers));
}

void write_graph_dump(std::ostream& out, const SocialGraph& graph, const StudyWindow& window) {
  if (window.length() > 64) throw Error("graph dump: window longer than 64 months");
  std::map<Edge, std::uint64_t> masks;
  for (const auto& [serial, edges] : graph.monthly_layers()) {
    const int idx = window.index_of(Month::from_serial(serial));
    if (idx < 1 || idx > window.length()) throw Error("graph dump: layer outside window");
    for (const auto& e : edges) masks[e] |= std::uint64_t{1} << (idx - 1);
  }
  out << "u,v,month_bitmask\n";
  for (const auto& [e, mask] : masks) out << e.u << ',' << e.v << ',' << mask << '\n';
}

SocialGraph read_graph_dump(std::istream& in, const StudyWindow& window) {
  if (!expect_header(in, "u,v,month_bitmask")) throw Error("graph dump: unexpected header");
  std::map<int, std::vector<Edge>> layers;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = csv::split(line);
    const auto u = f.size() == 3 ? csv::to_int(f[0]) : std::nullopt;
    const auto v = f.size() == 3 ? csv::to_int(f[1]) : std::nullopt;
    const auto mask = f.size() == 3 ? csv::to_int(f[2]) : std::nullopt;
    if (!u || !v || !mask) throw Error("graph dump: line " + std::to_string(line_no) + ": malformed");
    const auto bits = static_cast<std::uint64_t>(*mask);
    for (int i = 0; i < window.length(); ++i) {
      if (bits & (std::uint64_t{1} << i)) {
        layers[window.at(i + 1).serial()].push_back(Edge::make(*u, *v));
      }
    }
  }
  return SocialGraph({}, std::move(layers));
}

SocialGraph read_graph_dump_file(const std::string& path, const StudyWindow& window) {
  auto in = open_input(path);
  return read_graph_dump(in, window);
}

// ---------------------------------------------------------------------------
// Derived views

DegreeStats degree_stats(const SocialGraph& graph) {
  if (graph.empty()) throw Error("empty graph");
  const std::size_t n = graph.node_count();
  std::vector<double> degrees(n);
  DegreeStats stats;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t d = graph.degree(static_cast<NodeIndex>(i));
    degrees[i] = static_cast<double>(d);
    ++stats.histogram[d];
  }
  const Eigen::Map<const Eigen::VectorXd> deg(degrees.data(), static_cast<Eigen::Index>(n));
  stats.mean = deg.mean();
  stats.std = std::sqrt((deg.array() - stats.mean).square().mean());
  std::sort(degrees.begin(), degrees.end());
  stats.median = n % 2 == 1 ? degrees[n / 2] : 0.5 * (degrees[n / 2 - 1] + degrees[n / 2]);
  return stats;
}

Eigen::MatrixXd EgoNetwork::adjacency() const {
  const auto n = static_cast<Eigen::Index>(members.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  auto pos = [&](SubscriberId id) {
    return static_cast<Eigen::Index>(std::lower_bound(members.begin(), members.end(), id) -
                                     members.begin());
  };
  for (const auto& e : induced_edges) {
    const auto i = pos(e.u), j = pos(e.v);
    a(i, j) = a(j, i) = 1.0;
  }
  return a;
}

EgoNetwork ego_network(const SocialGraph& graph, SubscriberId node) {
  const auto idx = graph.index_of(node);
  if (!idx) throw Error("ego_network: unknown node " + std::to_string(node));
  EgoNetwork ego;
  ego.ego = node;
  std::vector<NodeIndex> member_idx{*idx};
  for (NodeIndex j : graph.neighbors(*idx)) member_idx.push_back(j);
  std::sort(member_idx.begin(), member_idx.end());
  for (NodeIndex j : member_idx) ego.members.push_back(graph.id(j));
  for (NodeIndex a : member_idx) {
    for (NodeIndex b : graph.neighbors(a)) {
      if (b > a && std::binary_search(member_idx.begin(), member_idx.end(), b)) {
        ego.induced_edges.push_back(Edge{graph.id(a), graph.id(b)});
      }
    }
  }
  return ego;
}

namespace {

std::optional<std::string> modal_region(const std::map<std::string, std::size_t>& counts) {
  std::optional<std::string> best;
  std::size_t best_count = 0;
  for (const auto& [region, count] : counts) {  // ascending order: first max wins ties
    if (count > best_count) {
      best = region;
      best_count = count;
    }
  }
  return best;
}

}  // namespace

std::optional<std::string> infer_home_region(std::span<const CallEvent> events,
                                             SubscriberId subscriber) {
  std::map<std::string, std::size_t> counts;
  for (const auto& e : events) {
    if (e.caller == subscriber && !e.cell_region.empty()) ++counts[e.cell_region];
  }
  return modal_region(counts);
}

std::map<SubscriberId, std::string> infer_home_regions(std::span<const CallEvent> events) {
  std::map<SubscriberId, std::map<std::string, std::size_t>> counts;
  for (const auto& e : events) {
    if (!e.cell_region.empty()) ++counts[e.caller][e.cell_region];
  }
  std::map<SubscriberId, std::string> out;
  for (const auto& [id, c] : counts) {
    if (auto r = modal_region(c)) out.emplace(id, *r);
  }
  return out;
}

}  // namespace corepulse
