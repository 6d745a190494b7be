#include "corepulse/synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "corepulse/error.hpp"
#include "corepulse/rng.hpp"

namespace corepulse {

namespace {

enum Stream : std::uint64_t { kMembership = 1, kEdges, kAttributes, kShocks, kAdoption, kCalls };

const std::vector<double> kGenderBase = {0.228, 0.164, 0.608};  // male, female, unknown
const std::vector<double> kPhoneBase = {0.122, 0.479, 0.355, 0.039, 0.005};
constexpr double kPrepaidBase = 0.471;
constexpr double kMobileInternetBase = 0.036;
constexpr double kPhoneAgeMean = 0.915;  // years
constexpr double kTenureMean = 0.15;     // years

/// Community-shifted categorical draw. Offsets are (communities x levels).
struct Categorical {
  std::string name;
  std::vector<std::string> levels;
  std::vector<double> base;
  Eigen::MatrixXd offsets;

  Eigen::VectorXd probabilities(const std::vector<int>& comms) const {
    Eigen::VectorXd logit(static_cast<Eigen::Index>(base.size()));
    for (std::size_t k = 0; k < base.size(); ++k) logit(static_cast<Eigen::Index>(k)) = std::log(base[k]);
    for (int c : comms) logit += offsets.row(c).transpose();
    logit.array() -= logit.maxCoeff();
    Eigen::VectorXd p = logit.array().exp();
    return p / p.sum();
  }
};

Categorical make_categorical(std::string name, std::vector<std::string> levels, std::vector<double> base,
                             int communities, double weight, Rng& rng) {
  Categorical c{std::move(name), std::move(levels), std::move(base), {}};
  c.offsets.resize(communities, static_cast<Eigen::Index>(c.base.size()));
  for (Eigen::Index i = 0; i < c.offsets.rows(); ++i) {
    for (Eigen::Index k = 0; k < c.offsets.cols(); ++k) c.offsets(i, k) = weight * rng.normal();
  }
  return c;
}

int draw(const Eigen::VectorXd& p, Rng& rng) {
  double u = rng.uniform();
  for (Eigen::Index k = 0; k + 1 < p.size(); ++k) {
    if (u < p(k)) return static_cast<int>(k);
    u -= p(k);
  }
  return static_cast<int>(p.size() - 1);
}

/// k distinct values from [0, n) by partial Fisher-Yates.
std::vector<int> choose(int n, int k, Rng& rng) {
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  k = std::min(k, n);
  for (int i = 0; i < k; ++i) {
    const auto j = i + static_cast<int>(rng.index(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

double round3(double x) { return std::round(x * 1000.0) / 1000.0; }

std::string region_code(int r) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "R%02d", r + 1);
  return buf;
}

}  // namespace

AdoptionCoefficients default_adoption_coefficients() {
  AdoptionCoefficients c;
  c.gamma = {{"core_frd", 0.109},     {"peri_frd", 0.025},      {"gender_male", 0.163},
             {"gender_female", -0.053}, {"prepaid", -0.016},    {"phone_2.5G", 0.331},
             {"phone_3G", 0.452},     {"phone_3.5G", 0.718},    {"phone_other", 0.547},
             {"mobile_internet", 0.142}, {"phone_age", -0.045}, {"tenure_t", -0.04}};
  return c;
}

void GenConfig::validate() const {
  if (n_nodes < 2) throw Error("synth: n_nodes must be at least 2");
  if (k_communities < 1) throw Error("synth: k_communities must be positive");
  if (!(core_fraction >= 0.0 && core_fraction <= 1.0)) throw Error("synth: core_fraction outside [0,1]");
  if (!(peri_second_prob >= 0.0 && peri_second_prob <= 1.0)) throw Error("synth: peri_second_prob outside [0,1]");
  if (core_min_memberships < 1 || core_extra_mean < 0.0) throw Error("synth: bad core membership parameters");
  if (!(affiliation_scale > 0.0) || activity_sigma < 0.0 || membership_exponent < 0.0) throw Error("synth: bad affiliation parameters");
  if (regions < 1) throw Error("synth: regions must be positive");
  if (!window.valid() || window.length() < 2) throw Error("synth: window must span at least 2 months");
  if (sigma_u < 0.0) throw Error("synth: sigma_u must be nonnegative");
}

SyntheticPopulation generate_network(const GenConfig& cfg) {
  cfg.validate();
  const int n = cfg.n_nodes;
  const int K = cfg.k_communities;
  SyntheticPopulation pop;
  auto& truth = pop.truth;
  truth.coefficients = cfg.adoption;
  truth.sigma_u = cfg.sigma_u;

  // memberships
  Rng mrng(mix_seed(cfg.seed, kMembership));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    std::swap(order[static_cast<std::size_t>(i)], order[mrng.index(static_cast<std::uint64_t>(i + 1))]);
  }
  const int n_core = static_cast<int>(std::lround(cfg.core_fraction * n));
  std::vector<char> is_core(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n_core; ++i) is_core[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;

  std::vector<std::vector<int>> member_of(static_cast<std::size_t>(n));
  Eigen::VectorXd activity(n);
  for (int u = 0; u < n; ++u) {
    const int m = is_core[static_cast<std::size_t>(u)]
                      ? cfg.core_min_memberships + mrng.poisson(cfg.core_extra_mean)
                      : 1 + (mrng.bernoulli(cfg.peri_second_prob) ? 1 : 0);
    member_of[static_cast<std::size_t>(u)] = choose(K, m, mrng);
    const double s = cfg.activity_sigma;
    activity(u) = std::exp(s * mrng.normal() - 0.5 * s * s);
  }
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n, K);
  for (int u = 0; u < n; ++u) {
    const auto& m = member_of[static_cast<std::size_t>(u)];
    const double f = cfg.affiliation_scale * activity(u) *
                     std::pow(static_cast<double>(m.size()), -cfg.membership_exponent);
    for (int c : m) F(u, c) = f;
  }

  auto id_of = [](int u) { return static_cast<SubscriberId>(u + 1); };
  truth.communities.assign(static_cast<std::size_t>(K), {});
  for (int u = 0; u < n; ++u) {
    const auto& m = member_of[static_cast<std::size_t>(u)];
    truth.memberships[id_of(u)] = static_cast<int>(m.size());
    if (static_cast<int>(m.size()) >= cfg.core_min_memberships) truth.core.insert(id_of(u));
    for (int c : m) truth.communities[static_cast<std::size_t>(c)].push_back(id_of(u));
  }

  // edges over all pairs
  Rng erng(mix_seed(cfg.seed, kEdges));
  const Eigen::MatrixXd dots = F * F.transpose();
  std::vector<Edge> edges;
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      const double d = dots(u, v);
      if (d <= 0.0) continue;
      if (erng.uniform() < -std::expm1(-d)) edges.push_back(Edge::make(id_of(u), id_of(v)));
    }
  }
  if (edges.empty()) throw Error("synth: generated graph has no edges");
  std::map<int, std::vector<Edge>> layers;
  for (int t = 1; t <= cfg.window.length(); ++t) layers[cfg.window.at(t).serial()] = edges;
  pop.graph = SocialGraph({}, std::move(layers));

  // attributes
  Rng arng(mix_seed(cfg.seed, kAttributes));
  const double w = cfg.attribute_weight;
  std::vector<std::string> region_levels;
  for (int r = 0; r < cfg.regions; ++r) region_levels.push_back(region_code(r));
  std::vector<Categorical> cats;
  cats.push_back(make_categorical("gender", {"male", "female", "unknown"}, kGenderBase, K, w, arng));
  cats.push_back(make_categorical("wage", {"1", "2", "3", "4", "5"}, std::vector<double>(5, 0.2), K, w, arng));
  cats.push_back(make_categorical("prepaid", {"1", "0"}, {kPrepaidBase, 1 - kPrepaidBase}, K, w, arng));
  cats.push_back(make_categorical("phone", {"2G", "2.5G", "3G", "3.5G", "other"}, kPhoneBase, K, w, arng));
  cats.push_back(make_categorical("mobile_internet", {"1", "0"}, {kMobileInternetBase, 1 - kMobileInternetBase},
                                  K, w, arng));
  cats.push_back(make_categorical("region", region_levels, std::vector<double>(cfg.regions, 1.0 / cfg.regions), K,
                                  2.0 * w, arng));

  pop.profiles.reserve(static_cast<std::size_t>(n));
  for (int u = 0; u < n; ++u) {
    const auto& comms = member_of[static_cast<std::size_t>(u)];
    std::vector<int> level(cats.size());
    for (std::size_t a = 0; a < cats.size(); ++a) {
      const Eigen::VectorXd p = cats[a].probabilities(comms);
      for (Eigen::Index k = 0; k < p.size(); ++k) {
        auto& e = truth.attribute_expectation[cats[a].name + "=" + cats[a].levels[static_cast<std::size_t>(k)]];
        e.expected += p(k);
        e.variance += p(k) * (1.0 - p(k));
      }
      level[a] = draw(p, arng);
    }
    SubscriberProfile prof;
    prof.id = id_of(u);
    prof.gender = static_cast<Gender>(level[0]);
    prof.wage = level[1] + 1;
    prof.prepaid = level[2] == 0;
    prof.phone_technology = static_cast<PhoneTechnology>(level[3]);
    prof.mobile_internet = level[4] == 0;
    prof.region = region_levels[static_cast<std::size_t>(level[5])];
    prof.phone_age = round3(arng.exponential(kPhoneAgeMean));
    prof.tenure = round3(arng.exponential(kTenureMean));
    pop.profiles.push_back(std::move(prof));
  }

  Rng srng(mix_seed(cfg.seed, kShocks));
  truth.community_shock.resize(static_cast<std::size_t>(K));
  for (auto& u : truth.community_shock) u = cfg.sigma_u * srng.normal();
  return pop;
}

std::map<SubscriberId, Month> simulate_adoption(const SocialGraph& graph, const GroundTruth& truth,
                                                const std::vector<SubscriberProfile>& profiles,
                                                const GenConfig& cfg) {
  const auto& co = truth.coefficients;
  auto gamma = [&](const std::string& name) {
    auto it = co.gamma.find(name);
    return it == co.gamma.end() ? 0.0 : it->second;
  };

  std::map<SubscriberId, double> shock;
  for (std::size_t c = 0; c < truth.communities.size(); ++c) {
    const double u = c < truth.community_shock.size() ? truth.community_shock[c] : 0.0;
    for (SubscriberId id : truth.communities[c]) shock[id] += u;
  }

  struct Node {
    SubscriberId id;
    std::vector<SubscriberId> core_friends, peri_friends;
    double fixed;  // time-invariant part of the index
    double tenure_months;
  };
  std::vector<Node> nodes;
  nodes.reserve(profiles.size());
  for (const auto& p : profiles) {
    Node nd{p.id, {}, {}, 0.0, 12.0 * p.tenure};
    if (graph.contains(p.id)) {
      for (SubscriberId f : graph.neighbor_ids(p.id)) {
        (truth.core.count(f) ? nd.core_friends : nd.peri_friends).push_back(f);
      }
    }
    double x = co.beta0;
    x += gamma("core_frd") * static_cast<double>(nd.core_friends.size());
    x += gamma("peri_frd") * static_cast<double>(nd.peri_friends.size());
    x += gamma("gender_male") * (p.gender == Gender::male);
    x += gamma("gender_female") * (p.gender == Gender::female);
    x += gamma("prepaid") * p.prepaid;
    x += gamma("phone_2.5G") * (p.phone_technology == PhoneTechnology::g2_5);
    x += gamma("phone_3G") * (p.phone_technology == PhoneTechnology::g3);
    x += gamma("phone_3.5G") * (p.phone_technology == PhoneTechnology::g3_5);
    x += gamma("phone_other") * (p.phone_technology == PhoneTechnology::other);
    x += gamma("mobile_internet") * p.mobile_internet;
    x += gamma("phone_age") * p.phone_age;
    if (truth.core.count(p.id)) x += co.core_shift;
    if (auto it = shock.find(p.id); it != shock.end()) x += it->second;
    nd.fixed = x;
    nodes.push_back(std::move(nd));
  }
  std::sort(nodes.begin(), nodes.end(), [](const Node& a, const Node& b) { return a.id < b.id; });

  Rng rng(mix_seed(cfg.seed, kAdoption));
  std::map<SubscriberId, int> adopted;  // id -> month index
  const double g_tenure = gamma("tenure_t");
  for (int t = 1; t <= cfg.window.length(); ++t) {
    std::vector<SubscriberId> fresh;
    for (const auto& nd : nodes) {
      if (adopted.count(nd.id)) continue;
      int core_lag = 0, peri_lag = 0;
      for (SubscriberId f : nd.core_friends) core_lag += adopted.count(f) ? 1 : 0;
      for (SubscriberId f : nd.peri_friends) peri_lag += adopted.count(f) ? 1 : 0;
      const double index = nd.fixed + co.beta_core * core_lag + co.beta_peri * peri_lag +
                           g_tenure * (nd.tenure_months + t) + rng.normal();
      if (index > 0.0) fresh.push_back(nd.id);
    }
    for (SubscriberId id : fresh) adopted.emplace(id, t);
  }
  std::map<SubscriberId, Month> out;
  for (const auto& [id, t] : adopted) out.emplace(id, cfg.window.at(t));
  return out;
}

SyntheticPopulation simulate(const GenConfig& cfg) {
  SyntheticPopulation pop = generate_network(cfg);
  pop.truth.adoptions = simulate_adoption(pop.graph, pop.truth, pop.profiles, cfg);
  return pop;
}

std::vector<CallEvent> emit_cdr(const SocialGraph& graph, const std::vector<SubscriberProfile>& profiles,
                                const StudyWindow& window, std::uint64_t seed) {
  std::unordered_map<SubscriberId, std::string> region;
  for (const auto& p : profiles) region.emplace(p.id, p.region);
  auto home = [&](SubscriberId id) {
    auto it = region.find(id);
    return it == region.end() ? std::string() : it->second;
  };
  Rng rng(mix_seed(seed, kCalls));
  std::vector<CallEvent> events;
  for (const auto& [serial, edges] : graph.monthly_layers()) {
    const Month m = Month::from_serial(serial);
    if (!window.contains(m)) continue;
    for (const auto& e : edges) {
      for (int dir = 0; dir < 2; ++dir) {
        const SubscriberId a = dir ? e.v : e.u;
        const SubscriberId b = dir ? e.u : e.v;
        const std::int64_t day = 1 + static_cast<std::int64_t>(rng.index(28));
        const std::int64_t secs = static_cast<std::int64_t>(rng.index(86400));
        const std::int64_t key = ((static_cast<std::int64_t>(m.year) * 100 + m.month) * 100 + day) * 1000000 +
                                 (secs / 3600) * 10000 + (secs / 60 % 60) * 100 + secs % 60;
        events.push_back({a, b, Timestamp{m, key}, home(a)});
      }
    }
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const CallEvent& x, const CallEvent& y) { return x.timestamp.key < y.timestamp.key; });
  return events;
}

void write_truth_json(std::ostream& out, const GroundTruth& truth, const GenConfig& cfg) {
  using nlohmann::json;
  json j;
  j["n_nodes"] = cfg.n_nodes;
  j["k_communities"] = cfg.k_communities;
  j["seed"] = cfg.seed;
  j["window"] = {{"start", cfg.window.start.to_string()}, {"end", cfg.window.end.to_string()}};
  j["sigma_u"] = truth.sigma_u;
  const auto& co = truth.coefficients;
  j["coefficients"] = {{"beta0", co.beta0},
                       {"beta_core", co.beta_core},
                       {"beta_peri", co.beta_peri},
                       {"core_shift", co.core_shift},
                       {"gamma", co.gamma}};
  j["communities"] = truth.communities;
  j["core"] = std::vector<SubscriberId>(truth.core.begin(), truth.core.end());
  json counts = json::object();
  for (const auto& [id, c] : truth.memberships) counts[std::to_string(id)] = c;
  j["memberships"] = counts;
  j["community_shock"] = truth.community_shock;
  json adopt = json::object();
  for (const auto& [id, m] : truth.adoptions) adopt[std::to_string(id)] = m.to_string();
  j["adoptions"] = adopt;
  json attrs = json::object();
  for (const auto& [k, e] : truth.attribute_expectation) {
    attrs[k] = {{"expected", e.expected}, {"variance", e.variance}};
  }
  j["attribute_expectation"] = attrs;
  out << j.dump(2) << '\n';
}

void emit(const SyntheticPopulation& pop, const GenConfig& cfg, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream f(fs::path(dir) / name, std::ios::binary);
    if (!f) throw Error("cannot write " + (fs::path(dir) / name).string());
    return f;
  };
  {
    auto f = open("cdr.csv");
    write_cdr(f, emit_cdr(pop.graph, pop.profiles, cfg.window, cfg.seed));
  }
  {
    auto f = open("subscribers.csv");
    write_subscribers(f, pop.profiles);
  }
  {
    auto f = open("adoptions.csv");
    write_adoptions(f, pop.truth.adoptions);
  }
  {
    auto f = open("truth.json");
    write_truth_json(f, pop.truth, cfg);
  }
}

PlantedInstance sample_planted(const PlantedOptions& opts, std::uint64_t seed) {
  if (opts.nodes < 2 || opts.communities < 1) throw Error("sample_planted: bad size");
  Rng rng(seed);
  const int n = opts.nodes, K = opts.communities;
  PlantedInstance out;
  out.F = Eigen::MatrixXd::Zero(n, K);
  for (int u = 0; u < n; ++u) {
    const int c = static_cast<int>(rng.index(static_cast<std::uint64_t>(K)));
    out.F(u, c) = opts.strength;
    if (K > 1 && rng.bernoulli(opts.overlap_prob)) {
      int d = static_cast<int>(rng.index(static_cast<std::uint64_t>(K - 1)));
      if (d >= c) ++d;
      out.F(u, d) = opts.strength;
    }
  }
  const double bg = -std::log1p(-opts.background);
  const Eigen::MatrixXd dots = out.F * out.F.transpose();
  Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(n, n);
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      if (rng.uniform() < -std::expm1(-(dots(u, v) + bg))) adj(u, v) = adj(v, u) = 1.0;
    }
  }
  const int A = K * opts.attributes_per_community + 2;
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(A, K);
  for (int c = 0; c < K; ++c) {
    for (int a = 0; a < opts.attributes_per_community; ++a) W(c * opts.attributes_per_community + a, c) = opts.attribute_weight;
  }
  const Eigen::VectorXd b = Eigen::VectorXd::Constant(A, -0.5 * opts.attribute_weight * opts.strength);
  Eigen::MatrixXd X(n, A);
  for (int u = 0; u < n; ++u) {
    for (int a = 0; a < A; ++a) {
      const double z = W.row(a).dot(out.F.row(u)) + b(a);
      X(u, a) = rng.bernoulli(detail::sigmoid(z)) ? 1.0 : 0.0;
    }
  }
  out.data = AffiliationData::full(std::move(adj), std::move(X));
  out.communities.assign(static_cast<std::size_t>(K), {});
  for (int u = 0; u < n; ++u) {
    for (int c = 0; c < K; ++c) {
      if (out.F(u, c) > 0.0) out.communities[static_cast<std::size_t>(c)].push_back(u);
    }
  }
  return out;
}

}  // namespace corepulse
