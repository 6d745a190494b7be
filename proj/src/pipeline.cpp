#include "corepulse/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "corepulse/attributes.hpp"
#include "corepulse/coreperi.hpp"
#include "corepulse/csv.hpp"
#include "corepulse/design.hpp"
#include "corepulse/error.hpp"
#include "corepulse/panel.hpp"
#include "corepulse/report.hpp"
#include "corepulse/rng.hpp"
#include "corepulse/svg.hpp"

namespace corepulse {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

void PipelineConfig::validate() const {
  if (!window.valid()) throw Error("config: window end precedes start");
  if (window.length() < 2) throw Error("config: window must span at least 2 months");
  if (core_threshold < 1) throw Error("config: coreperi.core_threshold must be at least 1");
  if (alpha_grid.empty() || std::any_of(alpha_grid.begin(), alpha_grid.end(), [](int a) { return a < 1; }))
    throw Error("config: coreperi.alpha_grid must hold positive integers");
  if (communities.k_grid.empty() ||
      std::any_of(communities.k_grid.begin(), communities.k_grid.end(), [](int k) { return k < 1; }))
    throw Error("config: communities.k_grid must hold positive integers");
  if (communities.folds < 2) throw Error("config: communities.folds must be at least 2");
  if (communities.options.lambda < 0 || communities.options.rho < 0) throw Error("config: lambda and rho must be nonnegative");
  if (probit.max_iter < 1 || !(probit.tol > 0)) throw Error("config: bad estimation tolerance or iteration cap");
  if (bootstrap < 0) throw Error("config: estimation.bootstrap must be nonnegative");
  if (min_community_subscribers < 1) throw Error("config: estimation.min_community_subscribers must be at least 1");
  if (out_dir.empty()) throw Error("config: out_dir is empty");
  GenConfig g = synth;
  g.window = window;
  g.validate();
}

std::string PipelineConfig::resolve(const std::string& path) const {
  const fs::path p(path);
  return p.is_absolute() ? p.string() : (fs::path(out_dir) / p).string();
}

json config_to_json(const PipelineConfig& c) {
  const auto& s = c.synth;
  const auto& a = s.adoption;
  const auto& o = c.communities.options;
  return json{
      {"seed", c.seed},
      {"out_dir", c.out_dir},
      {"window", {{"start", c.window.start.to_string()}, {"end", c.window.end.to_string()}}},
      {"inputs", {{"cdr", c.cdr}, {"subscribers", c.subscribers}, {"adoptions", c.adoptions}}},
      {"graph", {{"reciprocity", to_string(c.reciprocity)}}},
      {"synth",
       {{"n_nodes", s.n_nodes},
        {"k_communities", s.k_communities},
        {"core_fraction", s.core_fraction},
        {"core_min_memberships", s.core_min_memberships},
        {"core_extra_mean", s.core_extra_mean},
        {"peri_second_prob", s.peri_second_prob},
        {"affiliation_scale", s.affiliation_scale},
        {"activity_sigma", s.activity_sigma},
        {"membership_exponent", s.membership_exponent},
        {"attribute_weight", s.attribute_weight},
        {"regions", s.regions},
        {"sigma_u", s.sigma_u},
        {"beta0", a.beta0},
        {"beta_core", a.beta_core},
        {"beta_peri", a.beta_peri},
        {"core_shift", a.core_shift},
        {"gamma", a.gamma}}},
      {"communities",
       {{"lambda", o.lambda},
        {"rho", o.rho},
        {"tol", o.tol},
        {"max_iter", o.max_iter},
        {"conductance_init", o.conductance_init},
        {"k_grid", c.communities.k_grid},
        {"folds", c.communities.folds},
        {"min_ego_size", c.communities.min_ego_size}}},
      {"coreperi", {{"core_threshold", c.core_threshold}, {"alpha_grid", c.alpha_grid}}},
      {"estimation",
       {{"tol", c.probit.tol},
        {"max_iter", c.probit.max_iter},
        {"separation_bound", c.probit.separation_bound},
        {"bootstrap", c.bootstrap},
        {"min_community_subscribers", c.min_community_subscribers}}},
  };
}

namespace {

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return !(a.is_number_integer() && b.is_number_float());
  return a.type() == b.type();
}

void overlay(json& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw Error("config: " + (prefix.empty() ? std::string("document") : prefix) + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw Error("config: unknown key " + name);
    json& slot = base[key];
    if (slot.is_object() && name != "synth.gamma") {
      overlay(slot, value, name);
      continue;
    }
    if (name == "synth.gamma") {
      if (!value.is_object()) throw Error("config: synth.gamma must be an object");
      for (const auto& [g, v] : value.items()) {
        if (!slot.contains(g)) throw Error("config: unknown key synth.gamma." + g);
        if (!v.is_number()) throw Error("config: synth.gamma." + g + " must be a number");
        slot[g] = v;
      }
      continue;
    }
    if (!same_kind(slot, value)) throw Error("config: wrong type for " + name);
    slot = value;
  }
}

Month month_key(const json& j, const char* name) {
  const auto m = Month::parse(j.get<std::string>());
  if (!m) throw Error(std::string("config: bad month in window.") + name);
  return *m;
}

}  // namespace

PipelineConfig config_from_json(const json& j) {
  json doc = config_to_json(PipelineConfig{});
  overlay(doc, j, "");
  PipelineConfig c;
  try {
    c.seed = doc["seed"].get<std::uint64_t>();
    c.out_dir = doc["out_dir"].get<std::string>();
    c.window.start = month_key(doc["window"]["start"], "start");
    c.window.end = month_key(doc["window"]["end"], "end");
    c.cdr = doc["inputs"]["cdr"].get<std::string>();
    c.subscribers = doc["inputs"]["subscribers"].get<std::string>();
    c.adoptions = doc["inputs"]["adoptions"].get<std::string>();
    const auto rule = parse_reciprocity_rule(doc["graph"]["reciprocity"].get<std::string>());
    if (!rule) throw Error("config: unknown graph.reciprocity");
    c.reciprocity = *rule;

    const json& s = doc["synth"];
    auto& g = c.synth;
    g.n_nodes = s["n_nodes"].get<int>();
    g.k_communities = s["k_communities"].get<int>();
    g.core_fraction = s["core_fraction"].get<double>();
    g.core_min_memberships = s["core_min_memberships"].get<int>();
    g.core_extra_mean = s["core_extra_mean"].get<double>();
    g.peri_second_prob = s["peri_second_prob"].get<double>();
    g.affiliation_scale = s["affiliation_scale"].get<double>();
    g.activity_sigma = s["activity_sigma"].get<double>();
    g.membership_exponent = s["membership_exponent"].get<double>();
    g.attribute_weight = s["attribute_weight"].get<double>();
    g.regions = s["regions"].get<int>();
    g.sigma_u = s["sigma_u"].get<double>();
    g.adoption.beta0 = s["beta0"].get<double>();
    g.adoption.beta_core = s["beta_core"].get<double>();
    g.adoption.beta_peri = s["beta_peri"].get<double>();
    g.adoption.core_shift = s["core_shift"].get<double>();
    g.adoption.gamma = s["gamma"].get<std::map<std::string, double>>();
    g.window = c.window;
    g.seed = c.seed;

    const json& cm = doc["communities"];
    c.communities.options.lambda = cm["lambda"].get<double>();
    c.communities.options.rho = cm["rho"].get<double>();
    c.communities.options.tol = cm["tol"].get<double>();
    c.communities.options.max_iter = cm["max_iter"].get<int>();
    c.communities.options.conductance_init = cm["conductance_init"].get<bool>();
    c.communities.k_grid = cm["k_grid"].get<std::vector<int>>();
    c.communities.folds = cm["folds"].get<int>();
    c.communities.min_ego_size = cm["min_ego_size"].get<int>();

    c.core_threshold = doc["coreperi"]["core_threshold"].get<int>();
    c.alpha_grid = doc["coreperi"]["alpha_grid"].get<std::vector<int>>();

    const json& e = doc["estimation"];
    c.probit.tol = e["tol"].get<double>();
    c.probit.max_iter = e["max_iter"].get<int>();
    c.probit.separation_bound = e["separation_bound"].get<double>();
    c.bootstrap = e["bootstrap"].get<int>();
    c.min_community_subscribers = e["min_community_subscribers"].get<int>();
  } catch (const json::exception& ex) {
    throw Error(std::string("config: ") + ex.what());
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& ex) {
    throw Error("config: cannot parse " + path + ": " + ex.what());
  }
  return config_from_json(j);
}

void apply_override(json& j, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) throw Error("override must look like key=value: " + std::string(assignment));
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw Error("bad override key " + key);
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const PipelineConfig& cfg) {
  json j = config_to_json(cfg);
  j.erase("out_dir");
  return fnv1a_hex(j.dump());
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"simulate", "graph",    "communities", "coreperi",
                                                 "panel",    "estimate", "report"};
  return names;
}

// ---------------------------------------------------------------------------
// Stage helpers

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError(path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Stage {
 public:
  Stage(std::string name, const PipelineConfig& cfg) : cfg_(cfg) {
    record_.stage = std::move(name);
    fs::create_directories(cfg.out_dir);
  }

  /// Resolves an input path and checks it exists.
  std::string input(const std::string& path) {
    const std::string p = cfg_.resolve(path);
    if (!fs::exists(p)) throw MissingInputError(p);
    record_.inputs.push_back(p);
    return p;
  }

  std::ofstream output(const std::string& name) {
    const fs::path p = fs::path(cfg_.out_dir) / name;
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("cannot write " + p.string());
    record_.outputs.push_back(name);
    return f;
  }

  void text(const std::string& name, const std::string& body) {
    auto f = output(name);
    f << body;
  }

  void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }

  StageRecord& record() { return record_; }

 private:
  const PipelineConfig& cfg_;
  StageRecord record_;
};

std::map<SubscriberId, Month> windowed_adoptions(const std::map<SubscriberId, Month>& all, const StudyWindow& w,
                                                 std::size_t* after) {
  std::map<SubscriberId, Month> out;
  std::size_t late = 0;
  for (const auto& [id, m] : all) {
    if (m > w.end) {
      ++late;
      continue;
    }
    out.emplace(id, m);
  }
  if (after) *after = late;
  return out;
}

json communities_to_json(std::span<const Community> comms, const std::set<SubscriberId>& adopters) {
  json arr = json::array();
  for (std::size_t i = 0; i < comms.size(); ++i) {
    const auto& c = comms[i];
    std::size_t ad = 0;
    for (auto m : c.members) ad += adopters.count(m);
    arr.push_back({{"community_id", i},
                   {"ego_id", c.ego},
                   {"member_ids", c.members},
                   {"size", c.members.size()},
                   {"adopter_count", ad}});
  }
  return arr;
}

std::vector<Community> read_communities(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
    std::vector<Community> out;
    for (const auto& c : j) out.push_back({c.at("ego_id").get<SubscriberId>(), c.at("member_ids").get<std::vector<SubscriberId>>()});
    return out;
  } catch (const json::exception& ex) {
    throw Error("communities: cannot read " + path + ": " + ex.what());
  }
}

std::vector<CoreLabel> read_labels(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "id,count,is_core") throw Error("corelabels: unexpected header in " + path);
  std::vector<CoreLabel> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    const auto id = f.size() == 3 ? csv::to_int(f[0]) : std::nullopt;
    const auto count = f.size() == 3 ? csv::to_int(f[1]) : std::nullopt;
    if (!id || !count || (f[2] != "0" && f[2] != "1")) throw Error("corelabels: bad row '" + line + "'");
    out.push_back({*id, static_cast<int>(*count), f[2] == "1"});
  }
  return out;
}

std::map<SubscriberId, std::string> read_regions(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "id,region") throw Error("home_regions: unexpected header in " + path);
  std::map<SubscriberId, std::string> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    const auto id = f.size() == 2 ? csv::to_int(f[0]) : std::nullopt;
    if (!id) throw Error("home_regions: bad row '" + line + "'");
    out[*id] = std::string(f[1]);
  }
  return out;
}

/// Numeric CSV columns keyed by header name.
std::map<std::string, std::vector<double>> read_numeric_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw Error("empty file " + path);
  std::vector<std::string> header;
  for (auto f : csv::split(line)) header.emplace_back(f);
  std::map<std::string, std::vector<double>> cols;
  for (const auto& h : header) cols[h];
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != header.size()) throw Error("bad row in " + path + ": '" + line + "'");
    for (std::size_t k = 0; k < f.size(); ++k) {
      const auto v = csv::to_double(f[k]);
      if (!v) throw Error("bad number in " + path + ": '" + line + "'");
      cols[header[k]].push_back(*v);
    }
  }
  return cols;
}

// ---------------------------------------------------------------------------
// Stages

void stage_simulate(Stage& st, const PipelineConfig& cfg) {
  GenConfig g = cfg.synth;
  g.window = cfg.window;
  g.seed = cfg.seed;
  const auto pop = simulate(g);
  {
    auto f = st.output(fs::path(cfg.cdr).filename().string());
    write_cdr(f, emit_cdr(pop.graph, pop.profiles, g.window, g.seed));
  }
  {
    auto f = st.output(fs::path(cfg.subscribers).filename().string());
    write_subscribers(f, pop.profiles);
  }
  {
    auto f = st.output(fs::path(cfg.adoptions).filename().string());
    write_adoptions(f, pop.truth.adoptions);
  }
  {
    auto f = st.output("truth.json");
    write_truth_json(f, pop.truth, g);
  }
  std::size_t core_adopters = 0;
  for (const auto& [id, m] : pop.truth.adoptions) core_adopters += pop.truth.core.count(id);
  st.record().summary = {{"nodes", pop.graph.node_count()},
                         {"edges", pop.graph.edge_count()},
                         {"planted_core", pop.truth.core.size()},
                         {"adopters", pop.truth.adoptions.size()},
                         {"core_adopters", core_adopters}};
}

void stage_graph(Stage& st, const PipelineConfig& cfg) {
  const auto parsed = read_cdr_file(st.input(cfg.cdr), cfg.window);
  const SocialGraph g = build_graph(parsed.events, cfg.reciprocity);
  const DegreeStats ds = degree_stats(g);
  {
    auto f = st.output("graph.csv");
    write_graph_dump(f, g, cfg.window);
  }
  {
    auto f = st.output("degree_hist.csv");
    f << "degree,count\n";
    for (const auto& [d, n] : ds.histogram) f << d << ',' << n << '\n';
  }
  {
    auto f = st.output("home_regions.csv");
    f << "id,region\n";
    for (const auto& [id, r] : infer_home_regions(parsed.events)) f << id << ',' << r << '\n';
  }
  json summary = {{"events", parsed.events.size()},
                  {"skipped", parsed.skipped},
                  {"skip_reasons", parsed.skip_reasons},
                  {"reciprocity", to_string(cfg.reciprocity)},
                  {"nodes", g.node_count()},
                  {"edges", g.edge_count()},
                  {"degree_mean", ds.mean},
                  {"degree_std", ds.std},
                  {"degree_median", ds.median}};
  st.json_file("graph_summary.json", summary);
  st.record().summary = summary;
}

void stage_communities(Stage& st, const PipelineConfig& cfg) {
  const SocialGraph g = read_graph_dump_file(st.input("graph.csv"), cfg.window);
  const auto profiles = make_profile_table(read_subscribers_file(st.input(cfg.subscribers)));
  const auto adoptions = windowed_adoptions(read_adoptions_file(st.input(cfg.adoptions)), cfg.window, nullptr);
  std::set<SubscriberId> adopters;
  for (const auto& [id, m] : adoptions) {
    if (g.contains(id)) adopters.insert(id);
  }

  const auto& cc = cfg.communities;
  std::vector<Community> raw;
  std::map<int, std::size_t> k_hist;
  std::size_t fitted = 0, too_small = 0, cv_fallback = 0;
  for (SubscriberId ego : adopters) {
    const EgoNetwork net = ego_network(g, ego);
    const auto n = static_cast<int>(net.members.size());
    if (n < std::max(cc.min_ego_size, 2)) {
      ++too_small;
      continue;
    }
    const AttributeMatrix attrs = binarize(profiles, net.members);
    const AffiliationData data = AffiliationData::full(net.adjacency(), attrs.bits);
    int k = cc.k_grid.front();
    try {
      k = select_k(data, cc.k_grid, cc.folds, mix_seed(cfg.seed, static_cast<std::uint64_t>(2 * ego)), cc.options).best_k;
    } catch (const Error&) {
      k = *std::min_element(cc.k_grid.begin(), cc.k_grid.end());
      ++cv_fallback;
    }
    ++k_hist[k];
    const CesnaFit f = fit(net, attrs, k, mix_seed(cfg.seed, static_cast<std::uint64_t>(2 * ego + 1)), cc.options);
    for (auto& c : extract(f.model, net)) raw.push_back(std::move(c));
    ++fitted;
  }
  const std::size_t before = raw.size();
  const auto kept = dedup_filter(std::move(raw), adopters);
  const auto counts = membership_counts(kept, adopters);

  st.json_file("communities.json", communities_to_json(kept, adopters));
  {
    auto f = st.output("membership_hist.csv");
    f << "count,n_all,n_adopters\n";
    std::set<int> keys;
    for (const auto& [c, n] : counts.hist_all) keys.insert(c);
    for (int c : keys) {
      const auto a = counts.hist_adopters.find(c);
      f << c << ',' << counts.hist_all.at(c) << ',' << (a == counts.hist_adopters.end() ? 0 : a->second) << '\n';
    }
  }
  json kh = json::object();
  for (const auto& [k, n] : k_hist) kh[std::to_string(k)] = n;
  json summary = {{"adopter_egos", adopters.size()},   {"fitted", fitted},
                  {"skipped_small", too_small},        {"cv_fallback", cv_fallback},
                  {"selected_k", kh},                  {"extracted", before},
                  {"retained", kept.size()},           {"subpopulation", counts.count.size()}};
  st.json_file("communities_summary.json", summary);
  st.record().summary = summary;
}

void stage_coreperi(Stage& st, const PipelineConfig& cfg) {
  const SocialGraph g = read_graph_dump_file(st.input("graph.csv"), cfg.window);
  const auto comms = read_communities(st.input("communities.json"));
  const auto adoptions = windowed_adoptions(read_adoptions_file(st.input(cfg.adoptions)), cfg.window, nullptr);
  std::set<SubscriberId> adopters;
  for (const auto& [id, m] : adoptions) adopters.insert(id);

  const auto counts = membership_counts(comms, adopters);
  const auto cls = classify(counts.count, cfg.core_threshold, adopters);
  const auto prof = connectivity_profile(g, counts.count, cfg.alpha_grid);
  {
    auto f = st.output("corelabels.csv");
    f << "id,count,is_core\n";
    for (const auto& l : cls.labels) f << l.node << ',' << l.count << ',' << (l.is_core ? 1 : 0) << '\n';
  }
  {
    auto f = st.output("calpha.csv");
    f << "alpha,n_nodes,c_alpha\n";
    for (const auto& p : prof.points) f << p.alpha << ',' << p.n_nodes << ',' << csv::format(p.c_alpha) << '\n';
  }
  const auto& s = cls.summary;
  json summary = {{"core_threshold", cfg.core_threshold},
                  {"n_core", s.n_core},
                  {"n_peri", s.n_peri},
                  {"core_adopters", s.core_adopters},
                  {"peri_adopters", s.peri_adopters},
                  {"core_adopter_share", s.core_adopter_share()},
                  {"peri_adopter_share", s.peri_adopter_share()},
                  {"notes", prof.notes}};
  st.json_file("coreperi_summary.json", summary);
  st.record().summary = summary;
}

void stage_panel(Stage& st, const PipelineConfig& cfg) {
  const SocialGraph g = read_graph_dump_file(st.input("graph.csv"), cfg.window);
  const auto labels = read_labels(st.input("corelabels.csv"));
  const auto comms = read_communities(st.input("communities.json"));
  std::size_t late = 0;
  const auto adoptions = windowed_adoptions(read_adoptions_file(st.input(cfg.adoptions)), cfg.window, &late);
  auto profiles = make_profile_table(read_subscribers_file(st.input(cfg.subscribers)));
  std::size_t relocated = 0;
  for (const auto& [id, region] : read_regions(st.input("home_regions.csv"))) {
    auto it = profiles.find(id);
    if (it == profiles.end() || region.empty()) continue;
    relocated += it->second.region != region;
    it->second.region = region;
  }
  const Panel panel = build_panel(g, labels, adoptions, profiles, comms, cfg.window);
  {
    auto f = st.output("panel.csv");
    write_panel_csv(f, panel);
  }
  std::size_t events = 0;
  for (const auto& r : panel.rows) events += static_cast<std::size_t>(r.adopted);
  st.record().summary = {{"rows", panel.rows.size()},
                         {"adoptions", events},
                         {"adoptions_after_window", late},
                         {"region_from_calls_differs", relocated}};
}

const std::vector<std::string> kEndogenous = {"core_frd_adopt_lag", "peri_frd_adopt_lag"};

json fit_to_json(const FitResult& f, const Formula& formula) {
  json coef = json::object();
  for (std::size_t j = 0; j < f.names.size(); ++j) {
    const auto k = static_cast<Eigen::Index>(j);
    coef[f.names[j]] = {{"est", f.beta(k)}, {"se", f.se(k)}, {"p", f.p_value(k)}};
  }
  return {{"model", f.model},
          {"coef", coef},
          {"order", f.names},
          {"loglik", f.loglik},
          {"null_loglik", f.null_loglik},
          {"pseudo_r2", f.pseudo_r2},
          {"n", f.n_obs},
          {"converged", f.converged},
          {"iterations", f.iterations},
          {"gradient_norm", f.gradient_norm},
          {"se_corrected", f.se_corrected},
          {"bootstrap_replicates", f.bootstrap_replicates},
          {"controls",
           {{"region", formula.region_effects}, {"month", formula.month_effects}, {"community", formula.community_effects},
            {"min_community_subscribers", formula.min_community_subscribers}}},
          {"notes", f.notes}};
}

FitResult fit_from_json(const json& j) {
  FitResult f;
  f.model = j.at("model").get<std::string>();
  f.names = j.at("order").get<std::vector<std::string>>();
  const auto n = static_cast<Eigen::Index>(f.names.size());
  f.beta.resize(n);
  f.se.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& c = j.at("coef").at(f.names[static_cast<std::size_t>(k)]);
    f.beta(k) = c.at("est").get<double>();
    f.se(k) = c.at("se").get<double>();
  }
  f.loglik = j.at("loglik").get<double>();
  f.null_loglik = j.at("null_loglik").get<double>();
  f.pseudo_r2 = j.at("pseudo_r2").get<double>();
  f.n_obs = j.at("n").get<Eigen::Index>();
  f.converged = j.at("converged").get<bool>();
  return f;
}

struct CellSpec {
  const char* key;
  const char* label;
  bool core;
  bool two_sri;
};

const CellSpec kCells[] = {{"core_probit", "Core Probit [1]", true, false},
                           {"core_2sri", "Core 2SRI [2]", true, true},
                           {"peri_probit", "Periphery Probit [3]", false, false},
                           {"peri_2sri", "Periphery 2SRI [4]", false, true}};

void stage_estimate(Stage& st, const PipelineConfig& cfg) {
  const Panel panel = read_panel_csv_file(st.input("panel.csv"), cfg.window);
  const auto labels = read_labels(st.input("corelabels.csv"));
  const auto [core, peri] = stratify(panel, labels);
  Formula formula;
  formula.min_community_subscribers = cfg.min_community_subscribers;
  json cells = json::object();
  json order = json::array();
  std::size_t ok = 0;
  for (const auto& def : kCells) {
    order.push_back(def.key);
    json cell;
    try {
      const Panel& stratum = def.core ? core : peri;
      const DesignMatrix d = drop_perfect_predictors(to_design_matrix(stratum, formula), kEndogenous);
      FitResult f;
      if (def.two_sri) {
        TwoSriOptions o;
        o.probit = cfg.probit;
        o.bootstrap = cfg.bootstrap;
        o.seed = mix_seed(cfg.seed, def.core ? 11 : 12);
        f = two_sri_fit(d, kEndogenous, o);
      } else {
        f = probit_fit(d, cfg.probit);
      }
      cell = fit_to_json(f, formula);
      ++ok;
    } catch (const Error& e) {
      cell = {{"error", e.what()}};
    }
    cell["label"] = def.label;
    cell["stratum"] = def.core ? "core" : "periphery";
    cells[def.key] = cell;
  }
  st.json_file("estimates.json", {{"cells", cells}, {"order", order}});
  st.record().summary = {{"core_rows", core.rows.size()}, {"periphery_rows", peri.rows.size()}, {"cells_ok", ok}};
}

std::string bars_svg(const std::string& title, const std::string& xl, const std::string& yl,
                     std::vector<PlotSeries> series, bool log_x, bool log_y) {
  Plot p;
  p.title = title;
  p.x_label = xl;
  p.y_label = yl;
  p.log_x = log_x;
  p.log_y = log_y;
  p.series = std::move(series);
  return render_svg(p);
}

void stage_report(Stage& st, const PipelineConfig&) {
  {
    const auto d = read_numeric_csv(st.input("degree_hist.csv"));
    PlotSeries s{"nodes", {}, PlotStyle::markers};
    for (std::size_t i = 0; i < d.at("degree").size(); ++i) s.points.emplace_back(d.at("degree")[i], d.at("count")[i]);
    st.text("fig1_degree.svg", bars_svg("Degree distribution", "degree", "number of nodes", {s}, true, true));
  }
  {
    const auto m = read_numeric_csv(st.input("membership_hist.csv"));
    const auto& counts = m.at("count");
    double all = 0, ad = 0;
    for (double v : m.at("n_all")) all += v;
    for (double v : m.at("n_adopters")) ad += v;
    PlotSeries a{"all nodes", {}, PlotStyle::bars}, b{"adopters", {}, PlotStyle::bars};
    for (std::size_t i = 0; i < counts.size(); ++i) {
      a.points.emplace_back(counts[i], all > 0 ? m.at("n_all")[i] / all : 0.0);
      b.points.emplace_back(counts[i], ad > 0 ? m.at("n_adopters")[i] / ad : 0.0);
    }
    st.text("fig2_membership.svg",
            bars_svg("Community memberships per node", "number of communities", "share of nodes", {a, b}, false, false));
  }
  {
    const auto c = read_numeric_csv(st.input("calpha.csv"));
    PlotSeries s{"C(alpha)", {}, PlotStyle::line};
    if (c.count("alpha")) {
      for (std::size_t i = 0; i < c.at("alpha").size(); ++i) s.points.emplace_back(c.at("alpha")[i], c.at("c_alpha")[i]);
    }
    st.text("fig3_calpha.svg",
            bars_svg("Core connectivity", "alpha (minimum memberships)", "share in largest component", {s}, false, false));
  }
  json est;
  const std::string path = st.input("estimates.json");
  try {
    est = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error("report: cannot read " + path + ": " + e.what());
  }
  std::vector<ReportCell> cells;
  json skipped = json::array();
  for (const auto& key : est.at("order")) {
    const json& c = est.at("cells").at(key.get<std::string>());
    if (c.contains("error")) {
      skipped.push_back({{"cell", key}, {"error", c.at("error")}});
      continue;
    }
    ReportCell cell;
    cell.label = c.at("label").get<std::string>();
    cell.fit = fit_from_json(c);
    cell.formula.region_effects = c.at("controls").at("region").get<bool>();
    cell.formula.month_effects = c.at("controls").at("month").get<bool>();
    cell.formula.community_effects = c.at("controls").at("community").get<bool>();
    cells.push_back(std::move(cell));
  }
  if (cells.empty()) throw Error("report: no estimate cell succeeded");
  const ReportTable table = report_table(cells);
  {
    auto f = st.output("table3.csv");
    write_report_csv(f, table);
  }
  {
    auto f = st.output("table3.txt");
    write_report_text(f, table);
  }
  st.record().summary = {{"columns", table.columns}, {"rows", table.rows.size()}, {"skipped_cells", skipped}};
}

}  // namespace

json manifest_json(const StageRecord& r, const PipelineConfig& cfg, bool with_timings) {
  json inputs = json::array();
  for (const auto& p : r.inputs) {
    const std::string body = fs::exists(p) ? read_file(p) : std::string();
    const auto rel = fs::path(p).lexically_relative(cfg.out_dir);
    const std::string shown = !rel.empty() && *rel.begin() != ".." ? rel.string() : p;
    inputs.push_back({{"path", shown}, {"fnv1a", fnv1a_hex(body)}, {"bytes", body.size()}});
  }
  json outputs = json::array();
  for (const auto& name : r.outputs) {
    const std::string body = read_file((fs::path(cfg.out_dir) / name).string());
    outputs.push_back({{"path", name}, {"fnv1a", fnv1a_hex(body)}, {"bytes", body.size()}});
  }
  json j = {{"stage", r.stage},   {"seed", cfg.seed},     {"config_hash", config_hash(cfg)},
            {"inputs", inputs},   {"outputs", outputs},   {"summary", r.summary}};
  if (with_timings) j["timings"] = {{"seconds", r.seconds}};
  return j;
}

StageRecord run_stage(const std::string& stage, const PipelineConfig& cfg) {
  Stage st(stage, cfg);
  const auto t0 = std::chrono::steady_clock::now();
  if (stage == "simulate") {
    stage_simulate(st, cfg);
  } else if (stage == "graph") {
    stage_graph(st, cfg);
  } else if (stage == "communities") {
    stage_communities(st, cfg);
  } else if (stage == "coreperi") {
    stage_coreperi(st, cfg);
  } else if (stage == "panel") {
    stage_panel(st, cfg);
  } else if (stage == "estimate") {
    stage_estimate(st, cfg);
  } else if (stage == "report") {
    stage_report(st, cfg);
  } else {
    throw Error("unknown stage " + stage);
  }
  StageRecord rec = st.record();
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ofstream f(fs::path(cfg.out_dir) / ("manifest_" + stage + ".json"), std::ios::binary);
  if (!f) throw Error("cannot write manifest for " + stage);
  f << manifest_json(rec, cfg).dump(2) << '\n';
  return rec;
}

std::vector<StageRecord> run_command(const std::string& command, const PipelineConfig& cfg) {
  cfg.validate();
  std::vector<std::string> stages;
  if (command == "pipeline") {
    stages = stage_names();
  } else if (std::find(stage_names().begin(), stage_names().end(), command) != stage_names().end()) {
    stages = {command};
  } else {
    throw Error("unknown subcommand " + command);
  }
  std::vector<StageRecord> out;
  json runs = json::array();
  double total = 0.0;
  for (const auto& s : stages) {
    out.push_back(run_stage(s, cfg));
    runs.push_back(manifest_json(out.back(), cfg));
    total += out.back().seconds;
  }
  const json m = {{"command", command},         {"seed", cfg.seed}, {"config_hash", config_hash(cfg)},
                  {"config", [&] {
                     json c = config_to_json(cfg);
                     c.erase("out_dir");
                     return c;
                   }()},
                  {"stages", runs},             {"timings", {{"seconds", total}}}};
  std::ofstream f(fs::path(cfg.out_dir) / "manifest.json", std::ios::binary);
  if (!f) throw Error("cannot write manifest.json");
  f << m.dump(2) << '\n';
  return out;
}

}  // namespace corepulse
