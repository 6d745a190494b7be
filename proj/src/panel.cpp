#include "corepulse/panel.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "corepulse/csv.hpp"
#include "corepulse/error.hpp"

namespace corepulse {

std::map<SubscriberId, int> adoption_indices(const std::map<SubscriberId, Month>& adoptions,
                                             const StudyWindow& window) {
  std::map<SubscriberId, int> out;
  for (const auto& [id, month] : adoptions) {
    if (!window.contains(month)) {
      throw Error("adoption month " + month.to_string() + " of subscriber " + std::to_string(id) +
                  " is outside the study window");
    }
    out.emplace(id, window.index_of(month));
  }
  return out;
}

namespace {

std::vector<SubscriberId> label_ids(std::span<const CoreLabel> labels) {
  std::vector<SubscriberId> ids;
  ids.reserve(labels.size());
  for (const auto& l : labels) ids.push_back(l.node);
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// Number of entries of the sorted list `months` that are <= limit.
int count_through(const std::vector<int>& months, int limit) {
  return static_cast<int>(std::upper_bound(months.begin(), months.end(), limit) - months.begin());
}

}  // namespace

std::vector<InstrumentValues> build_instruments(const SocialGraph& graph,
                                                std::span<const CoreLabel> labels,
                                                const std::map<SubscriberId, Month>& adoptions,
                                                const Panel& panel) {
  const auto is_core = core_lookup(labels);
  const auto adopt = adoption_indices(adoptions, panel.window);
  const auto ids = label_ids(labels);
  const SocialGraph sub = graph.induced(ids);

  // sorted adoption indices of the qualifying k for each focal subscriber
  struct Reach {
    std::vector<int> core;
    std::vector<int> peri;
  };
  std::unordered_map<SubscriberId, Reach> reach;
  auto compute = [&](SubscriberId focal) {
    Reach r;
    const auto idx = sub.index_of(focal);
    if (!idx) return r;
    const auto friends = sub.neighbors(*idx);
    std::unordered_set<NodeIndex> via_core, via_peri;
    for (NodeIndex j : friends) {
      auto& target = is_core.at(sub.id(j)) ? via_core : via_peri;
      for (NodeIndex k : sub.neighbors(j)) {
        if (k == *idx || std::binary_search(friends.begin(), friends.end(), k)) continue;
        target.insert(k);
      }
    }
    auto months_of = [&](const std::unordered_set<NodeIndex>& set) {
      std::vector<int> months;
      for (NodeIndex k : set) {
        auto it = adopt.find(sub.id(k));
        if (it != adopt.end()) months.push_back(it->second);
      }
      std::sort(months.begin(), months.end());
      return months;
    };
    r.core = months_of(via_core);
    r.peri = months_of(via_peri);
    return r;
  };

  std::vector<InstrumentValues> out;
  out.reserve(panel.rows.size());
  for (const auto& row : panel.rows) {
    auto it = reach.find(row.id);
    if (it == reach.end()) it = reach.emplace(row.id, compute(row.id)).first;
    out.push_back({count_through(it->second.core, row.t - 1), count_through(it->second.peri, row.t - 1)});
  }
  return out;
}

Panel build_panel(const SocialGraph& graph, std::span<const CoreLabel> labels,
                  const std::map<SubscriberId, Month>& adoptions, const ProfileTable& profiles,
                  std::span<const Community> communities, const StudyWindow& window) {
  if (!window.valid()) throw Error("build_panel: invalid window");
  const auto is_core = core_lookup(labels);
  const auto adopt = adoption_indices(adoptions, window);
  const auto ids = label_ids(labels);
  const SocialGraph sub = graph.induced(ids);

  std::unordered_map<SubscriberId, std::vector<int>> membership;
  for (std::size_t c = 0; c < communities.size(); ++c) {
    for (SubscriberId id : communities[c].members) membership[id].push_back(static_cast<int>(c));
  }

  Panel panel;
  panel.window = window;
  const int horizon = window.length();
  for (SubscriberId id : ids) {
    auto prof = profiles.find(id);
    if (prof == profiles.end()) throw Error("build_panel: no profile for subscriber " + std::to_string(id));
    const auto& p = prof->second;

    std::vector<int> core_months, peri_months;
    int core_frd = 0, peri_frd = 0;
    if (auto idx = sub.index_of(id)) {
      for (NodeIndex j : sub.neighbors(*idx)) {
        const SubscriberId fid = sub.id(j);
        const bool core = is_core.at(fid);
        (core ? core_frd : peri_frd) += 1;
        if (auto it = adopt.find(fid); it != adopt.end()) {
          (core ? core_months : peri_months).push_back(it->second);
        }
      }
    }
    std::sort(core_months.begin(), core_months.end());
    std::sort(peri_months.begin(), peri_months.end());

    const auto own = adopt.find(id);
    const int last = own != adopt.end() ? own->second : horizon;
    std::vector<int> comms;
    if (auto it = membership.find(id); it != membership.end()) comms = it->second;

    for (int t = 1; t <= last; ++t) {
      PanelRow row;
      row.id = id;
      row.t = t;
      row.adopted = (own != adopt.end() && t == own->second) ? 1 : 0;
      row.core_frd_adopt_lag = count_through(core_months, t - 1);
      row.peri_frd_adopt_lag = count_through(peri_months, t - 1);
      row.core_frd = core_frd;
      row.peri_frd = peri_frd;
      row.gender = p.gender;
      row.prepaid = p.prepaid;
      row.phone = p.phone_technology;
      row.mobile_internet = p.mobile_internet;
      row.phone_age = p.phone_age;
      row.tenure_months = 12.0 * p.tenure + t;
      row.region = p.region;
      row.communities = comms;
      panel.rows.push_back(std::move(row));
    }
  }

  const auto z = build_instruments(graph, labels, adoptions, panel);
  for (std::size_t r = 0; r < panel.rows.size(); ++r) {
    panel.rows[r].z_core = z[r].z_core;
    panel.rows[r].z_peri = z[r].z_peri;
  }
  return panel;
}

std::pair<Panel, Panel> stratify(const Panel& panel, std::span<const CoreLabel> labels) {
  const auto is_core = core_lookup(labels);
  std::pair<Panel, Panel> out;
  out.first.window = out.second.window = panel.window;
  for (const auto& row : panel.rows) {
    auto it = is_core.find(row.id);
    if (it == is_core.end()) throw Error("stratify: subscriber " + std::to_string(row.id) + " is unlabeled");
    (it->second ? out.first : out.second).rows.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// panel.csv

const std::vector<std::string>& panel_columns() {
  static const std::vector<std::string> cols = {
      "id",          "month",          "t",          "adopted",       "core_frd_adopt_lag",
      "peri_frd_adopt_lag", "core_frd", "peri_frd",  "gender_male",   "gender_female",
      "prepaid",     "phone_2.5g",     "phone_3g",   "phone_3.5g",    "phone_other",
      "mobile_internet", "phone_age",  "tenure_t",   "region",        "communities",
      "z_core",      "z_peri"};
  return cols;
}

void write_panel_csv(std::ostream& out, const Panel& panel) {
  const auto& cols = panel_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : panel.rows) {
    out << r.id << ',' << panel.window.at(r.t).to_string() << ',' << r.t << ',' << r.adopted << ','
        << r.core_frd_adopt_lag << ',' << r.peri_frd_adopt_lag << ',' << r.core_frd << ','
        << r.peri_frd << ',' << (r.gender == Gender::male) << ',' << (r.gender == Gender::female)
        << ',' << r.prepaid << ',' << (r.phone == PhoneTechnology::g2_5) << ','
        << (r.phone == PhoneTechnology::g3) << ',' << (r.phone == PhoneTechnology::g3_5) << ','
        << (r.phone == PhoneTechnology::other) << ',' << r.mobile_internet << ','
        << csv::format(r.phone_age) << ',' << csv::format(r.tenure_months) << ',' << r.region << ',';
    for (std::size_t c = 0; c < r.communities.size(); ++c) out << (c ? ";" : "") << r.communities[c];
    out << ',' << r.z_core << ',' << r.z_peri << '\n';
  }
}

Panel read_panel_csv(std::istream& in, const StudyWindow& window) {
  std::string line;
  if (!std::getline(in, line)) throw Error("panel.csv: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    const auto header = csv::split(line);
    const auto& cols = panel_columns();
    if (header.size() != cols.size() || !std::equal(cols.begin(), cols.end(), header.begin())) {
      throw Error("panel.csv: unexpected header");
    }
  }
  Panel panel;
  panel.window = window;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = csv::split(line);
    auto bad = [&] { return Error("panel.csv: line " + std::to_string(line_no) + ": malformed"); };
    if (f.size() != panel_columns().size()) throw bad();
    auto as_int = [&](std::size_t i) {
      auto v = csv::to_int(f[i]);
      if (!v) throw bad();
      return static_cast<int>(*v);
    };
    auto as_double = [&](std::size_t i) {
      auto v = csv::to_double(f[i]);
      if (!v) throw bad();
      return *v;
    };
    PanelRow r;
    auto id = csv::to_int(f[0]);
    if (!id) throw bad();
    r.id = *id;
    r.t = as_int(2);
    r.adopted = as_int(3);
    r.core_frd_adopt_lag = as_int(4);
    r.peri_frd_adopt_lag = as_int(5);
    r.core_frd = as_int(6);
    r.peri_frd = as_int(7);
    r.gender = as_int(8) ? Gender::male : as_int(9) ? Gender::female : Gender::unknown;
    r.prepaid = as_int(10) != 0;
    r.phone = as_int(11)   ? PhoneTechnology::g2_5
              : as_int(12) ? PhoneTechnology::g3
              : as_int(13) ? PhoneTechnology::g3_5
              : as_int(14) ? PhoneTechnology::other
                           : PhoneTechnology::g2;
    r.mobile_internet = as_int(15) != 0;
    r.phone_age = as_double(16);
    r.tenure_months = as_double(17);
    r.region = std::string(f[18]);
    if (!f[19].empty()) {
      for (auto c : csv::split(f[19], ';')) {
        auto v = csv::to_int(c);
        if (!v) throw bad();
        r.communities.push_back(static_cast<int>(*v));
      }
    }
    r.z_core = as_int(20);
    r.z_peri = as_int(21);
    panel.rows.push_back(std::move(r));
  }
  return panel;
}

Panel read_panel_csv_file(const std::string& path, const StudyWindow& window) {
  std::ifstream in(path);
  if (!in) throw MissingInputError(path);
  return read_panel_csv(in, window);
}

}  // namespace corepulse
