#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "corepulse/community.hpp"
#include "corepulse/coreperi.hpp"
#include "corepulse/graphcore.hpp"

namespace corepulse {

/// One subscriber-month of the discrete-time hazard panel.
struct PanelRow {
  SubscriberId id = 0;
  int t = 1;  // 1-based month index within the window
  int adopted = 0;
  int core_frd_adopt_lag = 0;  // adoptions by core friends in months < t
  int peri_frd_adopt_lag = 0;
  int core_frd = 0;
  int peri_frd = 0;
  Gender gender = Gender::unknown;
  bool prepaid = false;
  PhoneTechnology phone = PhoneTechnology::g2;
  bool mobile_internet = false;
  double phone_age = 0.0;     // years, frozen at the snapshot
  double tenure_months = 0.0; // months since subscription at month t
  std::string region;
  std::vector<int> communities;  // community ids holding the subscriber
  int z_core = 0;
  int z_peri = 0;
};

struct Panel {
  StudyWindow window;
  std::vector<PanelRow> rows;  // grouped by subscriber (ascending id), then t
};

/// Window index (1-based) of each adopter. Throws Error naming the
/// subscriber when an adoption month falls outside the window.
std::map<SubscriberId, int> adoption_indices(const std::map<SubscriberId, Month>& adoptions,
                                             const StudyWindow& window);

/// Builds the panel over the labeled subpopulation. Friend sets come from
/// the union graph restricted to labeled nodes; rows stop at the adoption
/// month. Community ids are positions in `communities`.
Panel build_panel(const SocialGraph& graph, std::span<const CoreLabel> labels,
                  const std::map<SubscriberId, Month>& adoptions, const ProfileTable& profiles,
                  std::span<const Community> communities, const StudyWindow& window);

struct InstrumentValues {
  int z_core = 0;
  int z_peri = 0;
};

/// Friend-of-friend adoption counts over intransitive triads, one entry per
/// panel row: k counts for z_core(i,t) when k is adjacent to a core friend j
/// of i, k is not adjacent to i, k != i, and k adopted before month t.
std::vector<InstrumentValues> build_instruments(const SocialGraph& graph,
                                                std::span<const CoreLabel> labels,
                                                const std::map<SubscriberId, Month>& adoptions,
                                                const Panel& panel);

/// Splits rows by the focal subscriber's own label: {core, periphery}.
std::pair<Panel, Panel> stratify(const Panel& panel, std::span<const CoreLabel> labels);

/// Column order of panel.csv.
const std::vector<std::string>& panel_columns();
void write_panel_csv(std::ostream& out, const Panel& panel);
Panel read_panel_csv(std::istream& in, const StudyWindow& window);
Panel read_panel_csv_file(const std::string& path, const StudyWindow& window);

}  // namespace corepulse
