#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "corepulse/community.hpp"
#include "corepulse/econ.hpp"
#include "corepulse/graphcore.hpp"
#include "corepulse/month.hpp"
#include "corepulse/synth.hpp"

namespace corepulse {

struct CommunityStageConfig {
  CesnaOptions options;
  std::vector<int> k_grid{1, 2, 3, 4};
  int folds = 3;
  int min_ego_size = 5;  // smaller ego-networks are skipped
};

/// Everything a run depends on. Relative input paths resolve against
/// out_dir, which is also where every artifact lands.
struct PipelineConfig {
  StudyWindow window;
  std::string cdr = "cdr.csv";
  std::string subscribers = "subscribers.csv";
  std::string adoptions = "adoptions.csv";
  ReciprocityRule reciprocity = ReciprocityRule::both_directions_same_month;
  GenConfig synth;  // window and seed are taken from the top level
  CommunityStageConfig communities;
  int core_threshold = 5;
  std::vector<int> alpha_grid{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  ProbitOptions probit;
  int bootstrap = 0;
  int min_community_subscribers = 20;
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  void validate() const;  // throws Error
  std::string resolve(const std::string& path) const;
};

nlohmann::json config_to_json(const PipelineConfig& cfg);

/// Overlays `j` on the defaults. Unknown keys and mistyped values are
/// errors naming the dotted key.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::string& path);

/// Applies "a.b.c=value" to a config document; the value is parsed as JSON
/// when possible and taken as a string otherwise.
void apply_override(nlohmann::json& j, std::string_view assignment);

/// FNV-1a over the config document with out_dir removed.
std::string config_hash(const PipelineConfig& cfg);
std::string fnv1a_hex(std::string_view bytes);

/// simulate, graph, communities, coreperi, panel, estimate, report.
const std::vector<std::string>& stage_names();

struct StageRecord {
  std::string stage;
  std::vector<std::string> inputs;   // as resolved
  std::vector<std::string> outputs;  // file names inside out_dir
  double seconds = 0.0;
  nlohmann::json summary;
};

/// Runs one stage and writes its artifacts plus manifest_<stage>.json.
StageRecord run_stage(const std::string& stage, const PipelineConfig& cfg);

/// Runs `command` ("pipeline" means every stage in order) and writes
/// manifest.json covering the stages it ran.
std::vector<StageRecord> run_command(const std::string& command, const PipelineConfig& cfg);

/// Manifest document for a record; `with_timings` false drops the timing
/// fields so two runs can be compared.
nlohmann::json manifest_json(const StageRecord& record, const PipelineConfig& cfg, bool with_timings = true);

}  // namespace corepulse
