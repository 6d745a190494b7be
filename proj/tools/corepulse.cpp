#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "corepulse/error.hpp"
#include "corepulse/pipeline.hpp"

namespace {

int fail(const std::string& kind, const std::string& message, const std::string& path, int code) {
  nlohmann::json e = {{"kind", kind}, {"message", message}};
  if (!path.empty()) e["path"] = path;
  std::cerr << nlohmann::json{{"error", e}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"corepulse: peer influence pipeline over call records"};
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> overrides;

  std::vector<std::string> commands = corepulse::stage_names();
  commands.push_back("pipeline");
  app.add_option("subcommand", command, "stage to run, or pipeline for all of them")
      ->required()
      ->check(CLI::IsMember(commands));
  app.add_option("--config", config_path, "JSON config; defaults apply to missing keys");
  app.add_option("--seed", seed, "overrides seed");
  app.add_option("--out", out, "overrides out_dir");
  app.add_option("--set", overrides, "key=value override, dotted keys (repeatable)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    nlohmann::json doc = nlohmann::json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw corepulse::MissingInputError(config_path);
      doc = nlohmann::json::parse(in, nullptr, false);
      if (doc.is_discarded()) throw corepulse::Error("config: cannot parse " + config_path);
    }
    for (const auto& o : overrides) corepulse::apply_override(doc, o);
    if (seed) doc["seed"] = *seed;
    if (out) doc["out_dir"] = *out;
    const auto cfg = corepulse::config_from_json(doc);
    for (const auto& r : corepulse::run_command(command, cfg)) {
      std::cout << r.stage << ": " << r.outputs.size() << " artifacts, " << r.seconds << " s\n";
    }
  } catch (const corepulse::MissingInputError& e) {
    return fail("missing_input", e.what(), e.path(), 2);
  } catch (const std::exception& e) {
    return fail("error", e.what(), "", 1);
  }
  return 0;
}
