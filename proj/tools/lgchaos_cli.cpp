#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lgchaos/harness.hpp"

namespace {

void report(const lgchaos::Error& e) {
  nlohmann::json rec = {{"kind", lgchaos::to_string(e.kind())},
                        {"message", e.what()},
                        {"exit_code", lgchaos::exit_code_for(e.kind())}};
  if (const auto* ce = dynamic_cast<const lgchaos::ConfigError*>(&e)) {
    rec["key"] = ce->key();
    if (ce->line() > 0) rec["line"] = ce->line();
  }
  std::cerr << rec.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lgchaos: transformed Hermite chaos for Ito diffusions, with Monte-Carlo and Fokker-Planck references"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;

  for (const auto& name : lgchaos::known_methods()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->add_option("--seed", seed, "override the config seed");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : lgchaos::exit_config;
  }
  const std::string method = app.get_subcommands().front()->get_name();

  try {
    lgchaos::RunConfig cfg = lgchaos::load_config(config_path, method);
    if (seed) cfg.seed = *seed;
    const auto outcome = lgchaos::run(cfg, out_dir);
    if (outcome.exit_code != lgchaos::exit_ok) std::cerr << outcome.manifest["error"].dump() << '\n';
    else std::cout << (std::filesystem::path(out_dir) / "manifest.json").string() << '\n';
    return outcome.exit_code;
  } catch (const lgchaos::Error& e) {
    report(e);
    return lgchaos::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"kind", "internal"}, {"message", e.what()}, {"exit_code", 1}}.dump() << '\n';
    return 1;
  }
}
