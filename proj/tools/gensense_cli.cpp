// Command-line front end: one subcommand per pipeline stage plus `run`.

#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "gensense/error.hpp"
#include "gensense/pipeline.hpp"
#include "gensense/text.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::map<std::string, std::string> values;
};

void add_config_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "flat key = value configuration file");
  for (auto key : gensense::RunConfig::keys()) {
    const std::string k(key);
    cmd->add_option_function<std::string>("--" + k, [&o, k](const std::string& v) { o.values[k] = v; },
                                          "overrides config key '" + k + "'");
  }
}

gensense::RunConfig resolve(const Overrides& o) {
  gensense::RunConfig cfg = o.config_path.empty() ? gensense::RunConfig{} : gensense::RunConfig::load(o.config_path);
  for (const auto& [k, v] : o.values) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

void print_table(const gensense::EvalTable& table) { std::cout << table.to_csv(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gensense: selective feature regeneration for degraded sensors"};
  app.require_subcommand(1);

  Overrides o;
  struct Command {
    const char* name;
    const char* help;
  };
  const Command commands[] = {
      {"gen-data", "render the synthetic shape dataset into <out>/data"},
      {"train-baseline", "train the baseline classifier on clean data"},
      {"rank", "measure per-channel susceptibility at the ranking tap"},
      {"train-units", "select channels and train generative units"},
      {"eval", "fit the linear head and evaluate both extractors"},
      {"report", "derive drop/improvement statistics from table.csv"},
      {"run", "execute the full pipeline"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : commands) {
    subs[c.name] = app.add_subcommand(c.name, c.help);
    add_config_options(subs[c.name], o);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = resolve(o);
    if (subs["gen-data"]->parsed()) gensense::stage_gen_data(cfg);
    if (subs["train-baseline"]->parsed()) gensense::stage_train_baseline(cfg);
    if (subs["rank"]->parsed()) gensense::stage_rank(cfg);
    if (subs["train-units"]->parsed()) gensense::stage_train_units(cfg);
    if (subs["eval"]->parsed()) {
      const auto outcome = gensense::stage_eval(cfg);
      print_table(outcome.table);
      for (const auto& [tag, h] : outcome.head_hashes) std::cout << "head " << tag << ' ' << gensense::hex64(h) << '\n';
    }
    if (subs["report"]->parsed()) std::cout << gensense::format_statistics(gensense::stage_report(cfg));
    if (subs["run"]->parsed()) {
      const auto summary = gensense::run_pipeline(cfg);
      print_table(summary.table);
      std::cout << gensense::format_statistics(summary.stats);
    }
  } catch (const std::exception& e) {
    std::cerr << "gensense: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
