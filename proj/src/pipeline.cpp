#include "gensense/pipeline.hpp"

#include <algorithm>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "gensense/bytes.hpp"
#include "gensense/error.hpp"
#include "gensense/text.hpp"

namespace gensense {

namespace {

template <class F>
auto run_stage(std::string_view name, F&& body) {
  std::clog << "[gensense] " << name << '\n';
  try {
    return body();
  } catch (const std::exception& e) {
    throw Error("stage " + std::string(name) + ": " + e.what());
  }
}

RunLayout layout(const RunConfig& cfg) { return {cfg.out_dir}; }

DatasetSplits load_data(const RunConfig& cfg) { return read_dataset(layout(cfg).data_dir(), cfg.manifest()); }

FeatureTap ranking_tap(const NetworkSpec& spec, const RunConfig& cfg) {
  FeatureTap tap = cfg.ranking_layer ? FeatureTap{*cfg.ranking_layer, TapRole::ranking} : default_ranking_tap(spec);
  check_tap(spec, tap);
  return tap;
}

FeatureTap extractor_tap(const NetworkSpec& spec, const RunConfig& cfg) {
  FeatureTap tap =
      cfg.extractor_layer ? FeatureTap{*cfg.extractor_layer, TapRole::extractor} : default_extractor_tap(spec);
  check_tap(spec, tap);
  return tap;
}

struct SensorType {
  std::string tag;
  DegradationChain prefix;  // applied before blur
};

std::vector<SensorType> sensor_types(const RunConfig& cfg) {
  std::vector<SensorType> out{{cfg.primary_tag, {}}};
  if (cfg.modality) out.push_back({cfg.modality_tag, {DegradationSpec::modality_shift(*cfg.modality, cfg.modality_tag)}});
  return out;
}

std::vector<DegradationChain> level_chains(const SensorType& type, const std::vector<double>& sigmas) {
  std::vector<DegradationChain> out;
  for (double s : sigmas) {
    DegradationChain chain = type.prefix;
    chain.push_back(DegradationSpec::blur(s));
    chain.back().modality_tag = type.tag;
    out.push_back(std::move(chain));
  }
  return out;
}

std::string level_name(double sigma) { return "sigma_" + format_double(sigma); }

}  // namespace

namespace {
void log_epoch(int epoch, double loss) {
  std::clog << "[gensense]   epoch " << epoch << " loss " << format_fixed(loss, 6) << '\n';
}
}  // namespace

void stage_gen_data(const RunConfig& cfg) {
  run_stage("gen-data", [&] {
    const auto manifest = cfg.manifest();
    write_dataset(layout(cfg).data_dir(), manifest, generate_dataset(manifest));
  });
}

void stage_train_baseline(const RunConfig& cfg) {
  run_stage("train-baseline", [&] {
    const auto data = load_data(cfg);
    const auto manifest = cfg.manifest();
    const auto spec = NetworkSpec::reference({1, manifest.image_size, manifest.image_size}, manifest.num_classes);
    auto hyper = cfg.baseline_hyper();
    hyper.on_epoch = log_epoch;
    const auto ckpt = train_baseline(spec, data.train.data, hyper, manifest.name + "-" + hex64(manifest.seed));
    save_checkpoint(ckpt, layout(cfg).baseline());
  });
}

void stage_rank(const RunConfig& cfg) {
  run_stage("rank", [&] {
    const auto data = load_data(cfg);
    const auto ckpt = load_checkpoint(layout(cfg).baseline());
    const auto tap = ranking_tap(ckpt.spec, cfg);
    auto report = compute_delta_phi(ckpt, tap.layer_index, data.rank_eval.data,
                                    DegradationSpec::blur(cfg.effective_rank_sigma()), cfg.threads);
    report.eval_set_id = "rank-eval";
    save_report(report, layout(cfg).ranking());
  });
}

void stage_train_units(const RunConfig& cfg) {
  run_stage("train-units", [&] {
    const auto data = load_data(cfg);
    auto ckpt = load_checkpoint(layout(cfg).baseline());
    const auto report = load_report(layout(cfg).ranking());
    const auto mask = threshold_mask(report, cfg.mask);
    std::vector<SignificanceMask> masks;
    std::vector<GenerativeUnit> units;
    if (mask.count() > 0) {
      masks.push_back(mask);
      units.push_back(build_generative_unit(mask, cfg.unit_width, cfg.unit_seed()));
    }
    GenerativeNetwork net = assemble_gen_net(std::move(ckpt), std::move(masks), std::move(units));
    if (!net.units().empty()) {
      UnitTrainingSet train_set{data.train.data, {}};
      for (const auto& type : sensor_types(cfg)) {
        for (auto& chain : level_chains(type, cfg.sigma_levels)) train_set.mixture.push_back(std::move(chain));
      }
      auto hyper = cfg.unit_hyper();
      hyper.on_epoch = log_epoch;
      net = train_units(net, train_set, cfg.reg, hyper);
    }
    save_generative(net, layout(cfg).generative());
  });
}

EvalOutcome stage_eval(const RunConfig& cfg) {
  return run_stage("eval", [&] {
    const auto data = load_data(cfg);
    const auto ckpt = load_checkpoint(layout(cfg).baseline());
    const auto gen = load_generative(layout(cfg).generative());
    if (params_hash(gen.baseline().params) != params_hash(ckpt.params)) {
      throw Error("generative network was built on a different baseline checkpoint");
    }
    const auto tap = extractor_tap(ckpt.spec, cfg);
    const auto base_features = baseline_extractor(ckpt, tap);
    const auto gen_features = generative_extractor(gen, tap);

    EvalOutcome out;
    for (double s : cfg.sigma_levels) out.table.level_names.push_back(level_name(s));
    for (const auto& type : sensor_types(cfg)) {
      const Tensor head_inputs = degrade_batch(data.head_train.data.inputs, type.prefix);
      const LinearHead head =
          fit_linear_head(base_features(head_inputs), data.head_train.data.labels, ckpt.spec.num_classes, cfg.head);
      const auto levels = level_chains(type, cfg.sigma_levels);
      out.table.rows.push_back(eval_pipeline(base_features, head, data.test.data, levels, "baseline", type.tag));
      out.table.rows.push_back(
          eval_pipeline(gen_features, head, data.test.data, levels, "generative_sensing", type.tag));
      out.head_hashes[type.tag] = head.hash();
    }
    out.table.sort_rows();
    write_file_atomic(layout(cfg).table(), out.table.to_csv());
    return out;
  });
}

std::map<std::string, double> table_statistics(const EvalTable& table) {
  std::map<std::string, double> stats;
  const auto clean_it = std::find(table.level_names.begin(), table.level_names.end(), "sigma_0");
  const std::size_t clean = clean_it == table.level_names.end()
                                ? 0
                                : static_cast<std::size_t>(clean_it - table.level_names.begin());
  for (const auto& base : table.rows) {
    if (base.method != "baseline") continue;
    const auto gen = std::find_if(table.rows.begin(), table.rows.end(), [&](const EvalRow& r) {
      return r.method == "generative_sensing" && r.modality == base.modality;
    });
    const std::string m = base.modality + ".";
    const double base_clean = base.accuracies.at(clean);
    stats[m + "baseline_clean"] = base_clean;
    stats[m + "baseline_avg"] = base.average;
    if (base_clean > 0.0) stats[m + "baseline_drop_pct"] = relative_drop(base.average, base_clean);
    if (gen == table.rows.end()) continue;
    const double gen_clean = gen->accuracies.at(clean);
    stats[m + "generative_clean"] = gen_clean;
    stats[m + "generative_avg"] = gen->average;
    if (gen_clean > 0.0) stats[m + "generative_drop_pct"] = relative_drop(gen->average, gen_clean);
    if (base.average > 0.0) stats[m + "relative_improvement_pct"] = relative_improvement(gen->average, base.average);
    if (base_clean > base.average) stats[m + "gap_recovery"] = gap_recovery(gen->average, base.average, base_clean);
  }
  return stats;
}

std::string format_statistics(const std::map<std::string, double>& stats) {
  std::ostringstream os;
  for (const auto& [key, value] : stats) {
    os << key << " = " << format_fixed(value, key.ends_with("_pct") ? 1 : 4) << '\n';
  }
  return os.str();
}

std::map<std::string, double> stage_report(const RunConfig& cfg) {
  return run_stage("report", [&] {
    const auto bytes = read_file(layout(cfg).table());
    const auto table = EvalTable::parse_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    auto stats = table_statistics(table);
    write_file_atomic(layout(cfg).stats(), format_statistics(stats));
    return stats;
  });
}

RunSummary run_pipeline(const RunConfig& cfg) {
  run_stage("validate", [&] { cfg.validate(); });
  const RunLayout paths = layout(cfg);
  std::filesystem::create_directories(paths.root);

  stage_gen_data(cfg);
  stage_train_baseline(cfg);
  stage_rank(cfg);
  stage_train_units(cfg);
  auto outcome = stage_eval(cfg);
  auto stats = stage_report(cfg);

  return run_stage("record", [&] {
    RunSummary summary;
    const auto ckpt = load_checkpoint(paths.baseline());
    const auto gen = load_generative(paths.generative());
    summary.table = std::move(outcome.table);
    summary.stats = std::move(stats);
    summary.head_hashes = std::move(outcome.head_hashes);
    summary.baseline_hash = params_hash(ckpt.params);
    summary.baseline_hash_after_units = params_hash(gen.baseline().params);
    summary.baseline_parameters = parameter_count(ckpt.params);
    summary.unit_parameters = gen.unit_parameter_count();

    nlohmann::json record;
    record["config_hash"] = hex64(cfg.hash());
    record["seeds"] = {{"master", cfg.seed},
                       {"dataset", cfg.manifest().seed},
                       {"baseline", cfg.baseline_seed()},
                       {"units", cfg.unit_seed()}};
    record["parameters"] = {{"baseline", summary.baseline_parameters}, {"units", summary.unit_parameters}};
    record["baseline_hash"] = hex64(summary.baseline_hash);
    record["baseline_hash_after_units"] = hex64(summary.baseline_hash_after_units);
    for (const auto& [tag, h] : summary.head_hashes) record["head_hashes"][tag] = hex64(h);
    std::vector<std::filesystem::path> outputs;
    for (const auto& entry : std::filesystem::directory_iterator(paths.data_dir())) outputs.push_back(entry.path());
    outputs.insert(outputs.end(), {paths.baseline(), paths.ranking(), paths.generative(), paths.table(), paths.stats()});
    for (const auto& file : outputs) {
      const auto bytes = read_file(file);
      record["outputs"][std::filesystem::relative(file, paths.root).generic_string()] =
          hex64(fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
    }
    write_file_atomic(paths.record(), record.dump(2) + "\n");
    return summary;
  });
}

}  // namespace gensense
