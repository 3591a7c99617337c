#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "gensense/config.hpp"

namespace gensense {

/// Artifact locations inside a run directory.
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path data_dir() const { return root / "data"; }
  std::filesystem::path baseline() const { return root / "baseline.gsck"; }
  std::filesystem::path ranking() const { return root / "ranking.txt"; }
  std::filesystem::path generative() const { return root / "generative.gsck"; }
  std::filesystem::path table() const { return root / "table.csv"; }
  std::filesystem::path stats() const { return root / "stats.txt"; }
  std::filesystem::path record() const { return root / "run.json"; }
};

struct EvalOutcome {
  EvalTable table;
  std::map<std::string, std::uint64_t> head_hashes;  // per modality; shared by both rows
};

struct RunSummary {
  EvalTable table;
  std::map<std::string, double> stats;
  std::map<std::string, std::uint64_t> head_hashes;
  std::uint64_t baseline_hash = 0;             // as trained
  std::uint64_t baseline_hash_after_units = 0;  // as stored inside the generative network
  std::size_t baseline_parameters = 0;
  std::size_t unit_parameters = 0;
};

// Each stage reads and writes only the files of RunLayout{cfg.out_dir}.
// Failures are rethrown as Error("stage <name>: ...").
void stage_gen_data(const RunConfig& cfg);
void stage_train_baseline(const RunConfig& cfg);
void stage_rank(const RunConfig& cfg);
void stage_train_units(const RunConfig& cfg);
EvalOutcome stage_eval(const RunConfig& cfg);
std::map<std::string, double> stage_report(const RunConfig& cfg);

// Statistics derived from a table: per modality clean accuracy, averages,
// drop and improvement percentages and gap recovery.
std::map<std::string, double> table_statistics(const EvalTable& table);
std::string format_statistics(const std::map<std::string, double>& stats);

// Validates the config, then runs every stage and writes run.json.
RunSummary run_pipeline(const RunConfig& cfg);

}  // namespace gensense
