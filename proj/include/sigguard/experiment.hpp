#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sigguard/dataset.hpp"
#include "sigguard/extraction.hpp"
#include "sigguard/mlp.hpp"
#include "sigguard/theory.hpp"
#include "sigguard/train.hpp"

namespace sigguard {

enum class DatasetKind { kMnist, kRandom };

// Model naming convention "<Dataset><in>-<width>x<depth>-<out>" with an
// optional "(s<seed>)" suffix, e.g. "MNIST784-8x2-1 (s2)" -> <784,8,8,1>.
struct ParsedModelName {
  DatasetKind kind = DatasetKind::kRandom;
  Architecture architecture;
  std::optional<int> seed_tag;
};
ParsedModelName parse_model_name(const std::string& name);

struct WeightStats {
  double variance = 0.0;  // population variance of the layer's weights
  std::vector<int> histogram;
  double bin_low = -1.5;
  double bin_high = 1.5;
  double mean_pairwise_sq_row_distance = 0.0;
};
WeightStats weight_stats(const MLPModel& model, int layer_index, int bins = 60,
                         double bin_low = -1.5, double bin_high = 1.5);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kRandom;
  // MNIST options
  std::string mnist_dir;
  std::optional<std::size_t> limit;
  std::optional<std::size_t> test_limit;
  // Random-data options
  int n_samples = 1000;
  std::uint64_t data_seed = 0;
};

struct ExperimentConfig {
  std::string name;  // paper-style model id; architecture is derived from it
  DatasetSpec dataset;
  std::vector<std::uint64_t> training_seeds;
  std::vector<std::uint64_t> extraction_seeds;
  TrainingConfig training;
  DefenseConfig defense;  // lambda for the secure run; baseline always retrains at 0
  AttackConfig attack;
  std::string out_dir;

  Architecture architecture() const { return parse_model_name(name).architecture; }
  void validate() const;
};

ExperimentConfig experiment_config_from_json(const std::string& text);
std::string experiment_config_to_json(const ExperimentConfig& config);

// One Table-style row per training seed. Attack statistics (queries, seconds)
// are mean/variance across the extraction seeds of the baseline runs; secure
// runs keep their verdicts. Cells that fail carry an error string instead of
// aborting the table.
struct ResultRow {
  std::string model_id;
  std::uint64_t training_seed = 0;
  std::string baseline_accuracy;  // number or "NA"/error text
  std::string secure_accuracy;
  std::string accuracy_change_pct;  // secure minus baseline, percentage points
  double lambda_similarity = 0.0;
  std::vector<std::string> baseline_verdicts;  // per extraction seed
  std::vector<std::string> secure_verdicts;
  std::string queries_mean;
  std::string queries_var;
  std::string signature_seconds_mean;
  std::string signature_seconds_var;
  std::string sign_seconds = "n/a (out of scope)";
  std::string worst_pair_probability_baseline;
  std::string worst_pair_probability_secure;
  std::string weight_variance_baseline;
  std::string weight_variance_secure;
  std::string row_error;  // nonempty if the whole row failed (e.g. missing data)
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::filesystem::path table_csv;
  std::filesystem::path report_json;
};

// Trains baseline/secure pairs per training seed, attacks each per extraction
// seed, computes probability and weight statistics, and persists config echo,
// models, attack reports, table.csv and report.json under config.out_dir.
ExperimentResult run_experiment(const ExperimentConfig& config);

std::string result_table_csv(const std::vector<ResultRow>& rows);

// RFC-4180 field quoting.
std::string csv_escape(const std::string& field);

}  // namespace sigguard
