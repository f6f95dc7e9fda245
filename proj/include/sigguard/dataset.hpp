#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace sigguard {

// How targets map to classes when scoring accuracy. kNone marks regression
// data (e.g. random-target sets) for which accuracy is undefined.
enum class LabelMode { kNone, kOneHot, kBuckets, kThreshold };

struct Dataset {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> targets;
  std::string name;
  std::vector<std::pair<double, double>> input_range;  // per dimension
  LabelMode label_mode = LabelMode::kNone;
  int bucket_count = 0;    // LabelMode::kBuckets
  double threshold = 0.5;  // LabelMode::kThreshold

  std::size_t size() const { return inputs.size(); }
  int input_dim() const { return inputs.empty() ? 0 : static_cast<int>(inputs.front().size()); }
  int target_dim() const { return targets.empty() ? 0 : static_cast<int>(targets.front().size()); }

  // inputs/targets same length, consistent dims, inputs within input_range.
  void validate() const;
};

// Seeded uniform inputs in [0,1]^input_dim with uniform scalar targets in
// [0,1]. Regression data: label_mode is kNone.
Dataset make_random_dataset(int n_samples, int input_dim, std::uint64_t seed);

// Flat binary sidecar cache (version-tagged, native little-endian). A dataset
// saved and reloaded is bit-identical.
void save_dataset_cache(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset_cache(const std::filesystem::path& path);

}  // namespace sigguard
