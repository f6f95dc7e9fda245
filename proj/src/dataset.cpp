#include "sigguard/dataset.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "sigguard/rng.hpp"

namespace sigguard {

void Dataset::validate() const {
  if (inputs.size() != targets.size()) {
    throw std::invalid_argument("dataset inputs and targets differ in length");
  }
  const std::size_t din = inputs.empty() ? 0 : inputs.front().size();
  const std::size_t dout = targets.empty() ? 0 : targets.front().size();
  if (!input_range.empty() && input_range.size() != din) {
    throw std::invalid_argument("dataset input_range dimension mismatch");
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].size() != din || targets[i].size() != dout) {
      throw std::invalid_argument("ragged dataset row at index " + std::to_string(i));
    }
    if (!input_range.empty()) {
      for (std::size_t d = 0; d < din; ++d) {
        if (inputs[i][d] < input_range[d].first || inputs[i][d] > input_range[d].second) {
          throw std::invalid_argument("dataset input outside declared range at index " +
                                      std::to_string(i));
        }
      }
    }
  }
}

Dataset make_random_dataset(int n_samples, int input_dim, std::uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
  if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  rng::Stream stream(rng::mix(seed, 0x5eedda7aULL));
  Dataset ds;
  ds.name = "random[n=" + std::to_string(n_samples) + ",dim=" + std::to_string(input_dim) +
            ",seed=" + std::to_string(seed) + "]";
  ds.input_range.assign(input_dim, {0.0, 1.0});
  ds.label_mode = LabelMode::kNone;
  ds.inputs.reserve(n_samples);
  ds.targets.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    std::vector<double> x(input_dim);
    for (double& v : x) v = stream.uniform();
    ds.inputs.push_back(std::move(x));
    ds.targets.push_back({stream.uniform()});
  }
  return ds;
}

namespace {

constexpr char kCacheMagic[4] = {'S', 'G', 'D', 'S'};
constexpr std::uint32_t kCacheVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated dataset cache: " + path);
  return v;
}

}  // namespace

void save_dataset_cache(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open dataset cache for writing: " + path.string());
  out.write(kCacheMagic, 4);
  put(out, kCacheVersion);
  put(out, static_cast<std::uint32_t>(ds.name.size()));
  out.write(ds.name.data(), static_cast<std::streamsize>(ds.name.size()));
  put(out, static_cast<std::uint32_t>(ds.label_mode));
  put(out, static_cast<std::uint32_t>(ds.bucket_count));
  put(out, ds.threshold);
  put(out, static_cast<std::uint64_t>(ds.size()));
  put(out, static_cast<std::uint32_t>(ds.input_dim()));
  put(out, static_cast<std::uint32_t>(ds.target_dim()));
  put(out, static_cast<std::uint32_t>(ds.input_range.size()));
  for (auto [lo, hi] : ds.input_range) {
    put(out, lo);
    put(out, hi);
  }
  for (const auto& row : ds.inputs) {
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  for (const auto& row : ds.targets) {
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("short write to dataset cache: " + path.string());
}

Dataset load_dataset_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset cache: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCacheMagic, 4) != 0) {
    throw std::runtime_error("bad dataset cache magic: " + path.string());
  }
  const auto version = get<std::uint32_t>(in, path.string());
  if (version != kCacheVersion) {
    throw std::runtime_error("unsupported dataset cache version " + std::to_string(version) +
                             ": " + path.string());
  }
  Dataset ds;
  const auto name_len = get<std::uint32_t>(in, path.string());
  ds.name.resize(name_len);
  in.read(ds.name.data(), name_len);
  if (!in) throw std::runtime_error("truncated dataset cache: " + path.string());
  ds.label_mode = static_cast<LabelMode>(get<std::uint32_t>(in, path.string()));
  ds.bucket_count = static_cast<int>(get<std::uint32_t>(in, path.string()));
  ds.threshold = get<double>(in, path.string());
  const auto n = get<std::uint64_t>(in, path.string());
  const auto din = get<std::uint32_t>(in, path.string());
  const auto dout = get<std::uint32_t>(in, path.string());
  const auto nranges = get<std::uint32_t>(in, path.string());
  ds.input_range.resize(nranges);
  for (auto& [lo, hi] : ds.input_range) {
    lo = get<double>(in, path.string());
    hi = get<double>(in, path.string());
  }
  ds.inputs.assign(n, std::vector<double>(din));
  ds.targets.assign(n, std::vector<double>(dout));
  for (auto& row : ds.inputs) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  for (auto& row : ds.targets) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  if (!in) throw std::runtime_error("truncated dataset cache: " + path.string());
  return ds;
}

}  // namespace sigguard
