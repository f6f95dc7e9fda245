#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "sigguard/dataset.hpp"

namespace sigguard {

// IDX container header (de-facto MNIST format): magic {0, 0, type, ndims}
// followed by big-endian 32-bit dimension sizes. Only unsigned-byte payloads
// (type 0x08) are supported here.
struct IdxHeader {
  std::array<std::uint8_t, 4> magic{};
  std::vector<std::uint32_t> dims;

  std::uint64_t element_count() const;
};

// Reads header + payload of an unsigned-byte IDX file. Throws on bad magic,
// truncated payload or I/O failure, naming the offending file.
std::vector<std::uint8_t> read_idx_ubyte(const std::filesystem::path& path, IdxHeader& header);

void write_idx_ubyte(const std::filesystem::path& path, const std::vector<std::uint32_t>& dims,
                     const std::vector<std::uint8_t>& payload);

// Target layout for MNIST-style data. Single-output models use the scalar
// reduction target = label/9; ten-output models use one-hot rows.
enum class MnistTargets { kScalarDigit, kOneHot10 };

// Loads an images/labels IDX pair. Pixels are scaled to [0,1]; the reduction
// rule is recorded in Dataset::name. Throws on malformed files or when the
// image and label counts disagree.
Dataset load_mnist(const std::filesystem::path& images_path,
                   const std::filesystem::path& labels_path,
                   std::optional<std::size_t> limit = std::nullopt,
                   MnistTargets targets = MnistTargets::kScalarDigit);

// Writes a seeded synthetic 10-class 28x28 corpus in standard MNIST file
// layout (train-images-idx3-ubyte etc.) under dir. Stands in for the real
// dataset in environments without it; callers should surface the substitution
// wherever results are reported.
void write_synthetic_digit_corpus(const std::filesystem::path& dir, int n_train, int n_test,
                                  std::uint64_t seed);

}  // namespace sigguard
