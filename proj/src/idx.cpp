#include "sigguard/idx.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "sigguard/rng.hpp"

namespace sigguard {

std::uint64_t IdxHeader::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<std::uint8_t> read_idx_ubyte(const std::filesystem::path& path, IdxHeader& header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open IDX file: " + path.string());
  in.read(reinterpret_cast<char*>(header.magic.data()), 4);
  if (!in) throw std::runtime_error("truncated IDX header: " + path.string());
  if (header.magic[0] != 0 || header.magic[1] != 0 || header.magic[2] != 0x08) {
    throw std::runtime_error("bad IDX magic (expected unsigned-byte type 0x08): " + path.string());
  }
  const int ndims = header.magic[3];
  if (ndims < 1 || ndims > 4) {
    throw std::runtime_error("unsupported IDX dimension count: " + path.string());
  }
  header.dims.clear();
  for (int i = 0; i < ndims; ++i) {
    std::uint8_t raw[4];
    in.read(reinterpret_cast<char*>(raw), 4);
    if (!in) throw std::runtime_error("truncated IDX header: " + path.string());
    header.dims.push_back((std::uint32_t(raw[0]) << 24) | (std::uint32_t(raw[1]) << 16) |
                          (std::uint32_t(raw[2]) << 8) | std::uint32_t(raw[3]));
  }
  std::vector<std::uint8_t> payload(header.element_count());
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (static_cast<std::uint64_t>(in.gcount()) != payload.size()) {
    throw std::runtime_error("truncated IDX payload: " + path.string());
  }
  return payload;
}

void write_idx_ubyte(const std::filesystem::path& path, const std::vector<std::uint32_t>& dims,
                     const std::vector<std::uint8_t>& payload) {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  if (n != payload.size()) throw std::invalid_argument("IDX payload does not match dims product");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open IDX file for writing: " + path.string());
  const std::uint8_t magic[4] = {0, 0, 0x08, static_cast<std::uint8_t>(dims.size())};
  out.write(reinterpret_cast<const char*>(magic), 4);
  for (auto d : dims) {
    const std::uint8_t raw[4] = {static_cast<std::uint8_t>(d >> 24),
                                 static_cast<std::uint8_t>(d >> 16),
                                 static_cast<std::uint8_t>(d >> 8), static_cast<std::uint8_t>(d)};
    out.write(reinterpret_cast<const char*>(raw), 4);
  }
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("short write to IDX file: " + path.string());
}

Dataset load_mnist(const std::filesystem::path& images_path,
                   const std::filesystem::path& labels_path, std::optional<std::size_t> limit,
                   MnistTargets targets) {
  IdxHeader img_header, lbl_header;
  const auto pixels = read_idx_ubyte(images_path, img_header);
  const auto labels = read_idx_ubyte(labels_path, lbl_header);
  if (img_header.dims.size() != 3) {
    throw std::runtime_error("image IDX file must be 3-dimensional: " + images_path.string());
  }
  if (lbl_header.dims.size() != 1) {
    throw std::runtime_error("label IDX file must be 1-dimensional: " + labels_path.string());
  }
  if (img_header.dims[0] != lbl_header.dims[0]) {
    throw std::runtime_error("image/label count mismatch between " + images_path.string() +
                             " and " + labels_path.string());
  }
  const std::size_t total = img_header.dims[0];
  const std::size_t dim = static_cast<std::size_t>(img_header.dims[1]) * img_header.dims[2];
  const std::size_t n = limit ? std::min(*limit, total) : total;

  Dataset ds;
  ds.input_range.assign(dim, {0.0, 1.0});
  ds.inputs.reserve(n);
  ds.targets.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label > 9) {
      throw std::runtime_error("label outside 0..9 at index " + std::to_string(i) + ": " +
                               labels_path.string());
    }
    std::vector<double> x(dim);
    const std::uint8_t* px = pixels.data() + i * dim;
    for (std::size_t d = 0; d < dim; ++d) x[d] = px[d] / 255.0;
    ds.inputs.push_back(std::move(x));
    if (targets == MnistTargets::kScalarDigit) {
      ds.targets.push_back({label / 9.0});
    } else {
      std::vector<double> t(10, 0.0);
      t[label] = 1.0;
      ds.targets.push_back(std::move(t));
    }
  }
  if (targets == MnistTargets::kScalarDigit) {
    ds.name = images_path.filename().string() + "[scalar=label/9,n=" + std::to_string(n) + "]";
    ds.label_mode = LabelMode::kBuckets;
    ds.bucket_count = 10;
  } else {
    ds.name = images_path.filename().string() + "[one-hot,n=" + std::to_string(n) + "]";
    ds.label_mode = LabelMode::kOneHot;
  }
  return ds;
}

namespace {

// One sample: class prototype, a smooth per-sample intensity wobble and pixel
// noise. Easy enough for small MLPs, hard enough not to be trivially linear.
std::uint8_t synth_pixel(double proto, double wobble, double noise) {
  const double v = proto * wobble + noise;
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

void write_split(const std::filesystem::path& dir, const std::string& images_name,
                 const std::string& labels_name, int count,
                 const std::vector<std::vector<double>>& prototypes, rng::Stream& stream) {
  const int side = 28;
  const std::size_t dim = side * side;
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(count) * dim);
  std::vector<std::uint8_t> labels(count);
  for (int i = 0; i < count; ++i) {
    const int cls = static_cast<int>(stream.below(10));
    labels[i] = static_cast<std::uint8_t>(cls);
    const double wobble = stream.uniform(0.6, 1.2);
    std::uint8_t* px = pixels.data() + static_cast<std::size_t>(i) * dim;
    for (std::size_t d = 0; d < dim; ++d) {
      px[d] = synth_pixel(prototypes[cls][d], wobble, stream.uniform(-24.0, 24.0));
    }
  }
  write_idx_ubyte(dir / images_name,
                  {static_cast<std::uint32_t>(count), side, side}, pixels);
  write_idx_ubyte(dir / labels_name, {static_cast<std::uint32_t>(count)}, labels);
}

}  // namespace

void write_synthetic_digit_corpus(const std::filesystem::path& dir, int n_train, int n_test,
                                  std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const int side = 28;
  const std::size_t dim = side * side;
  rng::Stream proto_stream(rng::mix(seed, 0xd16175ULL));
  std::vector<std::vector<double>> prototypes(10, std::vector<double>(dim, 0.0));
  // Each class gets a handful of bright blobs on a dark background.
  for (auto& proto : prototypes) {
    for (int blob = 0; blob < 6; ++blob) {
      const double cx = proto_stream.uniform(4.0, 23.0);
      const double cy = proto_stream.uniform(4.0, 23.0);
      const double amp = proto_stream.uniform(120.0, 250.0);
      const double radius = proto_stream.uniform(1.5, 4.0);
      for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
          const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
          proto[static_cast<std::size_t>(y) * side + x] += amp * std::exp(-d2 / (2 * radius * radius));
        }
      }
    }
  }
  rng::Stream train_stream(rng::mix(seed, 1));
  rng::Stream test_stream(rng::mix(seed, 2));
  write_split(dir, "train-images-idx3-ubyte", "train-labels-idx1-ubyte", n_train, prototypes,
              train_stream);
  write_split(dir, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", n_test, prototypes,
              test_stream);
}

}  // namespace sigguard
