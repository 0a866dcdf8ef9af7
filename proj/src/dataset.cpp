#include <array>
#include <cstdint>
#include <fstream>
#include <string>

#include "netexpr/trainlab.hpp"

namespace netexpr {

std::string_view to_string(Split split) { return split == Split::Train ? "train" : "test"; }

void Dataset::validate() const {
  if (labels.empty()) throw DataError("dataset is empty");
  if (static_cast<std::size_t>(inputs.cols()) != labels.size()) throw DataError("dataset inputs and labels differ in count");
  if (inputs.rows() == 0) throw DataError("dataset inputs have zero dimension");
  for (int y : labels)
    if (y < 0 || y >= num_classes) throw DataError("dataset label out of range: " + std::to_string(y));
}

Dataset Dataset::head(std::size_t n) const {
  if (n == 0 || n > size()) throw std::out_of_range("dataset head: requested " + std::to_string(n) + " of " +
                                                    std::to_string(size()) + " examples");
  Dataset out;
  out.inputs = inputs.leftCols(static_cast<Eigen::Index>(n));
  out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
  out.num_classes = num_classes;
  out.split = split;
  return out;
}

namespace {

std::ifstream open_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw DataError(path.string() + ": truncated header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

void read_exact(std::istream& in, char* dst, std::size_t bytes, const std::filesystem::path& path) {
  if (!in.read(dst, static_cast<std::streamsize>(bytes)))
    throw DataError(path.string() + ": truncated payload");
}

}  // namespace

Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels, Split split,
                       std::optional<std::size_t> limit) {
  std::ifstream img = open_binary(images);
  std::ifstream lab = open_binary(labels);

  if (const auto magic = read_be32(img, images); magic != 2051)
    throw DataError(images.string() + ": bad magic " + std::to_string(magic) + " (expected 2051)");
  const std::size_t n_img = read_be32(img, images);
  const std::size_t rows = read_be32(img, images);
  const std::size_t cols = read_be32(img, images);
  if (const auto magic = read_be32(lab, labels); magic != 2049)
    throw DataError(labels.string() + ": bad magic " + std::to_string(magic) + " (expected 2049)");
  const std::size_t n_lab = read_be32(lab, labels);
  if (n_img != n_lab)
    throw DataError("image/label count mismatch: " + std::to_string(n_img) + " vs " + std::to_string(n_lab));
  if (n_img == 0 || rows == 0 || cols == 0) throw DataError(images.string() + ": empty image file");

  // The whole payload must be present even when only a prefix is loaded.
  const std::size_t dim = rows * cols;
  const auto payload_end = [](std::ifstream& f) {
    const auto here = f.tellg();
    f.seekg(0, std::ios::end);
    const auto end = f.tellg();
    f.seekg(here);
    return static_cast<std::size_t>(end - here);
  };
  if (payload_end(img) < n_img * dim) throw DataError(images.string() + ": truncated payload");
  if (payload_end(lab) < n_lab) throw DataError(labels.string() + ": truncated payload");

  const std::size_t n = limit ? std::min(*limit, n_img) : n_img;
  Dataset ds;
  ds.split = split;
  ds.num_classes = 10;
  ds.inputs.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(n));
  std::vector<unsigned char> buf(dim);
  for (std::size_t i = 0; i < n; ++i) {
    read_exact(img, reinterpret_cast<char*>(buf.data()), dim, images);
    for (std::size_t p = 0; p < dim; ++p)
      ds.inputs(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(i)) = buf[p] / 255.0;
  }
  std::vector<unsigned char> lbuf(n);
  read_exact(lab, reinterpret_cast<char*>(lbuf.data()), n, labels);
  ds.labels.assign(lbuf.begin(), lbuf.end());
  ds.validate();
  return ds;
}

Dataset load_cifar10_binary(const std::vector<std::filesystem::path>& batches, Split split,
                            std::optional<std::size_t> limit) {
  constexpr std::size_t kPixels = 3072;
  constexpr std::size_t kRecord = kPixels + 1;
  if (batches.empty()) throw DataError("no CIFAR-10 batch files given");

  std::size_t total = 0;
  for (const auto& path : batches) {
    std::error_code ec;
    const auto bytes = std::filesystem::file_size(path, ec);
    if (ec) throw DataError("cannot stat " + path.string());
    if (bytes == 0 || bytes % kRecord != 0)
      throw DataError(path.string() + ": size " + std::to_string(bytes) + " is not a multiple of 3073-byte records");
    total += bytes / kRecord;
  }
  const std::size_t n = limit ? std::min(*limit, total) : total;

  Dataset ds;
  ds.split = split;
  ds.num_classes = 10;
  ds.inputs.resize(kPixels, static_cast<Eigen::Index>(n));
  ds.labels.reserve(n);
  std::vector<unsigned char> rec(kRecord);
  for (const auto& path : batches) {
    if (ds.labels.size() == n) break;
    std::ifstream in = open_binary(path);
    while (ds.labels.size() < n && in.read(reinterpret_cast<char*>(rec.data()), kRecord)) {
      const auto col = static_cast<Eigen::Index>(ds.labels.size());
      for (std::size_t p = 0; p < kPixels; ++p) ds.inputs(static_cast<Eigen::Index>(p), col) = rec[p + 1] / 255.0;
      ds.labels.push_back(rec[0]);
    }
  }
  if (ds.labels.size() != n) throw DataError("CIFAR-10 batches ended early");
  ds.validate();
  return ds;
}

}  // namespace netexpr
