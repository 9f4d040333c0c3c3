#include "pifnet/dataset.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "pifnet/errors.hpp"
#include "pifnet/tensor_io.hpp"

namespace pifnet {

Shape Dataset::sample_shape() const { return Shape(images.shape().begin() + 1, images.shape().end()); }

void Dataset::validate() const {
  if (images.rank() < 3 || images.dim(0) != labels.size()) {
    throw ShapeError("dataset has " + std::to_string(labels.size()) + " labels for images " +
                     shape_to_string(images.shape()));
  }
}

Dataset take(const Dataset& d, std::span<const std::size_t> indices) {
  d.validate();
  if (indices.empty()) throw InvalidArgumentError("take: empty index list");
  Shape shape = d.images.shape();
  const std::size_t per = shape_size(shape) / shape[0];
  shape[0] = indices.size();
  Dataset out;
  out.images = Tensor::create(shape);
  out.meta = d.meta;
  auto src = d.images.data();
  auto dst = out.images.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= d.size()) throw RegionBoundsError("take: index out of range");
    std::copy_n(src.begin() + indices[i] * per, per, dst.begin() + i * per);
    out.labels.push_back(d.labels[indices[i]]);
  }
  return out;
}

Dataset take_range(const Dataset& d, std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx;
  for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
  return take(d, idx);
}

std::vector<std::size_t> class_counts(std::span<const int> labels, std::size_t num_classes) {
  std::vector<std::size_t> c(num_classes, 0);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
      throw LabelError("label " + std::to_string(l) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    ++c[static_cast<std::size_t>(l)];
  }
  return c;
}

void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  d.validate();
  std::filesystem::create_directories(dir);
  write_pift(dir / "images.pift", d.images);
  {
    std::ofstream out(dir / "labels.csv");
    if (!out) throw IoError("cannot write " + (dir / "labels.csv").string());
    for (int l : d.labels) out << l << '\n';
  }
  std::ofstream meta(dir / "meta.txt");
  if (!meta) throw IoError("cannot write " + (dir / "meta.txt").string());
  for (const auto& [k, v] : d.meta) meta << k << " = " << v << '\n';
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset d;
  d.images = read_pift(dir / "images.pift");

  const auto label_bytes = read_file_bytes(dir / "labels.csv");
  const std::string text(label_bytes.begin(), label_bytes.end());
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string_view line(text.data() + pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    int v = 0;
    const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
    if (line.empty() || ec != std::errc() || ptr != line.data() + line.size()) {
      throw FormatError((dir / "labels.csv").string() + ": malformed label line", pos);
    }
    d.labels.push_back(v);
    pos = eol + 1;
  }

  std::ifstream meta(dir / "meta.txt");
  if (!meta) throw IoError("cannot open " + (dir / "meta.txt").string());
  std::string line;
  std::size_t offset = 0;
  while (std::getline(meta, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) {
      if (!line.empty()) throw FormatError((dir / "meta.txt").string() + ": expected 'key = value'", offset);
    } else {
      d.meta[line.substr(0, eq)] = line.substr(eq + 3);
    }
    offset += line.size() + 1;
  }

  if (d.images.rank() < 3 || d.images.dim(0) != d.labels.size()) {
    throw FormatError(dir.string() + ": " + std::to_string(d.labels.size()) + " labels for " +
                          shape_to_string(d.images.shape()) + " images",
                      0);
  }
  return d;
}

}  // namespace pifnet
