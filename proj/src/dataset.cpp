#include "lcvd/dataset.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lcvd::data {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void check_generated(const Dataset& d) {
  if (!all_finite(d.inputs)) {
    throw std::invalid_argument("Dataset: non-finite input generated");
  }
}

std::uint32_t read_be_u32(std::istream& in, const std::string& path,
                          std::size_t offset) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (in.gcount() != 4) {
    throw std::runtime_error(path + ": truncated at byte offset " +
                             std::to_string(offset + in.gcount()));
  }
  return (static_cast<std::uint32_t>(bytes[0]) << 24) |
         (static_cast<std::uint32_t>(bytes[1]) << 16) |
         (static_cast<std::uint32_t>(bytes[2]) << 8) |
         static_cast<std::uint32_t>(bytes[3]);
}

}  // namespace

Matrix circle_class_means(int num_classes, double radius) {
  if (num_classes < 1 || !(radius > 0.0)) {
    throw std::invalid_argument("circle_class_means: need K >= 1, radius > 0");
  }
  Matrix means(static_cast<std::size_t>(num_classes), 2);
  for (int k = 0; k < num_classes; ++k) {
    const double angle = kTwoPi * static_cast<double>(k) /
                         static_cast<double>(num_classes);
    means(static_cast<std::size_t>(k), 0) = radius * std::cos(angle);
    means(static_cast<std::size_t>(k), 1) = radius * std::sin(angle);
  }
  return means;
}

Dataset gen_gaussian_mixture(int num_classes, int dim, int n_per_class,
                             const Matrix& class_means, double sigma,
                             Rng& rng) {
  if (num_classes < 2 || dim < 1 || n_per_class < 1 || !(sigma > 0.0)) {
    throw std::invalid_argument(
        "gen_gaussian_mixture: need K >= 2, dim >= 1, n >= 1, sigma > 0");
  }
  if (class_means.rows != static_cast<std::size_t>(num_classes) ||
      class_means.cols != static_cast<std::size_t>(dim)) {
    throw std::invalid_argument("gen_gaussian_mixture: class_means shape");
  }
  const std::size_t n = static_cast<std::size_t>(num_classes) *
                        static_cast<std::size_t>(n_per_class);
  Dataset d;
  d.inputs = Matrix(n, static_cast<std::size_t>(dim));
  d.labels.resize(n);
  d.num_classes = num_classes;
  d.name = "gaussian_mixture";
  std::size_t row = 0;
  for (int k = 0; k < num_classes; ++k) {
    for (int i = 0; i < n_per_class; ++i, ++row) {
      for (int j = 0; j < dim; ++j) {
        d.inputs(row, static_cast<std::size_t>(j)) =
            class_means(static_cast<std::size_t>(k),
                        static_cast<std::size_t>(j)) +
            sigma * rng.normal();
      }
      d.labels[row] = k;
    }
  }
  check_generated(d);
  return d;
}

Dataset gen_ood_uniform(int n, int dim, double low, double high, Rng& rng) {
  if (n < 1 || dim < 1 || !(low < high)) {
    throw std::invalid_argument(
        "gen_ood_uniform: need n >= 1, dim >= 1, low < high");
  }
  Dataset d;
  d.inputs = Matrix(static_cast<std::size_t>(n), static_cast<std::size_t>(dim));
  d.labels.assign(static_cast<std::size_t>(n), 0);
  d.num_classes = 1;
  d.name = "ood_uniform";
  d.labels_usable = false;
  for (std::size_t i = 0; i < d.inputs.rows; ++i) {
    for (std::size_t j = 0; j < d.inputs.cols; ++j) {
      d.inputs(i, j) = rng.uniform(low, high);
    }
  }
  check_generated(d);
  return d;
}

Dataset gen_ood_ring(int n, int dim, double inner_radius, double outer_radius,
                     Rng& rng) {
  if (n < 1 || dim != 2 || !(inner_radius > 0.0) ||
      !(inner_radius < outer_radius)) {
    throw std::invalid_argument(
        "gen_ood_ring: need n >= 1, dim = 2, 0 < inner < outer");
  }
  Dataset d;
  d.inputs = Matrix(static_cast<std::size_t>(n), 2);
  d.labels.assign(static_cast<std::size_t>(n), 0);
  d.num_classes = 1;
  d.name = "ood_ring";
  d.labels_usable = false;
  for (std::size_t i = 0; i < d.inputs.rows; ++i) {
    const double angle = rng.uniform(0.0, kTwoPi);
    const double radius = rng.uniform(inner_radius, outer_radius);
    d.inputs(i, 0) = radius * std::cos(angle);
    d.inputs(i, 1) = radius * std::sin(angle);
  }
  check_generated(d);
  return d;
}

Dataset gen_ood_shifted(const Dataset& source, const Vec& offset) {
  if (source.inputs.rows == 0 || source.inputs.cols != offset.size()) {
    throw std::invalid_argument(
        "gen_ood_shifted: offset dimension must match source");
  }
  Dataset d;
  d.inputs = source.inputs;
  d.labels.assign(source.inputs.rows, 0);
  d.num_classes = 1;
  d.name = "ood_shifted";
  d.labels_usable = false;
  for (std::size_t i = 0; i < d.inputs.rows; ++i) {
    for (std::size_t j = 0; j < d.inputs.cols; ++j) {
      d.inputs(i, j) += offset[j];
    }
  }
  check_generated(d);
  return d;
}

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) {
    throw std::runtime_error(images_path + ": cannot open");
  }
  const std::uint32_t images_magic = read_be_u32(images, images_path, 0);
  if (images_magic != 0x00000803u) {
    throw std::runtime_error(images_path +
                             ": bad magic at byte offset 0 (expected "
                             "0x00000803, got 0x" +
                             [&] {
                               char buf[16];
                               std::snprintf(buf, sizeof(buf), "%08x",
                                             images_magic);
                               return std::string(buf);
                             }() +
                             ")");
  }
  const std::uint32_t n_images = read_be_u32(images, images_path, 4);
  const std::uint32_t rows = read_be_u32(images, images_path, 8);
  const std::uint32_t cols = read_be_u32(images, images_path, 12);
  if (n_images == 0 || rows == 0 || cols == 0) {
    throw std::runtime_error(images_path + ": empty image dimensions");
  }
  const std::size_t dim = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> pixels(static_cast<std::size_t>(n_images) * dim);
  images.read(reinterpret_cast<char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
  if (static_cast<std::size_t>(images.gcount()) != pixels.size()) {
    throw std::runtime_error(
        images_path + ": truncated at byte offset " +
        std::to_string(16 + static_cast<std::size_t>(images.gcount())));
  }

  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) {
    throw std::runtime_error(labels_path + ": cannot open");
  }
  const std::uint32_t labels_magic = read_be_u32(labels, labels_path, 0);
  if (labels_magic != 0x00000801u) {
    throw std::runtime_error(labels_path +
                             ": bad magic at byte offset 0 (expected "
                             "0x00000801)");
  }
  const std::uint32_t n_labels = read_be_u32(labels, labels_path, 4);
  if (n_labels != n_images) {
    throw std::runtime_error(labels_path + ": label count " +
                             std::to_string(n_labels) +
                             " does not match image count " +
                             std::to_string(n_images));
  }
  std::vector<unsigned char> raw_labels(n_labels);
  labels.read(reinterpret_cast<char*>(raw_labels.data()),
              static_cast<std::streamsize>(raw_labels.size()));
  if (static_cast<std::size_t>(labels.gcount()) != raw_labels.size()) {
    throw std::runtime_error(
        labels_path + ": truncated at byte offset " +
        std::to_string(8 + static_cast<std::size_t>(labels.gcount())));
  }

  Dataset d;
  d.inputs = Matrix(n_images, dim);
  d.labels.resize(n_images);
  d.name = images_path;
  int max_label = 0;
  for (std::size_t i = 0; i < n_images; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      d.inputs(i, j) = static_cast<double>(pixels[i * dim + j]) / 255.0;
    }
    d.labels[i] = static_cast<int>(raw_labels[i]);
    max_label = std::max(max_label, d.labels[i]);
  }
  d.num_classes = max_label + 1;
  return d;
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error(path + ": cannot open");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error(path + ": line 1: missing header");
  }
  if (line.rfind("label", 0) != 0) {
    throw std::runtime_error(path + ": line 1: header must start with "
                             "'label'");
  }
  std::size_t dim = 0;
  for (char c : line) {
    if (c == ',') ++dim;
  }
  if (dim == 0) {
    throw std::runtime_error(path + ": line 1: header declares no features");
  }
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  int max_label = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream fields(line);
    std::string field;
    if (!std::getline(fields, field, ',')) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": empty row");
    }
    int label = 0;
    try {
      std::size_t used = 0;
      label = std::stoi(field, &used);
      if (used != field.size()) throw std::invalid_argument(field);
    } catch (const std::exception&) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": bad label '" + field + "'");
    }
    if (label < 0) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": negative label");
    }
    max_label = std::max(max_label, label);
    labels.push_back(label);
    std::size_t got = 0;
    while (std::getline(fields, field, ',')) {
      double value = 0.0;
      try {
        std::size_t used = 0;
        value = std::stod(field, &used);
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                 ": bad feature '" + field + "'");
      }
      if (!std::isfinite(value)) {
        throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                 ": non-finite feature");
      }
      values.push_back(value);
      ++got;
    }
    if (got != dim) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": expected " + std::to_string(dim) +
                               " features, got " + std::to_string(got));
    }
  }
  if (labels.empty()) {
    throw std::runtime_error(path + ": no data rows");
  }
  Dataset d;
  d.inputs = Matrix(labels.size(), dim);
  d.inputs.values = std::move(values);
  d.labels = std::move(labels);
  d.num_classes = max_label + 1;
  d.name = path;
  return d;
}

void write_csv(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error(path + ": cannot open for writing");
  }
  out << "label";
  for (std::size_t j = 0; j < dataset.inputs.cols; ++j) {
    out << ",f" << j;
  }
  out << '\n';
  char buf[40];
  for (std::size_t i = 0; i < dataset.inputs.rows; ++i) {
    out << dataset.labels[i];
    for (std::size_t j = 0; j < dataset.inputs.cols; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", dataset.inputs(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) {
    throw std::runtime_error(path + ": write failed");
  }
}

NormStats normalize_fit(const Dataset& train) {
  if (train.inputs.rows == 0 || train.inputs.cols == 0) {
    throw std::invalid_argument("normalize_fit: empty training set");
  }
  const auto n = static_cast<double>(train.inputs.rows);
  NormStats stats;
  stats.mean.assign(train.inputs.cols, 0.0);
  stats.stddev.assign(train.inputs.cols, 0.0);
  for (std::size_t i = 0; i < train.inputs.rows; ++i) {
    for (std::size_t j = 0; j < train.inputs.cols; ++j) {
      stats.mean[j] += train.inputs(i, j);
    }
  }
  for (std::size_t j = 0; j < train.inputs.cols; ++j) stats.mean[j] /= n;
  for (std::size_t i = 0; i < train.inputs.rows; ++i) {
    for (std::size_t j = 0; j < train.inputs.cols; ++j) {
      const double centered = train.inputs(i, j) - stats.mean[j];
      stats.stddev[j] += centered * centered;
    }
  }
  for (std::size_t j = 0; j < train.inputs.cols; ++j) {
    stats.stddev[j] = std::max(std::sqrt(stats.stddev[j] / n), 1e-8);
  }
  return stats;
}

Dataset normalize_apply(const NormStats& stats, const Dataset& dataset) {
  if (dataset.inputs.cols != stats.mean.size() ||
      stats.mean.size() != stats.stddev.size()) {
    throw std::invalid_argument("normalize_apply: dimension mismatch");
  }
  Dataset out = dataset;
  for (std::size_t i = 0; i < out.inputs.rows; ++i) {
    for (std::size_t j = 0; j < out.inputs.cols; ++j) {
      out.inputs(i, j) = (out.inputs(i, j) - stats.mean[j]) / stats.stddev[j];
    }
  }
  return out;
}

}  // namespace lcvd::data
