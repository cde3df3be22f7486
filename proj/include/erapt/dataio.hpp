#pragma once

// Synthetic datasets, k-shot subsampling and the CSV dataset format:
//
//   f0,f1,...,f{d-1},label
//   0.123,4.56,...,1
//
// Reals are written with 17 significant digits so a save/load round trip is
// exact; labels are non-negative integers.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "erapt/numcore.hpp"

namespace erapt {

struct LabeledDataset {
  std::vector<RealVector> inputs;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
  std::string name;

  std::size_t size() const { return inputs.size(); }
  bool empty() const { return inputs.empty(); }
  std::size_t dim() const { return inputs.empty() ? 0 : inputs.front().size(); }

  bool operator==(const LabeledDataset&) const = default;
};

inline void validate(const LabeledDataset& ds) {
  if (ds.inputs.size() != ds.labels.size()) throw FormatError("dataset: inputs/labels length mismatch");
  if (ds.num_classes == 0) throw FormatError("dataset: num_classes must be >= 1");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.inputs[i].size() != ds.dim()) throw FormatError("dataset: ragged input at row " + std::to_string(i));
    if (ds.labels[i] >= ds.num_classes) throw FormatError("dataset: label out of range at row " + std::to_string(i));
    require_finite(ds.inputs[i], "dataset input");
  }
}

/// Formats a real with 17 significant digits (round-trip exact).
inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Class centers at the vertices of a regular simplex (pairwise distance
/// `separation`) expressed in the Helmert basis, so K classes need K-1 dims.
inline std::vector<RealVector> simplex_centers(std::size_t num_classes, std::size_t dim, double separation) {
  const std::size_t needed = num_classes > 1 ? num_classes - 1 : 1;
  if (dim < needed)
    throw ConfigError("gen_blobs: dim " + std::to_string(dim) + " cannot host " + std::to_string(num_classes) +
                      " simplex centers (need >= " + std::to_string(needed) + ")");
  std::vector<RealVector> centers(num_classes, RealVector(dim, 0.0));
  const double scale = separation / std::sqrt(2.0);
  for (std::size_t j = 1; j < num_classes; ++j) {
    const double norm = std::sqrt(static_cast<double>(j * (j + 1)));
    for (std::size_t k = 0; k < num_classes; ++k) {
      double h = 0.0;
      if (k < j) h = 1.0 / norm;
      else if (k == j) h = -static_cast<double>(j) / norm;
      centers[k][j - 1] = scale * h;
    }
  }
  return centers;
}

inline LabeledDataset gen_blobs(std::size_t num_classes, std::size_t per_class, std::size_t dim,
                                double separation, double noise_sd, RandomStream& stream) {
  if (num_classes < 1 || per_class < 1 || dim < 1) throw ConfigError("gen_blobs: counts must be >= 1");
  if (!(separation > 0.0)) throw ConfigError("gen_blobs: separation must be > 0");
  if (!(noise_sd >= 0.0)) throw ConfigError("gen_blobs: noise_sd must be >= 0");
  const auto centers = simplex_centers(num_classes, dim, separation);
  LabeledDataset ds;
  ds.num_classes = num_classes;
  ds.name = "blobs";
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      RealVector x = centers[c];
      for (double& v : x) v += noise_sd * stream.normal();
      ds.inputs.push_back(std::move(x));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

/// Two interleaved unit half-circles: class 0 is (cos t, sin t), class 1 is
/// (1 - cos t, 0.5 - sin t), t evenly spaced on [0, pi].
inline LabeledDataset gen_two_moons(std::size_t per_class, double noise_sd, RandomStream& stream) {
  if (per_class < 1) throw ConfigError("gen_two_moons: per_class must be >= 1");
  if (!(noise_sd >= 0.0)) throw ConfigError("gen_two_moons: noise_sd must be >= 0");
  LabeledDataset ds;
  ds.num_classes = 2;
  ds.name = "two_moons";
  const double denom = per_class > 1 ? static_cast<double>(per_class - 1) : 1.0;
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const double t = std::numbers::pi * static_cast<double>(i) / denom;
      RealVector x = c == 0 ? RealVector{std::cos(t), std::sin(t)} : RealVector{1.0 - std::cos(t), 0.5 - std::sin(t)};
      for (double& v : x) v += noise_sd * stream.normal();
      ds.inputs.push_back(std::move(x));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

/// Exactly k examples per class drawn without replacement; the result keeps
/// the original dataset order.
inline LabeledDataset k_shot_sample(const LabeledDataset& ds, std::size_t k, RandomStream& stream) {
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    auto& pool = by_class[c];
    if (pool.size() < k)
      throw ConfigError("k_shot_sample: class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                        " examples, need " + std::to_string(k));
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + stream.uniform_index(pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  }
  std::sort(chosen.begin(), chosen.end());
  LabeledDataset out;
  out.num_classes = ds.num_classes;
  out.name = ds.name + "-" + std::to_string(k) + "shot";
  for (std::size_t i : chosen) {
    out.inputs.push_back(ds.inputs[i]);
    out.labels.push_back(ds.labels[i]);
  }
  return out;
}

inline std::string to_csv(const LabeledDataset& ds) {
  std::string s;
  for (std::size_t j = 0; j < ds.dim(); ++j) s += "f" + std::to_string(j) + ",";
  s += "label\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.inputs[i]) s += format_real(v) + ",";
    s += std::to_string(ds.labels[i]) + "\n";
  }
  return s;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void save_csv(const LabeledDataset& ds, const std::string& path) { write_text_file(path, to_csv(ds)); }

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline bool parse_real(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size() && std::isfinite(out);
}

inline bool parse_index(const std::string& s, std::size_t& out) {
  const std::string t = trim(s);
  if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos) return false;
  out = std::stoull(t);
  return true;
}

}  // namespace detail

inline LabeledDataset parse_csv(const std::string& text, const std::string& name = "csv") {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  LabeledDataset ds;
  ds.name = name;
  std::size_t max_label = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line);
    if (width == 0) {
      if (fields.size() < 2 || detail::trim(fields.back()) != "label")
        throw FormatError("line " + std::to_string(lineno) + ": header must be f0,...,f{d-1},label");
      width = fields.size();
      continue;
    }
    if (fields.size() != width)
      throw FormatError("line " + std::to_string(lineno) + ": expected " + std::to_string(width) + " fields, got " +
                        std::to_string(fields.size()));
    RealVector x(width - 1);
    for (std::size_t j = 0; j + 1 < width; ++j)
      if (!detail::parse_real(fields[j], x[j]))
        throw FormatError("line " + std::to_string(lineno) + ": non-numeric value in column " + std::to_string(j));
    std::size_t label = 0;
    if (!detail::parse_index(fields.back(), label))
      throw FormatError("line " + std::to_string(lineno) + ": missing or invalid label");
    max_label = std::max(max_label, label);
    ds.inputs.push_back(std::move(x));
    ds.labels.push_back(label);
  }
  if (width == 0) throw FormatError("dataset file has no header");
  if (ds.empty()) throw FormatError("dataset file contains no examples");
  ds.num_classes = max_label + 1;
  return ds;
}

inline LabeledDataset load_csv(const std::string& path) { return parse_csv(read_text_file(path), path); }

}  // namespace erapt
