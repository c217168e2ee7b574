#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mural/net/mlp.hpp"

namespace mural::nml {

/// Feature vectors with binary labels, stored row-major.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  explicit LabeledDataset(std::size_t feature_dim) : dim_(feature_dim) {
    if (feature_dim == 0) throw std::invalid_argument("dataset: feature_dim must be >= 1");
  }

  std::size_t feature_dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }

  void add(std::span<const double> x, int label) {
    if (x.size() != dim_)
      throw std::invalid_argument("dataset: point has " + std::to_string(x.size()) +
                                  " features, expected " + std::to_string(dim_));
    if (label != 0 && label != 1) throw std::invalid_argument("dataset: label must be 0 or 1");
    for (double v : x)
      if (!std::isfinite(v)) throw std::invalid_argument("dataset: non-finite feature");
    features_.insert(features_.end(), x.begin(), x.end());
    labels_.push_back(label);
  }

  std::span<const double> point(std::size_t i) const {
    return {features_.data() + i * dim_, dim_};
  }
  int label(std::size_t i) const { return labels_[i]; }

  std::size_t count(int label) const {
    std::size_t n = 0;
    for (int l : labels_) n += (l == label);
    return n;
  }
  bool has_both_labels() const { return count(0) > 0 && count(1) > 0; }

  /// Unit-weight samples viewing this dataset's storage.
  std::vector<net::Sample> samples(double weight = 1.0) const {
    std::vector<net::Sample> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.push_back({point(i), double(labels_[i]), weight});
    return out;
  }

  /// Largest pairwise Euclidean distance.
  double diameter() const {
    double best = 0.0;
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = i + 1; j < size(); ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < dim_; ++k) {
          const double d = features_[i * dim_ + k] - features_[j * dim_ + k];
          s += d * d;
        }
        best = std::max(best, std::sqrt(s));
      }
    return best;
  }

  bool operator==(const LabeledDataset&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> features_;
  std::vector<int> labels_;
};

inline double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

/// CSV with header `x0,...,x{d-1},label`.
inline void write_dataset_csv(const LabeledDataset& d, std::ostream& os) {
  for (std::size_t k = 0; k < d.feature_dim(); ++k) os << 'x' << k << ',';
  os << "label\n";
  os.precision(17);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (double v : d.point(i)) os << v << ',';
    os << d.label(i) << '\n';
  }
}

inline LabeledDataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("dataset csv: empty input");
  std::vector<std::string> cols;
  {
    std::istringstream hs(line);
    std::string c;
    while (std::getline(hs, c, ',')) cols.push_back(c);
  }
  if (cols.size() < 2 || cols.back() != "label")
    throw std::runtime_error("dataset csv: header must be x0,...,x{d-1},label");
  const std::size_t dim = cols.size() - 1;
  for (std::size_t k = 0; k < dim; ++k)
    if (cols[k] != "x" + std::to_string(k))
      throw std::runtime_error("dataset csv: unexpected column '" + cols[k] + "'");
  LabeledDataset d(dim);
  std::vector<double> x(dim);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    std::size_t k = 0;
    int label = -1;
    try {
      while (std::getline(ls, tok, ',')) {
        if (k < dim) x[k] = std::stod(tok);
        else if (k == dim) label = std::stoi(tok);
        ++k;
      }
    } catch (const std::exception&) {
      throw std::runtime_error("dataset csv: bad number on line " + std::to_string(lineno));
    }
    if (k != dim + 1)
      throw std::runtime_error("dataset csv: wrong column count on line " + std::to_string(lineno));
    d.add(x, label);
  }
  return d;
}

inline LabeledDataset load_dataset_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("dataset csv: cannot open '" + path + "'");
  return read_dataset_csv(f);
}

}  // namespace mural::nml
