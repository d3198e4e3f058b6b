#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "debiascope/rng.hpp"

namespace debiascope::nd {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

// Dense row-major tensor of 64-bit floats. All numeric state in the
// library (representations, predictions, gradients, optimizer moments)
// lives in these.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(static_cast<std::size_t>(shape_numel(shape)), 0.0) {}
  Tensor(Shape s, std::vector<double> d);

  static Tensor scalar(double v);
  static Tensor full(Shape s, double v);
  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor randn(Shape s, double sd, Rng& rng);

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  std::int64_t dim(std::size_t i) const { return shape[i]; }
  std::size_t rank() const { return shape.size(); }

  double& at(std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  double at(std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
  double& at(std::int64_t i, std::int64_t j) { return data[static_cast<std::size_t>(i * shape[1] + j)]; }
  double at(std::int64_t i, std::int64_t j) const { return data[static_cast<std::size_t>(i * shape[1] + j)]; }

  bool all_finite() const;
  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

bool same_shape(const Tensor& a, const Tensor& b);

// Integer companion tensor for token ids and row/position selectors.
struct IndexTensor {
  Shape shape;
  std::vector<std::int64_t> data;

  IndexTensor() = default;
  IndexTensor(Shape s, std::vector<std::int64_t> d);

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
};

// Named parameter bundles moved between models, optimizers and
// checkpoints. std::map keeps iteration order stable for hashing and
// serialization.
using NamedTensors = std::map<std::string, Tensor>;

// FNV-1a over shape and raw data bytes; used for freeze checks and
// run manifests.
std::uint64_t content_hash(const Tensor& t);
std::uint64_t content_hash(const NamedTensors& params);

}  // namespace debiascope::nd
