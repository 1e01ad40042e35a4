// src/tensor.cpp

// Copyright 2026 The xmodal Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "xmodal/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "xmodal/error.hpp"

namespace xmodal {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
void check_dims(const Shape& shape) {
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + shape_str(shape));
}
}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_dims(shape_);
  data_.assign(numel(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_dims(shape_);
  if (data_.size() != numel(shape_))
    throw ShapeError("tensor: shape " + shape_str(shape_) + " needs " +
                     std::to_string(numel(shape_)) + " values, got " +
                     std::to_string(data_.size()));
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::from(Shape shape, std::initializer_list<double> values) {
  return Tensor(std::move(shape), std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(shape_));
  return shape_[axis];
}

double Tensor::item() const {
  if (data_.size() != 1)
    throw ShapeError("tensor: item() on non-scalar " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != data_.size())
    throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::row(std::size_t i) const {
  if (shape_.empty() || i >= shape_[0])
    throw ShapeError("row: index " + std::to_string(i) + " out of range for " + shape_str(shape_));
  Shape rest(shape_.begin() + 1, shape_.end());
  std::size_t n = numel(rest);
  return Tensor(rest, std::vector<double>(data_.begin() + i * n, data_.begin() + (i + 1) * n));
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack: no tensors");
  const Shape& inner = items.front().shape();
  Shape out{items.size()};
  out.insert(out.end(), inner.begin(), inner.end());
  std::vector<double> data;
  data.reserve(numel(out));
  for (const auto& t : items) {
    if (t.shape() != inner)
      throw ShapeError("stack: expected " + shape_str(inner) + ", got " + shape_str(t.shape()));
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  return Tensor(std::move(out), std::move(data));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace xmodal
