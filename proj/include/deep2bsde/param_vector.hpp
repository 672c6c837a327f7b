#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "deep2bsde/tensor.hpp"

namespace deep2bsde {

/// A named block of the flat parameter vector.
struct Segment {
  std::string name;
  std::size_t offset = 0;
  Shape shape;

  std::size_t size() const { return shape_numel(shape); }
  std::size_t end() const { return offset + size(); }
};

/// Ordered, disjoint segments covering [0, size()).
class ParamLayout {
 public:
  ParamLayout() = default;

  /// Appends a segment directly after the previous one.
  const Segment& append(std::string name, Shape shape);

  const Segment& operator[](const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<Segment>& segments() const noexcept { return segments_; }
  std::size_t size() const noexcept { return size_; }

 private:
  std::vector<Segment> segments_;
  std::size_t size_ = 0;
};

/// The trainable vector theta plus its layout.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(ParamLayout layout);
  ParamVector(ParamLayout layout, std::vector<double> values);

  std::size_t size() const noexcept { return values_.size(); }
  const ParamLayout& layout() const noexcept { return layout_; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  std::span<double> segment(const std::string& name);
  std::span<const double> segment(const std::string& name) const;

  /// Flat rank-1 tensor copy of the values.
  Tensor as_tensor() const;

 private:
  ParamLayout layout_;
  std::vector<double> values_;
};

}  // namespace deep2bsde
