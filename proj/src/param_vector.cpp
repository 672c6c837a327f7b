#include "deep2bsde/param_vector.hpp"

#include <algorithm>
#include <utility>

#include "deep2bsde/errors.hpp"

namespace deep2bsde {

const Segment& ParamLayout::append(std::string name, Shape shape) {
  if (contains(name)) throw ConfigError("duplicate parameter segment '" + name + "'");
  Segment seg{std::move(name), size_, std::move(shape)};
  size_ += seg.size();
  segments_.push_back(std::move(seg));
  return segments_.back();
}

const Segment& ParamLayout::operator[](const std::string& name) const {
  auto it = std::find_if(segments_.begin(), segments_.end(), [&](const Segment& s) { return s.name == name; });
  if (it == segments_.end()) throw DimensionError("no parameter segment named '" + name + "'");
  return *it;
}

bool ParamLayout::contains(const std::string& name) const {
  return std::any_of(segments_.begin(), segments_.end(), [&](const Segment& s) { return s.name == name; });
}

ParamVector::ParamVector(ParamLayout layout) : layout_(std::move(layout)), values_(layout_.size(), 0.0) {}

ParamVector::ParamVector(ParamLayout layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_.size()) {
    throw DimensionError("parameter vector has " + std::to_string(values_.size()) + " values, layout needs " +
                         std::to_string(layout_.size()));
  }
}

std::span<double> ParamVector::segment(const std::string& name) {
  const Segment& seg = layout_[name];
  return std::span<double>(values_).subspan(seg.offset, seg.size());
}

std::span<const double> ParamVector::segment(const std::string& name) const {
  const Segment& seg = layout_[name];
  return std::span<const double>(values_).subspan(seg.offset, seg.size());
}

Tensor ParamVector::as_tensor() const { return Tensor(Shape{values_.size()}, values_); }

}  // namespace deep2bsde
