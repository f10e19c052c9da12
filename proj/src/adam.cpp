#include "gpw/adam.hpp"

#include <cmath>

#include "gpw/error.hpp"

namespace gpw {

std::size_t Adam::add_group(std::string name, std::size_t size, double lr) {
  Group g;
  g.name = std::move(name);
  g.lr = lr;
  g.m.assign(size, 0.0);
  g.v.assign(size, 0.0);
  groups_.push_back(std::move(g));
  return groups_.size() - 1;
}

std::size_t Adam::group_index(const std::string& name) const {
  for (std::size_t i = 0; i < groups_.size(); ++i)
    if (groups_[i].name == name) return i;
  throw Error(ErrorCode::Config, "unknown parameter group " + name);
}

void Adam::step(std::size_t group, std::span<double> params, std::span<const double> grads) {
  if (group >= groups_.size()) throw Error(ErrorCode::ShapeMismatch, "unknown parameter group");
  Group& g = groups_[group];
  if (params.size() != g.m.size() || grads.size() != g.m.size())
    throw Error(ErrorCode::ShapeMismatch, "parameter group " + g.name + " size mismatch");
  ++g.t;
  const double b1 = hyper_.beta1, b2 = hyper_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(g.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(g.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    g.m[i] = b1 * g.m[i] + (1.0 - b1) * grads[i];
    g.v[i] = b2 * g.v[i] + (1.0 - b2) * grads[i] * grads[i];
    const double mhat = g.m[i] / c1;
    const double vhat = g.v[i] / c2;
    params[i] -= g.lr * mhat / (std::sqrt(vhat) + hyper_.eps);
  }
}

void Adam::reset() {
  for (Group& g : groups_) {
    g.t = 0;
    std::fill(g.m.begin(), g.m.end(), 0.0);
    std::fill(g.v.begin(), g.v.end(), 0.0);
  }
}

void Adam::remap_group(std::size_t group, std::size_t stride, std::span<const long> source) {
  Group& g = groups_.at(group);
  std::vector<double> m(source.size() * stride, 0.0), v(source.size() * stride, 0.0);
  for (std::size_t r = 0; r < source.size(); ++r) {
    if (source[r] < 0) continue;
    const std::size_t from = static_cast<std::size_t>(source[r]) * stride;
    if (from + stride > g.m.size()) throw Error(ErrorCode::ShapeMismatch, "remap source out of range");
    for (std::size_t k = 0; k < stride; ++k) {
      m[r * stride + k] = g.m[from + k];
      v[r * stride + k] = g.v[from + k];
    }
  }
  g.m = std::move(m);
  g.v = std::move(v);
}

}  // namespace gpw
