#pragma once

#include <span>
#include <string>
#include <vector>

namespace gpw {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

//! Adam with named parameter groups. Each group keeps its own moments and step
//! count; masking is done by the caller by zeroing gradients.
class Adam {
 public:
  explicit Adam(AdamHyper hyper = {}) : hyper_(hyper) {}

  //! Returns the group index.
  std::size_t add_group(std::string name, std::size_t size, double lr);
  std::size_t group_index(const std::string& name) const;
  std::size_t group_count() const { return groups_.size(); }
  std::size_t group_size(std::size_t group) const { return groups_.at(group).m.size(); }
  double learning_rate(std::size_t group) const { return groups_.at(group).lr; }
  void set_learning_rate(std::size_t group, double lr) { groups_.at(group).lr = lr; }
  long steps(std::size_t group) const { return groups_.at(group).t; }
  std::span<const double> first_moment(std::size_t group) const { return groups_.at(group).m; }
  std::span<const double> second_moment(std::size_t group) const { return groups_.at(group).v; }

  //! theta <- theta - lr * mhat / (sqrt(vhat) + eps). Throws Error(ShapeMismatch).
  void step(std::size_t group, std::span<double> params, std::span<const double> grads);

  //! Zeroes moments and step counts; learning rates are kept.
  void reset();

  //! Rebuilds a group after rows were added or removed. Row r of the new layout takes
  //! the moments of old row source[r] (or zeros when source[r] < 0); `stride` values per row.
  void remap_group(std::size_t group, std::size_t stride, std::span<const long> source);

 private:
  struct Group {
    std::string name;
    double lr = 0.0;
    long t = 0;
    std::vector<double> m;
    std::vector<double> v;
  };
  AdamHyper hyper_;
  std::vector<Group> groups_;
};

}  // namespace gpw
