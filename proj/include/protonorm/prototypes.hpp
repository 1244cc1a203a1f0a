#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace protonorm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Prototype {
  int class_id = 0;
  Vector vec;
  std::size_t support = 0;  // samples behind a local prototype; 0 for global ones
};

/// At most one prototype per class, all of dimension `dim`. Iteration is by
/// ascending class id.
class PrototypeSet {
 public:
  PrototypeSet() = default;
  PrototypeSet(int num_classes, int dim) : num_classes_(num_classes), dim_(dim) {}

  int num_classes() const { return num_classes_; }
  int dim() const { return dim_; }
  std::size_t size() const { return by_class_.size(); }
  bool empty() const { return by_class_.empty(); }

  bool contains(int class_id) const { return by_class_.count(class_id) != 0; }
  const Vector* find(int class_id) const;
  const Prototype& at(int class_id) const;

  /// Inserts or replaces. Throws ContractViolation on a dimension or class-id mismatch.
  void set(Prototype p);
  void set(int class_id, Vector vec, std::size_t support = 0);

  std::vector<int> class_ids() const;

  auto begin() const { return by_class_.begin(); }
  auto end() const { return by_class_.end(); }

  bool operator==(const PrototypeSet& other) const;

 private:
  int num_classes_ = 0;
  int dim_ = 0;
  std::map<int, Prototype> by_class_;
};

/// Per-class mean of feature rows. `features` is n x d.
PrototypeSet local_prototypes(const Matrix& features, std::span<const int> labels, int num_classes);

/// Unweighted mean over the clients that hold each class.
PrototypeSet aggregate_simple(std::span<const PrototypeSet> locals);

enum class WeightedForm {
  literal,  // (1/|N_j|) * sum_i (n_ij / sum_i n_ij) * c_ij
  convex,   // sum_i (n_ij / sum_i n_ij) * c_ij
};

/// Support-weighted aggregation. Throws ContractViolation when a class has zero total support.
PrototypeSet aggregate_weighted(std::span<const PrototypeSet> locals, WeightedForm form = WeightedForm::literal);

PrototypeSet upscale(const PrototypeSet& protos, double gamma);

/// Class of the nearest prototype in Euclidean distance; ties go to the smaller class id.
int classify_nearest(const Eigen::Ref<const Vector>& feature, const PrototypeSet& protos);

/// Per-class minimal distance to any other prototype, divided by the largest such
/// value. Returned in ascending class-id order.
std::vector<double> margins(const PrototypeSet& protos);
/// Unnormalized version of the above.
std::vector<double> raw_margins(const PrototypeSet& protos);

struct DistanceStats {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

DistanceStats pairwise_distance_stats(const PrototypeSet& protos);

}  // namespace protonorm

namespace protonorm {

/// Population standard deviation over mean; 0 for an empty or zero-mean input.
double coefficient_of_variation(std::span<const double> values);

}  // namespace protonorm
