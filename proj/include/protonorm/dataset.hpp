#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace protonorm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Labeled points in R^D. Row i of `features` belongs to `labels[i]`.
struct LabeledDataset {
  Matrix features;
  std::vector<int> labels;
  int num_classes = 0;

  int dim() const { return static_cast<int>(features.cols()); }
  std::size_t size() const { return labels.size(); }

  /// Throws ContractViolation if labels/rows disagree or a label is out of range.
  void validate() const;

  /// Sample count per class id.
  std::vector<std::size_t> class_counts() const;
};

/// Rows `indices` of `source`, in the given order.
LabeledDataset subset(const LabeledDataset& source, const std::vector<std::size_t>& indices);

/// Six-arm style spiral: sample i of class k sits at radius r_i = 1 + 9(i-1)/(P-1) and
/// angle 2πk/K + (i-1)·2πk/(K(P-1)) + b, b ~ N(0, noise_stddev²), point (r sin ω, r cos ω).
/// Noise is drawn fresh per (class, index) from the `noise` stream of `seed`.
LabeledDataset generate_spiral(int points_per_class, int num_classes, std::uint64_t seed,
                               double noise_stddev = 1.0);

enum class PartitionMode { iid, dirichlet, pathological };

std::string to_string(PartitionMode mode);
PartitionMode parse_partition_mode(const std::string& text);

struct PartitionOptions {
  PartitionMode mode = PartitionMode::dirichlet;
  double alpha = 0.1;
  int classes_per_client = 2;
};

struct PartitionPlan {
  std::vector<std::vector<std::size_t>> assignments;
  PartitionOptions options;

  std::size_t num_clients() const { return assignments.size(); }
  /// histogram[client][class]
  std::vector<std::vector<std::size_t>> class_histograms(const LabeledDataset& data) const;
};

/// Distributes dataset indices across clients. Throws PartitionError if any client
/// ends up with no samples; the message lists the empty clients.
PartitionPlan partition(const LabeledDataset& data, int num_clients, const PartitionOptions& options,
                        std::uint64_t seed);

struct ClientSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

struct SplitResult {
  std::vector<ClientSplit> clients;
  std::vector<std::string> warnings;
};

/// Per-client split stratified by class. Every class with at least two samples on a
/// client puts at least one sample in test and one in train; single-sample classes go
/// to train with a warning.
SplitResult split_train_test(const PartitionPlan& plan, const LabeledDataset& data, double train_fraction,
                             std::uint64_t seed);

// Text formats.
void write_dataset(std::ostream& out, const LabeledDataset& data);
LabeledDataset read_dataset(std::istream& in);
void write_partition(std::ostream& out, const PartitionPlan& plan);
PartitionPlan read_partition(std::istream& in);

}  // namespace protonorm
