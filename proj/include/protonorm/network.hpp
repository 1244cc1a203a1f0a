#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "protonorm/error.hpp"
#include "protonorm/prototypes.hpp"

namespace protonorm {

enum class Activation { relu, identity };

std::string to_string(Activation a);
Activation parse_activation(const std::string& text);

/// Dense network D -> hidden... -> d -> K. Hidden layers are always rectified;
/// the decision layer (width d) uses `decision_activation`; logits are linear.
struct NetworkSpec {
  std::vector<int> widths;
  Activation decision_activation = Activation::relu;

  int input_dim() const { return widths.front(); }
  int feature_dim() const { return widths[widths.size() - 2]; }
  int num_classes() const { return widths.back(); }
  std::size_t num_layers() const { return widths.size() - 1; }

  /// Throws ContractViolation unless there are at least three positive widths.
  void validate() const;
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

struct Parameters {
  std::vector<DenseLayer> layers;

  /// Same shapes, all zeros.
  Parameters zeros_like() const;
  std::size_t count() const;
  bool operator==(const Parameters& other) const;
};

/// Weights uniform in ±sqrt(6/(fan_in+fan_out)), zero biases.
Parameters init_parameters(const NetworkSpec& spec, std::uint64_t seed);

struct ForwardResult {
  Matrix features;  // n x d, decision-layer activations
  Matrix logits;    // n x K
};

/// `inputs` is n x D.
ForwardResult forward(const NetworkSpec& spec, const Parameters& params, const Matrix& inputs);

struct LossResult {
  double loss = 0.0;
  double cross_entropy = 0.0;
  double regularizer = 0.0;        // mean feature-to-target distance (before λ)
  std::size_t missing_targets = 0;  // samples whose class had no target
  Parameters grads;
};

/// Mean softmax cross-entropy plus λ times the batch mean of ‖feature_i − target_{y_i}‖.
/// Samples whose class has no target contribute zero distance but still count in the
/// mean. With `targets == nullptr` or λ == 0 the regularizer is skipped entirely.
/// Throws NumericError (tagged with `where`) if the loss is not finite.
LossResult loss_and_grads(const NetworkSpec& spec, const Parameters& params, const Matrix& inputs,
                          std::span<const int> labels, const PrototypeSet* targets, double lambda,
                          NumericContext where = {});

/// params -= lr * grads.
void sgd_step(Parameters& params, const Parameters& grads, double lr);

void write_parameters(std::ostream& out, const Parameters& params);

}  // namespace protonorm
