#include "protonorm/network.hpp"

#include <cmath>
#include <ostream>

#include "protonorm/rng.hpp"
#include "protonorm/text_io.hpp"

namespace protonorm {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

Activation parse_activation(const std::string& text) {
  if (text == "relu") return Activation::relu;
  if (text == "identity") return Activation::identity;
  throw ConfigError("network.decision_activation", "expected relu|identity, got '" + text + "'");
}

void NetworkSpec::validate() const {
  if (widths.size() < 3) throw ContractViolation("network needs input, decision and output widths");
  for (int w : widths) {
    if (w < 1) throw ContractViolation("network widths must be positive");
  }
}

Parameters Parameters::zeros_like() const {
  Parameters out;
  out.layers.reserve(layers.size());
  for (const auto& l : layers) {
    out.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  }
  return out;
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool Parameters::operator==(const Parameters& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() || a.bias.size() != b.bias.size()) {
      return false;
    }
    if (a.weight != b.weight || a.bias != b.bias) return false;
  }
  return true;
}

Parameters init_parameters(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  Parameters params;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const int fan_in = spec.widths[l];
    const int fan_out = spec.widths[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    DenseLayer layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
    // Row-major fill order keeps the draw sequence independent of Eigen's storage.
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = rng.uniform(-limit, limit);
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

namespace {

void check_shapes(const NetworkSpec& spec, const Parameters& params, const Matrix& inputs) {
  spec.validate();
  if (params.layers.size() != spec.num_layers()) throw ContractViolation("parameter layer count does not match spec");
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto& layer = params.layers[l];
    if (layer.weight.cols() != spec.widths[l] || layer.weight.rows() != spec.widths[l + 1] ||
        layer.bias.size() != spec.widths[l + 1]) {
      throw ContractViolation("layer " + std::to_string(l) + " shape does not match the network widths");
    }
  }
  if (inputs.cols() != spec.input_dim()) {
    throw ContractViolation("input has " + std::to_string(inputs.cols()) + " columns, network expects " +
                            std::to_string(spec.input_dim()));
  }
}

bool rectified(const NetworkSpec& spec, std::size_t layer) {
  const std::size_t decision = spec.num_layers() - 2;
  if (layer < decision) return true;
  if (layer == decision) return spec.decision_activation == Activation::relu;
  return false;
}

// Column-per-sample activations: acts[0] is the input, acts[l+1] the output of layer l.
struct Trace {
  std::vector<Matrix> pre;
  std::vector<Matrix> acts;
};

Trace run(const NetworkSpec& spec, const Parameters& params, const Matrix& inputs) {
  Trace t;
  t.acts.reserve(spec.num_layers() + 1);
  t.pre.reserve(spec.num_layers());
  t.acts.push_back(inputs.transpose());
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto& layer = params.layers[l];
    Matrix z = layer.weight * t.acts.back();
    z.colwise() += layer.bias;
    Matrix a = rectified(spec, l) ? Matrix(z.unaryExpr([](double v) { return v < 0.0 ? 0.0 : v; })) : z;
    t.pre.push_back(std::move(z));
    t.acts.push_back(std::move(a));
  }
  return t;
}

}  // namespace

ForwardResult forward(const NetworkSpec& spec, const Parameters& params, const Matrix& inputs) {
  check_shapes(spec, params, inputs);
  auto t = run(spec, params, inputs);
  const std::size_t n_layers = spec.num_layers();
  return {t.acts[n_layers - 1].transpose(), t.acts[n_layers].transpose()};
}

LossResult loss_and_grads(const NetworkSpec& spec, const Parameters& params, const Matrix& inputs,
                          std::span<const int> labels, const PrototypeSet* targets, double lambda,
                          NumericContext where) {
  check_shapes(spec, params, inputs);
  const auto n = static_cast<Eigen::Index>(labels.size());
  if (n < 1 || inputs.rows() != n) throw ContractViolation("batch must be non-empty with one label per row");
  const int k = spec.num_classes();
  for (int y : labels) {
    if (y < 0 || y >= k) throw ContractViolation("label " + std::to_string(y) + " out of range");
  }

  auto t = run(spec, params, inputs);
  const std::size_t n_layers = spec.num_layers();
  const Matrix& logits = t.acts[n_layers];
  const Matrix& feats = t.acts[n_layers - 1];
  const double inv_n = 1.0 / static_cast<double>(n);

  LossResult out;
  Matrix delta(k, n);  // d loss / d logits
  double ce = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto col = logits.col(i);
    const double m = col.maxCoeff();
    const double lse = m + std::log((col.array() - m).exp().sum());
    const int y = labels[static_cast<std::size_t>(i)];
    ce += lse - col(y);
    delta.col(i) = (col.array() - lse).exp() * inv_n;
    delta(y, i) -= inv_n;
  }
  out.cross_entropy = ce * inv_n;
  out.loss = out.cross_entropy;

  std::vector<Matrix> dpre(n_layers);
  dpre[n_layers - 1] = std::move(delta);

  // Back into the decision layer output.
  Matrix dfeat = params.layers[n_layers - 1].weight.transpose() * dpre[n_layers - 1];
  if (targets != nullptr && lambda != 0.0) {
    if (targets->dim() != spec.feature_dim()) throw ContractViolation("target dimension does not match decision layer");
    double dist_sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector* p = targets->find(labels[static_cast<std::size_t>(i)]);
      if (p == nullptr) {
        ++out.missing_targets;
        continue;
      }
      const Vector diff = feats.col(i) - *p;
      const double dist = diff.norm();
      dist_sum += dist;
      if (dist > 0.0) dfeat.col(i) += (lambda * inv_n / dist) * diff;
    }
    out.regularizer = dist_sum * inv_n;
    out.loss += lambda * out.regularizer;
  }

  if (!std::isfinite(out.loss)) throw NumericError("non-finite training loss", where);

  out.grads = params.zeros_like();
  for (std::size_t l = n_layers - 1;; --l) {
    if (l + 1 < n_layers) {
      Matrix d = (l + 2 == n_layers) ? std::move(dfeat)
                                     : Matrix(params.layers[l + 1].weight.transpose() * dpre[l + 1]);
      if (rectified(spec, l)) d.array() *= (t.pre[l].array() > 0.0).cast<double>();
      dpre[l] = std::move(d);
    }
    out.grads.layers[l].weight.noalias() = dpre[l] * t.acts[l].transpose();
    out.grads.layers[l].bias = dpre[l].rowwise().sum();
    if (l == 0) break;
  }
  return out;
}

void sgd_step(Parameters& params, const Parameters& grads, double lr) {
  if (!(lr > 0.0)) throw ContractViolation("learning rate must be positive");
  if (params.layers.size() != grads.layers.size()) throw ContractViolation("gradient layer count mismatch");
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    params.layers[l].weight -= lr * grads.layers[l].weight;
    params.layers[l].bias -= lr * grads.layers[l].bias;
  }
}

void write_parameters(std::ostream& out, const Parameters& params) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    out << "layer " << l << ' ' << layer.weight.rows() << 'x' << layer.weight.cols() << '\n';
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) out << (c ? "," : "") << format_real(layer.weight(r, c));
      out << '\n';
    }
    out << "bias";
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) out << ',' << format_real(layer.bias(r));
    out << '\n';
  }
}

}  // namespace protonorm
