#include "protonorm/prototypes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "protonorm/error.hpp"

namespace protonorm {

const Vector* PrototypeSet::find(int class_id) const {
  const auto it = by_class_.find(class_id);
  return it == by_class_.end() ? nullptr : &it->second.vec;
}

const Prototype& PrototypeSet::at(int class_id) const {
  const auto it = by_class_.find(class_id);
  if (it == by_class_.end()) throw ContractViolation("no prototype for class " + std::to_string(class_id));
  return it->second;
}

void PrototypeSet::set(Prototype p) {
  if (p.vec.size() != dim_) {
    throw ContractViolation("prototype of dimension " + std::to_string(p.vec.size()) + " added to set of dimension " +
                            std::to_string(dim_));
  }
  if (p.class_id < 0 || p.class_id >= num_classes_) {
    throw ContractViolation("class id " + std::to_string(p.class_id) + " outside 0.." + std::to_string(num_classes_ - 1));
  }
  const int id = p.class_id;
  by_class_.insert_or_assign(id, std::move(p));
}

void PrototypeSet::set(int class_id, Vector vec, std::size_t support) {
  set(Prototype{class_id, std::move(vec), support});
}

std::vector<int> PrototypeSet::class_ids() const {
  std::vector<int> ids;
  ids.reserve(by_class_.size());
  for (const auto& [id, p] : by_class_) ids.push_back(id);
  return ids;
}

bool PrototypeSet::operator==(const PrototypeSet& other) const {
  if (num_classes_ != other.num_classes_ || dim_ != other.dim_ || by_class_.size() != other.by_class_.size()) {
    return false;
  }
  for (const auto& [id, p] : by_class_) {
    const auto it = other.by_class_.find(id);
    if (it == other.by_class_.end() || it->second.support != p.support || it->second.vec != p.vec) return false;
  }
  return true;
}

PrototypeSet local_prototypes(const Matrix& features, std::span<const int> labels, int num_classes) {
  if (features.rows() < 1 || static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ContractViolation("local prototypes need at least one feature row per label");
  }
  const auto d = features.cols();
  std::vector<Vector> sums(static_cast<std::size_t>(num_classes), Vector::Zero(d));
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= num_classes) throw ContractViolation("label " + std::to_string(y) + " out of range");
    sums[static_cast<std::size_t>(y)] += features.row(static_cast<Eigen::Index>(i)).transpose();
    ++counts[static_cast<std::size_t>(y)];
  }
  PrototypeSet out(num_classes, static_cast<int>(d));
  for (int j = 0; j < num_classes; ++j) {
    const auto c = counts[static_cast<std::size_t>(j)];
    if (c == 0) continue;
    out.set(j, sums[static_cast<std::size_t>(j)] / static_cast<double>(c), c);
  }
  return out;
}

namespace {

PrototypeSet empty_like(std::span<const PrototypeSet> locals) {
  if (locals.empty()) throw ContractViolation("aggregation needs at least one client prototype set");
  int k = 0;
  const int d = locals.front().dim();
  for (const auto& s : locals) {
    if (s.dim() != d) throw ContractViolation("clients disagree on prototype dimension");
    k = std::max(k, s.num_classes());
  }
  return PrototypeSet(k, d);
}

}  // namespace

PrototypeSet aggregate_simple(std::span<const PrototypeSet> locals) {
  PrototypeSet out = empty_like(locals);
  for (int j = 0; j < out.num_classes(); ++j) {
    Vector sum = Vector::Zero(out.dim());
    std::size_t holders = 0;
    for (const auto& s : locals) {
      if (const Vector* v = s.find(j)) {
        sum += *v;
        ++holders;
      }
    }
    if (holders > 0) out.set(j, sum / static_cast<double>(holders));
  }
  return out;
}

PrototypeSet aggregate_weighted(std::span<const PrototypeSet> locals, WeightedForm form) {
  PrototypeSet out = empty_like(locals);
  for (int j = 0; j < out.num_classes(); ++j) {
    std::size_t total = 0;
    std::size_t holders = 0;
    for (const auto& s : locals) {
      if (s.contains(j)) {
        total += s.at(j).support;
        ++holders;
      }
    }
    if (holders == 0) continue;
    if (total == 0) throw ContractViolation("class " + std::to_string(j) + " has zero total support");
    Vector acc = Vector::Zero(out.dim());
    for (const auto& s : locals) {
      if (!s.contains(j)) continue;
      const auto& p = s.at(j);
      acc += (static_cast<double>(p.support) / static_cast<double>(total)) * p.vec;
    }
    if (form == WeightedForm::literal) acc /= static_cast<double>(holders);
    out.set(j, std::move(acc));
  }
  return out;
}

PrototypeSet upscale(const PrototypeSet& protos, double gamma) {
  if (!(gamma > 0.0)) throw ContractViolation("upscaling factor must be positive");
  PrototypeSet out(protos.num_classes(), protos.dim());
  for (const auto& [id, p] : protos) out.set(id, gamma * p.vec, p.support);
  return out;
}

int classify_nearest(const Eigen::Ref<const Vector>& feature, const PrototypeSet& protos) {
  if (protos.empty()) throw ContractViolation("cannot classify against an empty prototype set");
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (const auto& [id, p] : protos) {
    const double d2 = (feature - p.vec).squaredNorm();
    if (best < 0 || d2 < best_d2) {
      best = id;
      best_d2 = d2;
    }
  }
  return best;
}

std::vector<double> raw_margins(const PrototypeSet& protos) {
  if (protos.size() < 2) throw ContractViolation("margins need at least two prototypes");
  std::vector<const Vector*> vecs;
  for (const auto& [id, p] : protos) vecs.push_back(&p.vec);
  std::vector<double> out(vecs.size(), std::numeric_limits<double>::infinity());
  for (std::size_t a = 0; a < vecs.size(); ++a) {
    for (std::size_t b = a + 1; b < vecs.size(); ++b) {
      const double d = (*vecs[a] - *vecs[b]).norm();
      out[a] = std::min(out[a], d);
      out[b] = std::min(out[b], d);
    }
  }
  return out;
}

std::vector<double> margins(const PrototypeSet& protos) {
  auto out = raw_margins(protos);
  const double top = *std::max_element(out.begin(), out.end());
  if (top <= 0.0) return std::vector<double>(out.size(), 0.0);
  for (auto& m : out) m /= top;
  return out;
}

DistanceStats pairwise_distance_stats(const PrototypeSet& protos) {
  if (protos.size() < 2) throw ContractViolation("distance statistics need at least two prototypes");
  std::vector<const Vector*> vecs;
  for (const auto& [id, p] : protos) vecs.push_back(&p.vec);
  DistanceStats s{std::numeric_limits<double>::infinity(), 0.0, 0.0};
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < vecs.size(); ++a) {
    for (std::size_t b = a + 1; b < vecs.size(); ++b) {
      const double d = (*vecs[a] - *vecs[b]).norm();
      s.min = std::min(s.min, d);
      s.max = std::max(s.max, d);
      s.mean += d;
      ++pairs;
    }
  }
  s.mean /= static_cast<double>(pairs);
  return s;
}

}  // namespace protonorm

namespace protonorm {

double coefficient_of_variation(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (mean == 0.0) return 0.0;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return std::sqrt(var) / mean;
}

}  // namespace protonorm
