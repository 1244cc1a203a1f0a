#include "protonorm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "protonorm/error.hpp"
#include "protonorm/rng.hpp"
#include "protonorm/text_io.hpp"

namespace protonorm {

void LabeledDataset::validate() const {
  if (num_classes < 1) throw ContractViolation("dataset needs at least one class");
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ContractViolation("dataset has " + std::to_string(features.rows()) + " rows but " +
                            std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw ContractViolation("label " + std::to_string(y) + " outside 0.." + std::to_string(num_classes - 1));
    }
  }
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

LabeledDataset subset(const LabeledDataset& source, const std::vector<std::size_t>& indices) {
  LabeledDataset out;
  out.num_classes = source.num_classes;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), source.features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto i = indices[r];
    out.features.row(static_cast<Eigen::Index>(r)) = source.features.row(static_cast<Eigen::Index>(i));
    out.labels.push_back(source.labels[i]);
  }
  return out;
}

LabeledDataset generate_spiral(int points_per_class, int num_classes, std::uint64_t seed, double noise_stddev) {
  if (points_per_class < 2) throw ConfigError("points_per_class", "must be at least 2");
  if (num_classes < 1) throw ConfigError("num_classes", "must be at least 1");

  const double span = static_cast<double>(points_per_class - 1);
  const double two_pi = 2.0 * std::numbers::pi;
  Rng noise(seed, StreamPurpose::noise);

  LabeledDataset data;
  data.num_classes = num_classes;
  data.features.resize(static_cast<Eigen::Index>(num_classes) * points_per_class, 2);
  data.labels.reserve(static_cast<std::size_t>(num_classes) * points_per_class);

  Eigen::Index row = 0;
  for (int k = 0; k < num_classes; ++k) {
    const double base = two_pi * k / num_classes;
    const double sweep = two_pi * k / (num_classes * span);
    for (int i = 0; i < points_per_class; ++i, ++row) {
      const double radius = 1.0 + 9.0 * i / span;
      const double b = noise_stddev * noise.normal();
      const double omega = base + i * sweep + b;
      data.features(row, 0) = radius * std::sin(omega);
      data.features(row, 1) = radius * std::cos(omega);
      data.labels.push_back(k);
    }
  }
  return data;
}

std::string to_string(PartitionMode mode) {
  switch (mode) {
    case PartitionMode::iid: return "iid";
    case PartitionMode::dirichlet: return "dirichlet";
    case PartitionMode::pathological: return "pathological";
  }
  return "?";
}

PartitionMode parse_partition_mode(const std::string& text) {
  if (text == "iid") return PartitionMode::iid;
  if (text == "dirichlet") return PartitionMode::dirichlet;
  if (text == "pathological") return PartitionMode::pathological;
  throw ConfigError("partition", "expected iid|dirichlet|pathological, got '" + text + "'");
}

std::vector<std::vector<std::size_t>> PartitionPlan::class_histograms(const LabeledDataset& data) const {
  std::vector<std::vector<std::size_t>> hist(assignments.size(),
                                             std::vector<std::size_t>(static_cast<std::size_t>(data.num_classes), 0));
  for (std::size_t c = 0; c < assignments.size(); ++c) {
    for (auto i : assignments[c]) ++hist[c][static_cast<std::size_t>(data.labels[i])];
  }
  return hist;
}

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const LabeledDataset& data) {
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(data.num_classes));
  for (std::size_t i = 0; i < data.labels.size(); ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  return by_class;
}

// Integer counts summing exactly to `total`: floors of share*total, then one extra
// unit to the largest fractional parts (ties to the lower index).
std::vector<std::size_t> largest_remainder(const std::vector<double>& shares, std::size_t total) {
  const std::size_t n = shares.size();
  std::vector<std::size_t> counts(n);
  std::vector<double> frac(n);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double exact = shares[i] * static_cast<double>(total);
    const double fl = std::floor(exact);
    counts[i] = static_cast<std::size_t>(fl);
    frac[i] = exact - fl;
    assigned += counts[i];
  }
  // Rounding in shares can make floors overshoot by a unit; trim from the smallest fractions.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t r = 0; assigned < total; r = (r + 1) % n) {
    ++counts[order[r]];
    ++assigned;
  }
  for (std::size_t r = n; assigned > total && r > 0; --r) {
    auto& c = counts[order[r - 1]];
    if (c > 0) {
      --c;
      --assigned;
    }
  }
  return counts;
}

void split_evenly(const std::vector<std::size_t>& items, const std::vector<int>& owners,
                  std::vector<std::vector<std::size_t>>& assignments) {
  const std::size_t m = owners.size();
  const std::size_t base = items.size() / m;
  const std::size_t extra = items.size() % m;
  std::size_t pos = 0;
  for (std::size_t o = 0; o < m; ++o) {
    const std::size_t take = base + (o < extra ? 1 : 0);
    auto& dst = assignments[static_cast<std::size_t>(owners[o])];
    dst.insert(dst.end(), items.begin() + static_cast<std::ptrdiff_t>(pos),
               items.begin() + static_cast<std::ptrdiff_t>(pos + take));
    pos += take;
  }
}

}  // namespace

PartitionPlan partition(const LabeledDataset& data, int num_clients, const PartitionOptions& options,
                        std::uint64_t seed) {
  if (num_clients < 1) throw ConfigError("clients", "must be at least 1");
  if (options.mode == PartitionMode::dirichlet && !(options.alpha > 0.0)) {
    throw ConfigError("alpha", "must be > 0 for dirichlet partitioning");
  }
  if (options.mode == PartitionMode::pathological &&
      (options.classes_per_client < 1 || options.classes_per_client > data.num_classes)) {
    throw ConfigError("classes_per_client", "must lie in 1..num_classes");
  }

  const auto m = static_cast<std::size_t>(num_clients);
  Rng rng(seed, StreamPurpose::partition);
  PartitionPlan plan;
  plan.options = options;
  plan.assignments.assign(m, {});

  switch (options.mode) {
    case PartitionMode::iid: {
      std::vector<std::size_t> all(data.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      rng.shuffle(all);
      std::vector<int> owners(m);
      for (std::size_t c = 0; c < m; ++c) owners[c] = static_cast<int>(c);
      split_evenly(all, owners, plan.assignments);
      break;
    }
    case PartitionMode::dirichlet: {
      for (auto& members : indices_by_class(data)) {
        rng.shuffle(members);
        const auto shares = rng.dirichlet(options.alpha, m);
        const auto counts = largest_remainder(shares, members.size());
        std::size_t pos = 0;
        for (std::size_t c = 0; c < m; ++c) {
          auto& dst = plan.assignments[c];
          dst.insert(dst.end(), members.begin() + static_cast<std::ptrdiff_t>(pos),
                     members.begin() + static_cast<std::ptrdiff_t>(pos + counts[c]));
          pos += counts[c];
        }
      }
      break;
    }
    case PartitionMode::pathological: {
      std::vector<std::vector<int>> holders(static_cast<std::size_t>(data.num_classes));
      for (int c = 0; c < num_clients; ++c) {
        for (int t = 0; t < options.classes_per_client; ++t) {
          const int cls = (c * options.classes_per_client + t) % data.num_classes;
          holders[static_cast<std::size_t>(cls)].push_back(c);
        }
      }
      auto by_class = indices_by_class(data);
      std::string orphaned;
      for (std::size_t k = 0; k < by_class.size(); ++k) {
        if (holders[k].empty() && !by_class[k].empty()) orphaned += (orphaned.empty() ? "" : ",") + std::to_string(k);
      }
      if (!orphaned.empty()) {
        throw PartitionError("pathological partition with " + std::to_string(num_clients) + " clients x " +
                             std::to_string(options.classes_per_client) +
                             " classes leaves these classes unassigned: " + orphaned);
      }
      for (std::size_t k = 0; k < by_class.size(); ++k) {
        if (holders[k].empty()) continue;
        rng.shuffle(by_class[k]);
        split_evenly(by_class[k], holders[k], plan.assignments);
      }
      break;
    }
  }

  std::string empty;
  for (std::size_t c = 0; c < m; ++c) {
    std::sort(plan.assignments[c].begin(), plan.assignments[c].end());
    if (plan.assignments[c].empty()) empty += (empty.empty() ? "" : ",") + std::to_string(c);
  }
  if (!empty.empty()) {
    throw PartitionError(to_string(options.mode) + " partition (seed " + std::to_string(seed) +
                         ") left clients with no samples: " + empty + "; try another seed");
  }
  return plan;
}

SplitResult split_train_test(const PartitionPlan& plan, const LabeledDataset& data, double train_fraction,
                             std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction", "must lie strictly between 0 and 1");
  }
  SplitResult result;
  result.clients.resize(plan.num_clients());
  const auto k = static_cast<std::size_t>(data.num_classes);

  for (std::size_t c = 0; c < plan.num_clients(); ++c) {
    Rng rng(seed, StreamPurpose::split, c);
    std::vector<std::vector<std::size_t>> members(k);
    for (auto i : plan.assignments[c]) members[static_cast<std::size_t>(data.labels[i])].push_back(i);

    const std::size_t total = plan.assignments[c].size();
    const double test_fraction = 1.0 - train_fraction;
    std::vector<double> shares(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      shares[j] = total == 0 ? 0.0 : static_cast<double>(members[j].size()) / static_cast<double>(total);
    }
    const auto test_total = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(total)));
    auto n_test = largest_remainder(shares, test_total);

    // Clamp each class into [1, size-1] when it has at least two samples; rebalance
    // from the classes with the most test samples so the client total is kept if possible.
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t size = members[j].size();
      if (size < 2) {
        n_test[j] = 0;
        continue;
      }
      n_test[j] = std::clamp<std::size_t>(n_test[j], 1, size - 1);
    }
    std::size_t now = 0;
    for (auto v : n_test) now += v;
    while (now > test_total) {
      std::size_t best = k;
      for (std::size_t j = 0; j < k; ++j) {
        if (n_test[j] > 1 && (best == k || n_test[j] > n_test[best])) best = j;
      }
      if (best == k) break;
      --n_test[best];
      --now;
    }
    while (now < test_total) {
      std::size_t best = k;
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t room = members[j].size() >= 2 ? members[j].size() - 1 - n_test[j] : 0;
        if (room > 0 && (best == k || members[j].size() - n_test[j] > members[best].size() - n_test[best])) best = j;
      }
      if (best == k) break;
      ++n_test[best];
      ++now;
    }

    auto& out = result.clients[c];
    for (std::size_t j = 0; j < k; ++j) {
      auto& list = members[j];
      if (list.size() == 1) {
        result.warnings.push_back("client " + std::to_string(c) + " class " + std::to_string(j) +
                                  " has a single sample; kept in train");
      }
      rng.shuffle(list);
      out.test.insert(out.test.end(), list.begin(), list.begin() + static_cast<std::ptrdiff_t>(n_test[j]));
      out.train.insert(out.train.end(), list.begin() + static_cast<std::ptrdiff_t>(n_test[j]), list.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
  }
  return result;
}

void write_dataset(std::ostream& out, const LabeledDataset& data) {
  out << "#K=" << data.num_classes << ",D=" << data.dim() << ",n=" << data.size() << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.labels[i];
    for (Eigen::Index j = 0; j < data.features.cols(); ++j) {
      out << ',' << format_real(data.features(static_cast<Eigen::Index>(i), j));
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing dataset");
}

LabeledDataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("#K=", 0) != 0) throw IoError("dataset header '#K=..,D=..,n=..' missing");
  long long k = -1, d = -1, n = -1;
  for (auto field : split_fields(std::string_view(line).substr(1), ',')) {
    const auto eq = field.find('=');
    if (eq == std::string_view::npos) throw IoError("malformed dataset header: " + line);
    const auto key = trim(field.substr(0, eq));
    const auto value = parse_integer(field.substr(eq + 1));
    if (key == "K") k = value;
    else if (key == "D") d = value;
    else if (key == "n") n = value;
  }
  if (k < 1 || d < 1 || n < 0) throw IoError("malformed dataset header: " + line);

  LabeledDataset data;
  data.num_classes = static_cast<int>(k);
  data.features.resize(n, d);
  data.labels.reserve(static_cast<std::size_t>(n));
  for (long long r = 0; r < n; ++r) {
    if (!std::getline(in, line)) throw IoError("dataset truncated at record " + std::to_string(r));
    const auto fields = split_fields(trim(line), ',');
    if (static_cast<long long>(fields.size()) != d + 1) {
      throw IoError("record " + std::to_string(r) + " has " + std::to_string(fields.size()) + " fields, expected " +
                    std::to_string(d + 1));
    }
    data.labels.push_back(static_cast<int>(parse_integer(fields[0])));
    for (long long j = 0; j < d; ++j) data.features(r, j) = parse_real(fields[static_cast<std::size_t>(j + 1)]);
  }
  try {
    data.validate();
  } catch (const ContractViolation& e) {
    throw IoError(std::string("invalid dataset file: ") + e.what());
  }
  return data;
}

void write_partition(std::ostream& out, const PartitionPlan& plan) {
  for (std::size_t c = 0; c < plan.num_clients(); ++c) {
    out << c << ':';
    const auto& a = plan.assignments[c];
    for (std::size_t i = 0; i < a.size(); ++i) out << (i ? "," : "") << a[i];
    out << '\n';
  }
  if (!out) throw IoError("failed writing partition plan");
}

PartitionPlan read_partition(std::istream& in) {
  PartitionPlan plan;
  std::string line;
  while (std::getline(in, line)) {
    const auto text = trim(line);
    if (text.empty()) continue;
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) throw IoError("partition line lacks ':': " + line);
    const auto id = parse_integer(text.substr(0, colon));
    if (id != static_cast<long long>(plan.assignments.size())) throw IoError("partition client ids must be 0,1,2,...");
    std::vector<std::size_t> idx;
    const auto rest = text.substr(colon + 1);
    if (!trim(rest).empty()) {
      for (auto f : split_fields(rest, ',')) idx.push_back(static_cast<std::size_t>(parse_integer(f)));
    }
    plan.assignments.push_back(std::move(idx));
  }
  return plan;
}

}  // namespace protonorm
