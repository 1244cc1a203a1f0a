#include "protonorm/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <type_traits>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "protonorm/error.hpp"
#include "protonorm/text_io.hpp"

namespace protonorm {

namespace {

double as_real(const std::string& key, const std::string& text) {
  try {
    const double v = parse_real(text);
    if (!std::isfinite(v)) throw IoError("");
    return v;
  } catch (const IoError&) {
    throw ConfigError(key, "expected a finite real number, got '" + text + "'");
  }
}

int as_int(const std::string& key, const std::string& text) {
  try {
    const auto v = parse_integer(text);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) throw IoError("");
    return static_cast<int>(v);
  } catch (const IoError&) {
    throw ConfigError(key, "expected an integer, got '" + text + "'");
  }
}

std::uint64_t as_u64(const std::string& key, const std::string& text) {
  const auto t = trim(text);
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc{} || end != t.data() + t.size()) {
    throw ConfigError(key, "expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

bool as_bool(const std::string& key, const std::string& text) {
  const auto t = trim(text);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw ConfigError(key, "expected true|false, got '" + text + "'");
}

std::vector<int> as_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  if (trim(text).empty()) return out;
  for (auto f : split_fields(trim(text), ',')) out.push_back(as_int(key, std::string(f)));
  return out;
}

// The parse_* functions throw ConfigError carrying their own key name.
template <typename Enum, typename Parse>
Enum as_enum(const std::string& text, Parse parse) {
  return parse(std::string(trim(text)));
}

std::string str(double v) { return format_real(v); }
std::string str(int v) { return std::to_string(v); }
std::string str(bool v) { return v ? "true" : "false"; }

ConfigKey real_key(std::string name, std::string help, double FederationConfig::*field) {
  const std::string key = name;
  return {std::move(name), std::move(help), [key, field](FederationConfig& c, const std::string& v) { c.*field = as_real(key, v); },
          [field](const FederationConfig& c) { return str(c.*field); }};
}

ConfigKey int_key(std::string name, std::string help, int FederationConfig::*field) {
  const std::string key = name;
  return {std::move(name), std::move(help), [key, field](FederationConfig& c, const std::string& v) { c.*field = as_int(key, v); },
          [field](const FederationConfig& c) { return str(c.*field); }};
}

ConfigKey bool_key(std::string name, std::string help, bool FederationConfig::*field) {
  const std::string key = name;
  return {std::move(name), std::move(help), [key, field](FederationConfig& c, const std::string& v) { c.*field = as_bool(key, v); },
          [field](const FederationConfig& c) { return str(c.*field); }};
}

template <typename Member>
ConfigKey aligner_key(std::string name, std::string help, Member AlignerConfig::*field) {
  const std::string key = name;
  return {std::move(name), std::move(help),
          [key, field](FederationConfig& c, const std::string& v) {
            if constexpr (std::is_same_v<Member, int>) {
              c.aligner.*field = as_int(key, v);
            } else {
              c.aligner.*field = as_real(key, v);
            }
          },
          [field](const FederationConfig& c) { return str(c.aligner.*field); }};
}

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> keys;
  keys.push_back({"seed", "master seed for every random stream",
                  [](FederationConfig& c, const std::string& v) { c.master_seed = as_u64("seed", v); },
                  [](const FederationConfig& c) { return std::to_string(c.master_seed); }});
  keys.push_back({"mode", "protonorm | fedproto",
                  [](FederationConfig& c, const std::string& v) { c.mode = as_enum<Mode>(v, parse_mode); },
                  [](const FederationConfig& c) { return to_string(c.mode); }});
  keys.push_back(int_key("clients", "number of clients M", &FederationConfig::num_clients));
  keys.push_back(int_key("rounds", "communication rounds", &FederationConfig::rounds));
  keys.push_back(real_key("participation_fraction", "fraction of clients sampled per round",
                          &FederationConfig::participation_fraction));
  keys.push_back(real_key("lambda", "weight of the prototype distance regularizer", &FederationConfig::lambda));
  keys.push_back(real_key("gamma", "prototype upscaling factor (protonorm)", &FederationConfig::gamma));
  keys.push_back(int_key("local_epochs", "local epochs per round", &FederationConfig::local_epochs));
  keys.push_back(int_key("batch_size", "client minibatch size", &FederationConfig::batch_size));
  keys.push_back(real_key("client_lr", "client SGD learning rate", &FederationConfig::client_lr));
  keys.push_back({"weighted_form", "literal | convex weighted aggregation (fedproto)",
                  [](FederationConfig& c, const std::string& v) {
                    c.weighted_form = as_enum<WeightedForm>(v, parse_weighted_form);
                  },
                  [](const FederationConfig& c) { return to_string(c.weighted_form); }});
  keys.push_back(aligner_key("aligner.mu", "momentum coefficient", &AlignerConfig::mu));
  keys.push_back(aligner_key("aligner.eta0", "initial step size", &AlignerConfig::eta0));
  keys.push_back(aligner_key("aligner.decay_factor", "step-size decay factor", &AlignerConfig::decay_factor));
  keys.push_back(aligner_key("aligner.decay_every", "iterations between decays", &AlignerConfig::decay_every));
  keys.push_back(aligner_key("aligner.epsilon", "force-change stopping threshold", &AlignerConfig::epsilon));
  keys.push_back(aligner_key("aligner.patience", "consecutive calm iterations to stop", &AlignerConfig::patience));
  keys.push_back(aligner_key("aligner.max_iters", "iteration cap", &AlignerConfig::max_iters));
  keys.push_back(aligner_key("aligner.min_pair_distance_floor", "distance clamp in the kernel",
                             &AlignerConfig::min_pair_distance_floor));
  keys.push_back(aligner_key("aligner.coincident_jitter", "nudge applied to coincident prototypes",
                             &AlignerConfig::coincident_jitter));
  keys.push_back({"network.hidden", "comma-separated hidden widths",
                  [](FederationConfig& c, const std::string& v) { c.hidden_widths = as_int_list("network.hidden", v); },
                  [](const FederationConfig& c) {
                    std::string s;
                    for (std::size_t i = 0; i < c.hidden_widths.size(); ++i) s += (i ? "," : "") + std::to_string(c.hidden_widths[i]);
                    return s;
                  }});
  keys.push_back(int_key("network.decision_dim", "decision layer width d", &FederationConfig::decision_dim));
  keys.push_back({"network.decision_activation", "relu | identity on the decision layer",
                  [](FederationConfig& c, const std::string& v) {
                    c.decision_activation = as_enum<Activation>(v, parse_activation);
                  },
                  [](const FederationConfig& c) { return to_string(c.decision_activation); }});
  keys.push_back({"points_per_class", "spiral samples per class",
                  [](FederationConfig& c, const std::string& v) { c.data.points_per_class = as_int("points_per_class", v); },
                  [](const FederationConfig& c) { return str(c.data.points_per_class); }});
  keys.push_back({"num_classes", "spiral classes K",
                  [](FederationConfig& c, const std::string& v) { c.data.num_classes = as_int("num_classes", v); },
                  [](const FederationConfig& c) { return str(c.data.num_classes); }});
  keys.push_back({"noise_stddev", "angular noise of the spiral",
                  [](FederationConfig& c, const std::string& v) { c.data.noise_stddev = as_real("noise_stddev", v); },
                  [](const FederationConfig& c) { return str(c.data.noise_stddev); }});
  keys.push_back({"partition", "iid | dirichlet | pathological",
                  [](FederationConfig& c, const std::string& v) {
                    c.partition.mode = as_enum<PartitionMode>(v, parse_partition_mode);
                  },
                  [](const FederationConfig& c) { return to_string(c.partition.mode); }});
  keys.push_back({"alpha", "Dirichlet concentration",
                  [](FederationConfig& c, const std::string& v) { c.partition.alpha = as_real("alpha", v); },
                  [](const FederationConfig& c) { return str(c.partition.alpha); }});
  keys.push_back({"classes_per_client", "classes per client (pathological)",
                  [](FederationConfig& c, const std::string& v) {
                    c.partition.classes_per_client = as_int("classes_per_client", v);
                  },
                  [](const FederationConfig& c) { return str(c.partition.classes_per_client); }});
  keys.push_back(real_key("train_fraction", "per-client train share", &FederationConfig::train_fraction));
  keys.push_back(bool_key("report_participants_only", "average accuracy over participants only",
                          &FederationConfig::report_participants_only));
  keys.push_back(bool_key("dump_prototypes", "write global_prototypes.csv", &FederationConfig::dump_prototypes));
  keys.push_back(int_key("threads", "client worker threads (0 = hardware)", &FederationConfig::threads));
  return keys;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

std::string flag_name(std::string_view key) {
  std::string out(key);
  std::replace(out.begin(), out.end(), '_', '-');
  return out;
}

Assignments parse_config_text(std::string_view text) {
  Assignments out;
  std::set<std::string> seen;
  int line_no = 0;
  for (auto raw : split_fields(text, '\n')) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("", "line " + std::to_string(line_no) + " is not key=value: '" + std::string(line) + "'");
    }
    std::string key(trim(line.substr(0, eq)));
    if (!seen.insert(key).second) throw ConfigError(key, "set more than once");
    out.emplace_back(std::move(key), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

Assignments read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

RunManifest resolve_config(const Assignments& assignments) {
  RunManifest manifest;
  const auto& keys = config_keys();
  for (const auto& [name, value] : assignments) {
    const auto it = std::find_if(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.name == name; });
    if (it == keys.end()) throw ConfigError(name, "unknown key");
    it->set(manifest.config, value);
    if (std::find(manifest.explicit_keys.begin(), manifest.explicit_keys.end(), name) == manifest.explicit_keys.end()) {
      manifest.explicit_keys.push_back(name);
    }
  }
  manifest.config.validate();

  const auto& c = manifest.config;
  for (const auto& name : manifest.explicit_keys) {
    const bool unused = (c.mode == Mode::fedproto && (name.rfind("aligner.", 0) == 0 || name == "gamma")) ||
                        (c.mode == Mode::protonorm && name == "weighted_form") ||
                        (name == "alpha" && c.partition.mode != PartitionMode::dirichlet) ||
                        (name == "classes_per_client" && c.partition.mode != PartitionMode::pathological);
    if (unused) manifest.unused_keys.push_back(name);
  }
  return manifest;
}

std::string serialize_config(const FederationConfig& config) {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + "=" + k.get(config) + "\n";
  return out;
}

void write_manifest(std::ostream& out, const RunManifest& manifest) {
  out << "# protonorm run manifest\n";
  out << "# tool_version=" << manifest.tool_version << '\n';
  out << "# out_dir=" << manifest.out_dir << '\n';
  out << "# started_at=" << manifest.started_at << '\n';
  out << "# finished_at=" << manifest.finished_at << '\n';
  out << "# unused_keys=";
  for (std::size_t i = 0; i < manifest.unused_keys.size(); ++i) out << (i ? "," : "") << manifest.unused_keys[i];
  out << '\n';
  out << serialize_config(manifest.config);
  if (!out) throw IoError("failed writing manifest");
}

}  // namespace protonorm
