// protonorm: command-line front end for the prototype federation simulator.
//
//   protonorm generate-data --points-per-class 5000 --out spiral.csv
//   protonorm run --mode protonorm --seed 1 --out-dir runs/pn
//   protonorm align --in globals.csv --out aligned.csv --trace trace.csv
//   protonorm report --dump runs/pn/global_prototypes.csv

#include <chrono>
#include <ctime>
#include <deque>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "protonorm/aligner.hpp"
#include "protonorm/config.hpp"
#include "protonorm/dataset.hpp"
#include "protonorm/error.hpp"
#include "protonorm/federation.hpp"
#include "protonorm/reporting.hpp"
#include "protonorm/text_io.hpp"

namespace pn = protonorm;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

template <typename Fn>
void with_output(const std::string& path, Fn fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw pn::IoError("cannot open " + path + " for writing");
  fn(out);
  if (!out) throw pn::IoError("failed writing " + path);
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw pn::IoError("cannot open " + path);
  return in;
}

// Registers one `--flag` per config key; values land in `slots` in key order.
std::vector<CLI::Option*> add_config_flags(CLI::App& cmd, std::deque<std::string>& slots,
                                           std::string_view only_prefix = {}) {
  std::vector<CLI::Option*> options;
  for (const auto& key : pn::config_keys()) {
    if (!only_prefix.empty() && key.name.rfind(only_prefix, 0) != 0) {
      options.push_back(nullptr);
      slots.emplace_back();
      continue;
    }
    std::string names = "--" + pn::flag_name(key.name);
    if (pn::flag_name(key.name) != key.name) names += ",--" + key.name;
    auto& slot = slots.emplace_back();
    options.push_back(cmd.add_option(names, slot, key.help));
  }
  return options;
}

pn::Assignments collect_flags(const std::vector<CLI::Option*>& options, const std::deque<std::string>& slots) {
  pn::Assignments out;
  const auto& keys = pn::config_keys();
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (options[i] != nullptr && options[i]->count() > 0) out.emplace_back(keys[i].name, slots[i]);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prototype-based federated learning simulator with hyperspherical prototype alignment"};
  app.require_subcommand(1);

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "write the spiral dataset (and optionally a partition plan)");
  int gen_points = 5000, gen_classes = 6, gen_clients = 10, gen_per_client = 2;
  std::uint64_t gen_seed = 1;
  double gen_noise = 1.0, gen_alpha = 0.1;
  std::string gen_out = "-", gen_partition_out, gen_mode = "dirichlet";
  gen->add_option("--points-per-class", gen_points, "samples per class")->capture_default_str();
  gen->add_option("--num-classes", gen_classes, "number of spiral arms")->capture_default_str();
  gen->add_option("--noise-stddev", gen_noise, "angular noise")->capture_default_str();
  gen->add_option("--seed", gen_seed, "noise and partition seed")->capture_default_str();
  gen->add_option("--out", gen_out, "dataset file ('-' for stdout)")->capture_default_str();
  gen->add_option("--partition-out", gen_partition_out, "also write a partition plan here");
  gen->add_option("--clients", gen_clients, "clients for the partition plan")->capture_default_str();
  gen->add_option("--partition", gen_mode, "iid | dirichlet | pathological")->capture_default_str();
  gen->add_option("--alpha", gen_alpha, "Dirichlet concentration")->capture_default_str();
  gen->add_option("--classes-per-client", gen_per_client, "classes per client (pathological)")->capture_default_str();

  // run
  auto* run = app.add_subcommand("run", "run a federation and write metrics into --out-dir");
  std::string run_config, run_out_dir = "run_out";
  bool run_quiet = false;
  run->add_option("--config", run_config, "key=value config file (flags override it)");
  run->add_option("--out-dir", run_out_dir, "output directory")->capture_default_str();
  run->add_flag("--quiet", run_quiet, "no per-round progress");
  std::deque<std::string> run_slots;
  const auto run_flags = add_config_flags(*run, run_slots);

  // align
  auto* aln = app.add_subcommand("align", "spread prototypes from a CSV over the unit hypersphere");
  std::string aln_in, aln_out = "-", aln_trace;
  std::uint64_t aln_seed = 0;
  aln->add_option("--in", aln_in, "prototype CSV: class_id,v0,...")->required();
  aln->add_option("--out", aln_out, "aligned prototype CSV ('-' for stdout)")->capture_default_str();
  aln->add_option("--trace", aln_trace, "per-iteration trace CSV");
  aln->add_option("--seed", aln_seed, "seed for degenerate-input handling")->capture_default_str();
  std::deque<std::string> aln_slots;
  const auto aln_flags = add_config_flags(*aln, aln_slots, "aligner.");

  // report
  auto* rep = app.add_subcommand("report", "recompute distance and margin summaries from a prototype dump");
  std::string rep_dump, rep_out = "-";
  rep->add_option("--dump", rep_dump, "global_prototypes.csv written by 'run'")->required();
  rep->add_option("--out", rep_out, "summary CSV ('-' for stdout)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(pn::ErrorCategory::config);
  }

  try {
    if (*gen) {
      const auto data = pn::generate_spiral(gen_points, gen_classes, gen_seed, gen_noise);
      with_output(gen_out, [&](std::ostream& o) { pn::write_dataset(o, data); });
      if (!gen_partition_out.empty()) {
        pn::PartitionOptions opts{pn::parse_partition_mode(gen_mode), gen_alpha, gen_per_client};
        const auto plan = pn::partition(data, gen_clients, opts, gen_seed);
        with_output(gen_partition_out, [&](std::ostream& o) { pn::write_partition(o, plan); });
      }
    } else if (*run) {
      pn::Assignments assignments;
      if (!run_config.empty()) assignments = pn::read_config_file(run_config);
      for (auto& kv : collect_flags(run_flags, run_slots)) assignments.push_back(std::move(kv));
      auto manifest = pn::resolve_config(assignments);
      manifest.out_dir = run_out_dir;
      manifest.started_at = utc_now();
      for (const auto& key : manifest.unused_keys) {
        std::cerr << "note: '" << key << "' has no effect in " << pn::to_string(manifest.config.mode) << " mode\n";
      }

      const auto result = pn::run_experiment(manifest.config, [&](const pn::RoundReport& r) {
        if (!run_quiet) {
          std::cerr << "round " << r.round << "  mean_acc " << r.mean_acc << "  best " << r.mean_best_acc
                    << "  pa_iters " << r.pa_iters << '\n';
        }
      });
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
      pn::emit_reports(result, manifest.config, run_out_dir);
      manifest.finished_at = utc_now();
      with_output((std::filesystem::path(run_out_dir) / "manifest.txt").string(),
                  [&](std::ostream& o) { pn::write_manifest(o, manifest); });
      std::cout << "final_mean_best_acc=" << pn::format_real(result.final_mean_best_acc) << '\n';
    } else if (*aln) {
      const auto manifest = pn::resolve_config(collect_flags(aln_flags, aln_slots));
      auto config = manifest.config.aligner;
      config.seed = aln_seed;
      auto in = open_input(aln_in);
      const auto protos = pn::read_prototype_csv(in);
      const auto result = pn::align(protos, config);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
      with_output(aln_out, [&](std::ostream& o) { pn::write_prototype_csv(o, result.protos); });
      if (!aln_trace.empty()) with_output(aln_trace, [&](std::ostream& o) { pn::write_trace(o, result.trace); });
      std::cerr << "iterations " << result.trace.iterations_run << " (" << pn::to_string(result.trace.terminated_by)
                << ")\n";
    } else if (*rep) {
      auto in = open_input(rep_dump);
      const auto rows = pn::summarize_dump(pn::read_prototype_dump(in));
      with_output(rep_out, [&](std::ostream& o) { pn::write_dump_summary(o, rows); });
    }
  } catch (const pn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
