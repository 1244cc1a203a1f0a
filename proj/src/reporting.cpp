#include "protonorm/reporting.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "protonorm/aligner.hpp"
#include "protonorm/error.hpp"
#include "protonorm/text_io.hpp"

namespace protonorm {

namespace {

template <typename Writer>
void write_file(const std::filesystem::path& path, Writer writer) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  writer(out);
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

bool is_integer(std::string_view s) {
  s = trim(s);
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) s.remove_prefix(1);
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char ch) { return ch >= '0' && ch <= '9'; });
}

std::string opt_real(const std::optional<double>& v) { return v ? format_real(*v) : "nan"; }

}  // namespace

void write_summary(std::ostream& out, const std::vector<RoundReport>& reports) {
  out << "round,mean_acc,mean_best_acc,pa_iters,min_margin,mean_margin\n";
  for (const auto& r : reports) {
    out << r.round << ',' << format_real(r.mean_acc) << ',' << format_real(r.mean_best_acc) << ',' << r.pa_iters << ','
        << format_real(r.min_margin) << ',' << format_real(r.mean_margin) << '\n';
  }
}

void write_metrics(std::ostream& out, const std::vector<RoundReport>& reports) {
  out << "round,client_id,train_loss,test_acc,best_acc\n";
  for (const auto& r : reports) {
    for (const auto& c : r.clients) {
      out << r.round << ',' << c.client_id << ',' << format_real(c.train_loss) << ',' << opt_real(c.test_acc) << ','
          << format_real(c.best_acc) << '\n';
    }
  }
}

void write_margins(std::ostream& out, const std::vector<RoundReport>& reports) {
  out << "round,class_id,normalized_margin\n";
  for (const auto& r : reports) {
    for (const auto& [id, m] : r.margins) out << r.round << ',' << id << ',' << format_real(m) << '\n';
  }
}

void emit_reports(const ExperimentResult& result, const FederationConfig& config, const std::filesystem::path& out_dir) {
  if (result.reports.empty()) throw ContractViolation("no round reports to emit");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  write_file(out_dir / "summary.csv", [&](std::ostream& o) { write_summary(o, result.reports); });
  write_file(out_dir / "metrics.csv", [&](std::ostream& o) { write_metrics(o, result.reports); });
  write_file(out_dir / "margins.csv", [&](std::ostream& o) { write_margins(o, result.reports); });
  if (config.mode == Mode::protonorm) {
    for (const auto& r : result.reports) {
      if (!r.trace) continue;
      write_file(out_dir / ("pa_trace_round_" + std::to_string(r.round) + ".csv"),
                 [&](std::ostream& o) { write_trace(o, *r.trace); });
    }
  }
  if (config.dump_prototypes) {
    write_file(out_dir / "global_prototypes.csv", [&](std::ostream& o) {
      bool first = true;
      for (const auto& r : result.reports) {
        write_prototype_dump(o, r.round, r.globals, first);
        first = false;
      }
    });
  }
}

void write_prototype_csv(std::ostream& out, const PrototypeSet& protos) {
  out << "class_id";
  for (int i = 0; i < protos.dim(); ++i) out << ",v" << i;
  out << '\n';
  for (const auto& [id, p] : protos) {
    out << id;
    for (Eigen::Index i = 0; i < p.vec.size(); ++i) out << ',' << format_real(p.vec(i));
    out << '\n';
  }
  if (!out) throw IoError("failed writing prototypes");
}

namespace {

struct Row {
  std::vector<long long> ids;
  Vector vec;
};

// Reads comma-separated rows of `id_fields` integers followed by reals; a
// non-numeric first line is treated as a header.
std::vector<Row> read_rows(std::istream& in, std::size_t id_fields) {
  std::vector<Row> rows;
  std::string line;
  bool first = true;
  Eigen::Index dim = -1;
  while (std::getline(in, line)) {
    const auto text = trim(line);
    if (text.empty()) continue;
    const auto fields = split_fields(text, ',');
    if (first && !is_integer(fields[0])) {
      first = false;
      continue;
    }
    first = false;
    if (fields.size() <= id_fields) throw IoError("prototype row has no vector components: " + line);
    Row row;
    for (std::size_t i = 0; i < id_fields; ++i) row.ids.push_back(parse_integer(fields[i]));
    row.vec.resize(static_cast<Eigen::Index>(fields.size() - id_fields));
    for (std::size_t i = id_fields; i < fields.size(); ++i) row.vec(static_cast<Eigen::Index>(i - id_fields)) = parse_real(fields[i]);
    if (dim >= 0 && row.vec.size() != dim) throw IoError("prototype rows disagree on dimension");
    dim = row.vec.size();
    rows.push_back(std::move(row));
  }
  return rows;
}

PrototypeSet build_set(const std::vector<const Row*>& rows, std::size_t id_index, int num_classes) {
  PrototypeSet set(num_classes, static_cast<int>(rows.front()->vec.size()));
  for (const Row* r : rows) {
    const auto id = r->ids[id_index];
    if (id < 0) throw IoError("negative class id in prototype file");
    if (set.contains(static_cast<int>(id))) throw IoError("class " + std::to_string(id) + " listed twice");
    set.set(static_cast<int>(id), r->vec);
  }
  return set;
}

}  // namespace

PrototypeSet read_prototype_csv(std::istream& in) {
  const auto rows = read_rows(in, 1);
  if (rows.empty()) throw IoError("prototype file has no rows");
  long long top = 0;
  std::vector<const Row*> ptrs;
  for (const auto& r : rows) {
    top = std::max(top, r.ids[0]);
    ptrs.push_back(&r);
  }
  return build_set(ptrs, 0, static_cast<int>(top + 1));
}

void write_prototype_dump(std::ostream& out, int round, const PrototypeSet& protos, bool header) {
  if (header) {
    out << "round,class_id";
    for (int i = 0; i < protos.dim(); ++i) out << ",v" << i;
    out << '\n';
  }
  for (const auto& [id, p] : protos) {
    out << round << ',' << id;
    for (Eigen::Index i = 0; i < p.vec.size(); ++i) out << ',' << format_real(p.vec(i));
    out << '\n';
  }
}

std::map<int, PrototypeSet> read_prototype_dump(std::istream& in) {
  const auto rows = read_rows(in, 2);
  long long top = 0;
  std::map<int, std::vector<const Row*>> by_round;
  for (const auto& r : rows) {
    top = std::max(top, r.ids[1]);
    by_round[static_cast<int>(r.ids[0])].push_back(&r);
  }
  std::map<int, PrototypeSet> out;
  for (const auto& [round, group] : by_round) out.emplace(round, build_set(group, 1, static_cast<int>(top + 1)));
  return out;
}

std::vector<DumpSummary> summarize_dump(const std::map<int, PrototypeSet>& dump) {
  std::vector<DumpSummary> out;
  for (const auto& [round, set] : dump) {
    if (set.size() < 2) continue;
    DumpSummary s;
    s.round = round;
    s.distances = pairwise_distance_stats(set);
    const auto m = margins(set);
    s.min_margin = *std::min_element(m.begin(), m.end());
    double sum = 0.0;
    for (double v : m) sum += v;
    s.mean_margin = sum / static_cast<double>(m.size());
    s.margin_cv = coefficient_of_variation(m);
    out.push_back(s);
  }
  return out;
}

void write_dump_summary(std::ostream& out, const std::vector<DumpSummary>& rows) {
  out << "round,min_dist,mean_dist,max_dist,min_margin,mean_margin,margin_cv\n";
  for (const auto& s : rows) {
    out << s.round << ',' << format_real(s.distances.min) << ',' << format_real(s.distances.mean) << ','
        << format_real(s.distances.max) << ',' << format_real(s.min_margin) << ',' << format_real(s.mean_margin) << ','
        << format_real(s.margin_cv) << '\n';
  }
}

}  // namespace protonorm
