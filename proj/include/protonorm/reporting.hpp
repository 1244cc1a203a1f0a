#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <vector>

#include "protonorm/federation.hpp"
#include "protonorm/prototypes.hpp"

namespace protonorm {

/// Writes summary.csv, metrics.csv, margins.csv, pa_trace_round_<r>.csv (protonorm
/// only) and, when enabled, global_prototypes.csv into `out_dir`, creating it if needed.
void emit_reports(const ExperimentResult& result, const FederationConfig& config, const std::filesystem::path& out_dir);

void write_summary(std::ostream& out, const std::vector<RoundReport>& reports);
void write_metrics(std::ostream& out, const std::vector<RoundReport>& reports);
void write_margins(std::ostream& out, const std::vector<RoundReport>& reports);

/// `class_id,v0,...` with a header line.
void write_prototype_csv(std::ostream& out, const PrototypeSet& protos);
/// Accepts the format above; the header line is optional. The class count is
/// one past the largest id seen.
PrototypeSet read_prototype_csv(std::istream& in);

/// `round,class_id,v0,...`; the header is written only when `header` is set.
void write_prototype_dump(std::ostream& out, int round, const PrototypeSet& protos, bool header);
std::map<int, PrototypeSet> read_prototype_dump(std::istream& in);

struct DumpSummary {
  int round = 0;
  DistanceStats distances;
  double min_margin = 0.0;
  double mean_margin = 0.0;
  double margin_cv = 0.0;
};

/// Distance and margin statistics per dumped round (rounds with < 2 prototypes are skipped).
std::vector<DumpSummary> summarize_dump(const std::map<int, PrototypeSet>& dump);
/// `round,min_dist,mean_dist,max_dist,min_margin,mean_margin,margin_cv`
void write_dump_summary(std::ostream& out, const std::vector<DumpSummary>& rows);

}  // namespace protonorm
