#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qslab {

/// One check result row. Numbers are serialized with 17 significant digits
/// ("%.17g"), which round-trips doubles bit-exactly.
struct ReportRow {
  std::string experiment_id;
  std::string check_name;
  std::string n_or_p;  // ladder index, exponent, or empty
  double left = 0.0;
  double right = 0.0;
  double margin = 0.0;
  bool pass = true;
};

struct ReportBundle {
  std::string experiment_id;
  std::string config_echo;
  std::vector<ReportRow> rows;
  // Timing and environment live apart from the rows so re-runs byte-reproduce
  // the row files.
  double wall_ms = 0.0;
  std::int64_t node_count = 0;
  std::string timestamp;

  bool all_pass() const;
};

std::string fmt17(double x);

/// CSV with the fixed header experiment_id,check_name,n_or_p,left,right,margin,pass.
std::string to_csv(const ReportBundle& bundle);
/// JSON-lines mirror of the CSV rows.
std::string to_jsonl(const ReportBundle& bundle);
/// Metadata sidecar (config echo, timestamp, wall clock, node count).
std::string to_meta_json(const ReportBundle& bundle);

/// Writes <path>.csv or <path>.jsonl plus <path>.meta.json; creates parent
/// directories. Throws on unwritable paths.
void emit_report(const ReportBundle& bundle, const std::string& format, const std::string& path);

}  // namespace qslab
