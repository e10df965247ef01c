#include "qslab/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qslab/errors.hpp"

namespace qslab {

bool ReportBundle::all_pass() const {
  for (const auto& r : rows)
    if (!r.pass) return false;
  return true;
}

std::string fmt17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return std::string(buf);
}

namespace {

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 8);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string to_csv(const ReportBundle& bundle) {
  std::ostringstream os;
  os << "experiment_id,check_name,n_or_p,left,right,margin,pass\n";
  for (const auto& r : bundle.rows)
    os << r.experiment_id << ',' << r.check_name << ',' << r.n_or_p << ',' << fmt17(r.left)
       << ',' << fmt17(r.right) << ',' << fmt17(r.margin) << ',' << (r.pass ? "true" : "false")
       << '\n';
  return os.str();
}

std::string to_jsonl(const ReportBundle& bundle) {
  std::ostringstream os;
  for (const auto& r : bundle.rows)
    os << "{\"experiment_id\":\"" << json_escape(r.experiment_id) << "\",\"check_name\":\""
       << json_escape(r.check_name) << "\",\"n_or_p\":\"" << json_escape(r.n_or_p)
       << "\",\"left\":" << fmt17(r.left) << ",\"right\":" << fmt17(r.right)
       << ",\"margin\":" << fmt17(r.margin) << ",\"pass\":" << (r.pass ? "true" : "false")
       << "}\n";
  return os.str();
}

std::string to_meta_json(const ReportBundle& bundle) {
  std::ostringstream os;
  os << "{\"experiment_id\":\"" << json_escape(bundle.experiment_id) << "\",\"config\":\""
     << json_escape(bundle.config_echo) << "\",\"timestamp\":\""
     << json_escape(bundle.timestamp) << "\",\"wall_ms\":" << fmt17(bundle.wall_ms)
     << ",\"node_count\":" << bundle.node_count << "}\n";
  return os.str();
}

void emit_report(const ReportBundle& bundle, const std::string& format,
                 const std::string& path) {
  namespace fs = std::filesystem;
  const fs::path base(path);
  if (base.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(base.parent_path(), ec);
  }
  const std::string data_path =
      path + (format == "jsonl" ? ".jsonl" : ".csv");
  {
    std::ofstream out(data_path, std::ios::binary);
    if (!out) throw Error("emit_report: cannot write '" + data_path + "'");
    out << (format == "jsonl" ? to_jsonl(bundle) : to_csv(bundle));
  }
  {
    std::ofstream out(path + ".meta.json", std::ios::binary);
    if (!out) throw Error("emit_report: cannot write '" + path + ".meta.json'");
    out << to_meta_json(bundle);
  }
}

}  // namespace qslab
