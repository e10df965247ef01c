#include "qslab/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace qslab {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(int line, const std::string& what) {
  throw Error("config line " + std::to_string(line) + ": " + what);
}

double parse_num(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) fail(line, "trailing characters in number '" + v + "'");
    return x;
  } catch (const Error&) {
    throw;
  } catch (...) {
    fail(line, "expected a number, got '" + v + "'");
  }
}

std::vector<double> parse_list(const std::string& v, int line) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_num(item, line));
  }
  return out;
}

bool parse_bool(const std::string& v, int line) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(line, "expected a boolean, got '" + v + "'");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(ss, raw)) {
    ++line;
    std::string s = trim(raw);
    if (s.empty() || s[0] == '#') continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail(line, "malformed section header '" + s + "'");
      section = s.substr(1, s.size() - 2);
      if (section != "model" && section != "coefficient" && section != "terminal" &&
          section != "structure" && section != "scheme" && section != "run")
        fail(line, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(line, "expected key = value, got '" + s + "'");
    const std::string key = trim(s.substr(0, eq));
    const std::string val = trim(s.substr(eq + 1));

    if (section.empty()) {
      if (key == "kind") {
        if (val != "solve" && val != "ladder" && val != "inequalities" && val != "classify" &&
            val != "dual")
          fail(line, "unknown experiment kind '" + val + "'");
        cfg.kind = val;
      } else if (key == "seed") {
        cfg.seed = static_cast<std::uint64_t>(parse_num(val, line));
      } else {
        fail(line, "unknown top-level key '" + key + "'");
      }
    } else if (section == "model") {
      if (key == "T") cfg.T = parse_num(val, line);
      else if (key == "N") cfg.N = static_cast<int>(parse_num(val, line));
      else if (key == "branching") cfg.branching = static_cast<int>(parse_num(val, line));
      else if (key == "recombining") cfg.recombining = parse_bool(val, line);
      else fail(line, "unknown [model] key '" + key + "'");
    } else if (section == "coefficient") {
      if (key == "name") cfg.coefficient = val;
      else if (key == "params") cfg.coefficient_params = parse_list(val, line);
      else fail(line, "unknown [coefficient] key '" + key + "'");
    } else if (section == "terminal") {
      if (key == "name") cfg.terminal = val;
      else if (key == "params") cfg.terminal_params = parse_list(val, line);
      else fail(line, "unknown [terminal] key '" + key + "'");
    } else if (section == "structure") {
      if (key == "l") cfg.l = parse_num(val, line);
      else if (key == "c") cfg.c = parse_num(val, line);
      else if (key == "delta") cfg.delta = parse_num(val, line);
      else fail(line, "unknown [structure] key '" + key + "'");
    } else if (section == "scheme") {
      if (key == "method") {
        if (val != "explicit" && val != "implicit") fail(line, "unknown method '" + val + "'");
        cfg.method = val;
      } else if (key == "tol") cfg.tol = parse_num(val, line);
      else if (key == "max_iters") cfg.max_iters = static_cast<int>(parse_num(val, line));
      else fail(line, "unknown [scheme] key '" + key + "'");
    } else if (section == "run") {
      if (key == "n_list") cfg.n_list = parse_list(val, line);
      else if (key == "p_list") cfg.p_list = parse_list(val, line);
      else if (key == "out") cfg.out = val;
      else if (key == "format") {
        if (val != "csv" && val != "jsonl") fail(line, "unknown format '" + val + "'");
        cfg.format = val;
      } else if (key == "threads") cfg.threads = static_cast<int>(parse_num(val, line));
      else if (key == "node_budget") cfg.node_budget = static_cast<std::int64_t>(parse_num(val, line));
      else if (key == "garsia_seeds") cfg.garsia_seeds = static_cast<int>(parse_num(val, line));
      else if (key == "dual_densities") cfg.dual_densities = static_cast<int>(parse_num(val, line));
      else if (key == "dual_points") cfg.dual_points = static_cast<int>(parse_num(val, line));
      else if (key == "instances") cfg.instances = static_cast<int>(parse_num(val, line));
      else fail(line, "unknown [run] key '" + key + "'");
    }
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

namespace {

std::string join(const std::vector<double>& v) {
  std::string s;
  char buf[64];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    if (i) s += ",";
    s += buf;
  }
  return s;
}

}  // namespace

std::string ExperimentConfig::echo() const {
  auto num = [](double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "kind = " << kind << "\nseed = " << seed << "\n"
     << "[model]\nT = " << num(T) << "\nN = " << N << "\nbranching = " << branching
     << "\nrecombining = " << (recombining ? "true" : "false") << "\n"
     << "[coefficient]\nname = " << coefficient << "\nparams = " << join(coefficient_params)
     << "\n"
     << "[terminal]\nname = " << terminal << "\nparams = " << join(terminal_params) << "\n"
     << "[structure]\nl = " << num(l) << "\nc = " << num(c) << "\ndelta = " << num(delta)
     << "\n"
     << "[scheme]\nmethod = " << method << "\ntol = " << num(tol)
     << "\nmax_iters = " << max_iters << "\n"
     << "[run]\nn_list = " << join(n_list) << "\np_list = " << join(p_list)
     << "\nout = " << out << "\nformat = " << format << "\nthreads = " << threads
     << "\nnode_budget = " << node_budget << "\ngarsia_seeds = " << garsia_seeds
     << "\ndual_densities = " << dual_densities << "\ndual_points = " << dual_points
     << "\ninstances = " << instances << "\n";
  return os.str();
}

}  // namespace qslab
