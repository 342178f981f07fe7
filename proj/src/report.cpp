#include "vqoe/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "vqoe/error.hpp"

namespace vqoe::report {

namespace {

json number(double v) {
  if (std::isfinite(v)) return v;
  return fmt(v);
}

json class_stats(const flowsim::ClassStats& c) {
  return {{"accepted", c.accepted},
          {"rejected", c.rejected},
          {"starved", c.starved},
          {"starvation_fraction", c.starvation_fraction()},
          {"starvation_stderr", c.starvation_stderr()},
          {"mean_dtvt", c.mean_dtvt()},
          {"starvation_histogram", c.starvation_histogram}};
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", no);
  out.push_back(cur);
  return out;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

json to_json(const workload::ModelParams& p) {
  return std::visit(
      [](const auto& q) -> json {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, workload::HyperExpParams>)
          return {{"family", "hyperexp"},
                  {"p1", q.p1},
                  {"theta1", q.theta1},
                  {"theta2", q.theta2},
                  {"mean1", 1.0 / q.theta1},
                  {"mean2", 1.0 / q.theta2}};
        else if constexpr (std::is_same_v<T, workload::ExpParams>)
          return {{"family", "exponential"}, {"theta", q.theta}, {"mean", 1.0 / q.theta}};
        else
          return {{"family", "genpareto"}, {"xi", q.xi}, {"sigma", q.sigma}};
      },
      p);
}

json to_json(const workload::FitReport& r) {
  return {{"params", to_json(r.params)},
          {"loglik", r.loglik},
          {"adjusted_r2", r.adjusted_r2},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"gradient_norm", r.gradient_norm},
          {"near_degenerate", r.near_degenerate},
          {"message", r.message}};
}

json to_json(const workload::ModelSelection& s) {
  json ranking = json::array();
  for (auto f : s.ranking) ranking.push_back(workload::family_name(f));
  return {{"fits",
           {{"hyperexp", to_json(s.hyperexp)},
            {"genpareto", to_json(s.genpareto)},
            {"exponential", to_json(s.exponential)}}},
          {"ranking", ranking},
          {"selected", workload::family_name(s.selected)}};
}

json to_json(const markov::SystemConfig& c) {
  return {{"capacity_bps", c.capacity_bps},
          {"max_flows", c.max_flows},
          {"bitrate_bps", c.bitrate_bps},
          {"phi1", c.phi1},
          {"phi2", c.phi2},
          {"lambda1", c.lambda1},
          {"lambda2", c.lambda2},
          {"theta1", c.theta1},
          {"theta2", c.theta2},
          {"startup_threshold", c.startup_threshold},
          {"pd_mode", c.pd_mode},
          {"offered_load", c.offered_load()}};
}

json to_json(const analytic::QoEReport& r) {
  json classes = json::array();
  for (const auto& c : r.classes) {
    classes.push_back({{"class", c.tagged_class},
                       {"ok", c.ok},
                       {"error", c.error},
                       {"starvation_probability", number(c.starvation_probability)},
                       {"mean_dtvt", number(c.mean_dtvt)},
                       {"mean_dtvt_closed_form", number(c.mean_dtvt_closed_form)},
                       {"diagnostics",
                        {{"condition_w", number(c.diagnostics.condition_w)},
                         {"condition_v", number(c.diagnostics.condition_v)},
                         {"w_integrated", c.diagnostics.w_integrated},
                         {"bitrate_used", c.diagnostics.bitrate_used},
                         {"warnings", c.diagnostics.warnings}}}});
  }
  std::vector<double> occ(r.occupancy.data(), r.occupancy.data() + r.occupancy.size());
  return {{"classes", classes},
          {"p_rej", r.p_rej},
          {"startup_threshold", r.startup_threshold},
          {"pd_mode", r.pd_mode},
          {"occupancy", occ}};
}

json to_json(const flowsim::SimReport& r) {
  return {{"classes", {class_stats(r.classes[0]), class_stats(r.classes[1])}},
          {"rejection_fraction", r.rejection_fraction()},
          {"max_flows", r.max_flows},
          {"occupancy_time", r.occupancy_time},
          {"arrival_states", r.arrival_states},
          {"measured_time", r.measured_time},
          {"events", r.events},
          {"warnings", r.warnings}};
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t k = 0; k < header.size(); ++k)
    if (header[k] == name) return k;
  throw DomainError("no column '" + name + "'");
}

const std::string& CsvTable::at(std::size_t row, const std::string& name) const {
  return rows.at(row).at(column(name));
}

void write_csv(std::ostream& out, const CsvTable& table) {
  auto line = [&](const std::vector<std::string>& f) {
    for (std::size_t k = 0; k < f.size(); ++k) out << (k ? "," : "") << quote_if_needed(f[k]);
    out << '\n';
  };
  line(table.header);
  for (const auto& r : table.rows) line(r);
}

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  write_csv(f, table);
  if (!f) throw IoError("write to '" + path + "' failed");
}

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty() || line == "\r") continue;
    const std::size_t first = no;
    // A quoted field may span lines: keep reading while a quote is open.
    std::string more;
    while (std::count(line.begin(), line.end(), '"') % 2 != 0 && std::getline(in, more)) {
      ++no;
      line += '\n';
      line += more;
    }
    auto fields = split_csv_line(line, first);
    if (t.header.empty()) {
      t.header = std::move(fields);
    } else {
      if (fields.size() != t.header.size())
        throw ParseError("expected " + std::to_string(t.header.size()) + " fields, got " +
                             std::to_string(fields.size()),
                         first);
      t.rows.push_back(std::move(fields));
    }
  }
  if (t.header.empty()) throw ParseError("empty CSV input: header row required");
  return t;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "'");
  return read_csv(f);
}

}  // namespace vqoe::report
