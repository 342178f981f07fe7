#include "vqoe/records.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "vqoe/error.hpp"

namespace vqoe {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cols;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cols.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cols.emplace_back();
  return cols;
}

double parse_number(const std::string& cell, const char* what, std::size_t line) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
    throw ParseError(std::string("bad ") + what + " value '" + cell + "'", line);
  return v;
}

}  // namespace

std::vector<ViewRecord> read_view_records(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  bool with_class = false;
  std::vector<ViewRecord> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cols = split(line);
    if (!have_header) {
      if (cols.size() < 3 || cols[0] != "arrival_ts_s" || cols[1] != "viewing_time_s" ||
          cols[2] != "video_duration_s")
        throw ParseError(
            "expected header 'arrival_ts_s,viewing_time_s,video_duration_s[,class]'", lineno);
      if (cols.size() > 4 || (cols.size() == 4 && cols[3] != "class"))
        throw ParseError("unexpected header column", lineno);
      with_class = cols.size() == 4;
      have_header = true;
      continue;
    }
    const std::size_t want = with_class ? 4 : 3;
    if (cols.size() != want)
      throw ParseError("expected " + std::to_string(want) + " columns, got " +
                           std::to_string(cols.size()),
                       lineno);
    ViewRecord r;
    r.arrival_ts = parse_number(cols[0], "arrival_ts_s", lineno);
    r.viewing_time = parse_number(cols[1], "viewing_time_s", lineno);
    if (r.viewing_time < 0.0) throw ParseError("negative viewing time", lineno);
    if (!cols[2].empty()) {
      r.duration = parse_number(cols[2], "video_duration_s", lineno);
      if (*r.duration <= 0.0) throw ParseError("video duration must be > 0", lineno);
    }
    if (with_class && !cols[3].empty()) {
      if (cols[3] != "1" && cols[3] != "2") throw ParseError("class must be 1 or 2", lineno);
      r.klass = cols[3] == "1" ? 1 : 2;
    }
    out.push_back(std::move(r));
  }
  if (!have_header) throw ParseError("empty input: header row required", lineno ? lineno : 1);
  return out;
}

std::vector<ViewRecord> read_view_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_view_records(in);
}

void write_view_records(std::ostream& out, const std::vector<ViewRecord>& records) {
  bool with_class = false;
  for (const auto& r : records) with_class |= r.klass.has_value();
  out << "arrival_ts_s,viewing_time_s,video_duration_s" << (with_class ? ",class" : "") << '\n';
  out << std::setprecision(17);
  for (const auto& r : records) {
    out << r.arrival_ts << ',' << r.viewing_time << ',';
    if (r.duration) out << *r.duration;
    if (with_class) {
      out << ',';
      if (r.klass) out << *r.klass;
    }
    out << '\n';
  }
}

void write_view_records(const std::string& path, const std::vector<ViewRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_view_records(out, records);
}

std::vector<ViewRecord> filter_records(const std::vector<ViewRecord>& records,
                                       const std::function<bool(const ViewRecord&)>& keep) {
  std::vector<ViewRecord> out;
  for (const auto& r : records)
    if (keep(r)) out.push_back(r);
  return out;
}

std::vector<ViewRecord> filter_by_hour(const std::vector<ViewRecord>& records,
                                       double start_hour, double end_hour) {
  return filter_records(records, [=](const ViewRecord& r) {
    const double h = std::fmod(std::fmod(r.arrival_ts, 86400.0) + 86400.0, 86400.0) / 3600.0;
    return start_hour <= end_hour ? (h >= start_hour && h < end_hour)
                                  : (h >= start_hour || h < end_hour);
  });
}

std::vector<double> viewing_times(const std::vector<ViewRecord>& records) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.viewing_time);
  return out;
}

}  // namespace vqoe
