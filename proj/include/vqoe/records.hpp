#pragma once

// View-record traces: `arrival_ts_s,viewing_time_s,video_duration_s[,class]`
// with a mandatory header row. Duration may be empty; class, when present,
// is 1 or 2 and overrides Bayesian class assignment in the simulator.

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace vqoe {

struct ViewRecord {
  double arrival_ts = 0.0;    // s
  double viewing_time = 0.0;  // s of content watched
  std::optional<double> duration;
  std::optional<int> klass;
};

std::vector<ViewRecord> read_view_records(std::istream& in);
std::vector<ViewRecord> read_view_records(const std::string& path);

/// Writes the header plus one row per record. The class column is emitted
/// only if any record carries one.
void write_view_records(std::ostream& out, const std::vector<ViewRecord>& records);
void write_view_records(const std::string& path, const std::vector<ViewRecord>& records);

std::vector<ViewRecord> filter_records(const std::vector<ViewRecord>& records,
                                       const std::function<bool(const ViewRecord&)>& keep);

/// Keeps records whose arrival falls in [start_hour, end_hour) of the day
/// (arrival_ts taken modulo 86400). Wraps past midnight when start > end.
std::vector<ViewRecord> filter_by_hour(const std::vector<ViewRecord>& records,
                                       double start_hour, double end_hour);

std::vector<double> viewing_times(const std::vector<ViewRecord>& records);

}  // namespace vqoe
