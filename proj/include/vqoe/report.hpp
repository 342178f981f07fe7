#pragma once

// Machine-readable output: JSON documents for single results and flat CSV
// tables for sweeps.

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqoe/analytic.hpp"
#include "vqoe/flowsim.hpp"
#include "vqoe/workload.hpp"

namespace vqoe::report {

using nlohmann::json;

/// Shortest text that parses back to the same double ("inf"/"nan" kept).
std::string fmt(double v);

json to_json(const workload::ModelParams& p);
json to_json(const workload::FitReport& r);
json to_json(const workload::ModelSelection& s);
json to_json(const markov::SystemConfig& cfg);
json to_json(const analytic::QoEReport& r);
json to_json(const flowsim::SimReport& r);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  const std::string& at(std::size_t row, const std::string& name) const;
};

/// Fields are written bare unless they contain a comma, quote or newline.
void write_csv(std::ostream& out, const CsvTable& table);
void write_csv(const std::string& path, const CsvTable& table);
/// Header row required; every row must have the header's field count.
CsvTable read_csv(std::istream& in);
CsvTable read_csv(const std::string& path);

}  // namespace vqoe::report
