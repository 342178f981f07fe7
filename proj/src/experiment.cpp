#include "vqoe/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "vqoe/error.hpp"
#include "vqoe/random.hpp"
#include "vqoe/records.hpp"

namespace vqoe::experiment {

namespace pt = boost::property_tree;
using report::CsvTable;
using report::fmt;
using report::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "inf") return std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw DomainError("key '" + key + "': expected a number, got '" + text + "'");
  return v;
}

long parse_long(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  long v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw DomainError("key '" + key + "': expected an integer, got '" + text + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw DomainError("key '" + key + "': expected an unsigned integer, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw DomainError("key '" + key + "': expected true or false, got '" + text + "'");
}

template <class T, class F>
std::vector<T> parse_list(const std::string& text, F&& one) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!trim(item).empty()) out.push_back(one(item));
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + fmt(v[k]);
  return s;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + std::to_string(v[k]);
  return s;
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? sep : "") + v[k];
  return s;
}

const char* pd_name(PdSetting p) {
  switch (p) {
    case PdSetting::on: return "true";
    case PdSetting::off: return "false";
    default: return "auto";
  }
}

const char* boundary_name(analytic::BoundaryRule r) {
  return r == analytic::BoundaryRule::state_indexed ? "state_indexed" : "bounded_modes";
}

const char* b(bool v) { return v ? "true" : "false"; }

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

// Keys per section in the order render_config prints them.
const std::vector<std::pair<std::string, std::vector<std::pair<std::string, Setter>>>>& schema() {
  static const std::vector<std::pair<std::string, std::vector<std::pair<std::string, Setter>>>>
      s = {
          {"run",
           {{"seed", [](ExperimentConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); }}}},
          {"system",
           {{"capacity_bps",
             [](ExperimentConfig& c, const std::string& v) {
               c.capacity_bps = parse_double("capacity_bps", v);
             }},
            {"bitrate_bps",
             [](ExperimentConfig& c, const std::string& v) {
               c.bitrate_bps = parse_double("bitrate_bps", v);
             }},
            {"p1", [](ExperimentConfig& c, const std::string& v) { c.p1 = parse_double("p1", v); }},
            {"mean1",
             [](ExperimentConfig& c, const std::string& v) { c.mean1 = parse_double("mean1", v); }},
            {"mean2",
             [](ExperimentConfig& c, const std::string& v) { c.mean2 = parse_double("mean2", v); }},
            {"lambda",
             [](ExperimentConfig& c, const std::string& v) { c.lambda = parse_double("lambda", v); }},
            {"pd_mode",
             [](ExperimentConfig& c, const std::string& v) {
               const std::string t = trim(v);
               if (t == "auto")
                 c.pd_mode = PdSetting::automatic;
               else
                 c.pd_mode = parse_bool("pd_mode", t) ? PdSetting::on : PdSetting::off;
             }}}},
          {"solver",
           {{"boundary",
             [](ExperimentConfig& c, const std::string& v) {
               const std::string t = trim(v);
               if (t == "bounded_modes")
                 c.boundary = analytic::BoundaryRule::bounded_modes;
               else if (t == "state_indexed")
                 c.boundary = analytic::BoundaryRule::state_indexed;
               else
                 throw DomainError("key 'boundary': expected bounded_modes or state_indexed");
             }},
            {"force_integration",
             [](ExperimentConfig& c, const std::string& v) {
               c.force_integration = parse_bool("force_integration", v);
             }},
            {"pd_refine_arrival_chain",
             [](ExperimentConfig& c, const std::string& v) {
               c.pd_refine_arrival_chain = parse_bool("pd_refine_arrival_chain", v);
             }}}},
          {"sim",
           {{"mode",
             [](ExperimentConfig& c, const std::string& v) { c.mode = flowsim::parse_mode(trim(v)); }},
            {"rebuffer_policy",
             [](ExperimentConfig& c, const std::string& v) {
               c.rebuffer_policy = flowsim::parse_policy(trim(v));
             }},
            {"target_flows",
             [](ExperimentConfig& c, const std::string& v) {
               c.target_flows = parse_long("target_flows", v);
             }},
            {"warmup_flows",
             [](ExperimentConfig& c, const std::string& v) {
               c.warmup_flows = parse_long("warmup_flows", v);
             }},
            {"replicas",
             [](ExperimentConfig& c, const std::string& v) {
               c.replicas = static_cast<int>(parse_long("replicas", v));
             }},
            {"horizon_s",
             [](ExperimentConfig& c, const std::string& v) {
               c.horizon_s = parse_double("horizon_s", v);
             }},
            {"trace", [](ExperimentConfig& c, const std::string& v) { c.trace = trim(v); }},
            {"omega_min1",
             [](ExperimentConfig& c, const std::string& v) {
               c.omega_min1 = parse_double("omega_min1", v);
             }},
            {"omega_min2",
             [](ExperimentConfig& c, const std::string& v) {
               c.omega_min2 = parse_double("omega_min2", v);
             }}}},
          {"sweep",
           {{"max_flows",
             [](ExperimentConfig& c, const std::string& v) {
               c.sweep_max_flows = parse_list<int>(v, [](const std::string& x) {
                 return static_cast<int>(parse_long("max_flows", x));
               });
             }},
            {"phi_ratio",
             [](ExperimentConfig& c, const std::string& v) {
               c.sweep_phi_ratio = parse_list<double>(
                   v, [](const std::string& x) { return parse_double("phi_ratio", x); });
             }},
            {"rho",
             [](ExperimentConfig& c, const std::string& v) {
               c.sweep_rho =
                   parse_list<double>(v, [](const std::string& x) { return parse_double("rho", x); });
             }},
            {"q_a",
             [](ExperimentConfig& c, const std::string& v) {
               c.sweep_q_a =
                   parse_list<double>(v, [](const std::string& x) { return parse_double("q_a", x); });
             }}}},
          {"compare",
           {{"tolerance",
             [](ExperimentConfig& c, const std::string& v) {
               c.tolerance = parse_double("tolerance", v);
             }}}},
          {"fit",
           {{"input", [](ExperimentConfig& c, const std::string& v) { c.fit_input = trim(v); }},
            {"doc_table", [](ExperimentConfig& c, const std::string& v) { c.doc_table_out = trim(v); }},
            {"method",
             [](ExperimentConfig& c, const std::string& v) {
               const std::string t = trim(v);
               if (t == "em")
                 c.fit_method = workload::MleMethod::em;
               else if (t == "newton")
                 c.fit_method = workload::MleMethod::newton;
               else
                 throw DomainError("key 'method': expected em or newton");
             }},
            {"cdf_points",
             [](ExperimentConfig& c, const std::string& v) {
               c.cdf_points = static_cast<int>(parse_long("cdf_points", v));
             }}}},
          {"infer",
           {{"table", [](ExperimentConfig& c, const std::string& v) { c.infer_table = trim(v); }},
            {"duration_s",
             [](ExperimentConfig& c, const std::string& v) {
               c.infer_duration = parse_double("duration_s", v);
             }},
            {"samples",
             [](ExperimentConfig& c, const std::string& v) {
               c.infer_samples = static_cast<int>(parse_long("samples", v));
             }}}},
          {"output",
           {{"path", [](ExperimentConfig& c, const std::string& v) { c.out = trim(v); }},
            {"format",
             [](ExperimentConfig& c, const std::string& v) {
               const std::string t = trim(v);
               if (t == "csv")
                 c.format = ExperimentConfig::Format::csv;
               else if (t == "json")
                 c.format = ExperimentConfig::Format::json;
               else
                 throw DomainError("key 'format': expected csv or json");
             }}}},
      };
  return s;
}

void require_file(const std::string& what, const std::string& path) {
  if (path.empty()) throw DomainError(what + " path is required");
  if (!std::filesystem::is_regular_file(path))
    throw IoError(what + " '" + path + "' does not exist");
}

std::vector<std::string> point_cells(const SweepPoint& p) {
  return {std::to_string(p.max_flows), fmt(p.phi_ratio), fmt(p.rho), fmt(p.q_a)};
}

json point_json(const SweepPoint& p) {
  return {{"max_flows", p.max_flows}, {"phi_ratio", p.phi_ratio}, {"rho", p.rho}, {"q_a", p.q_a}};
}

}  // namespace

void ExperimentConfig::validate(const std::string& command) const {
  if (sweep_max_flows.empty() || sweep_phi_ratio.empty() || sweep_rho.empty() ||
      sweep_q_a.empty())
    throw DomainError("every sweep axis needs at least one value");
  for (int k : sweep_max_flows)
    if (k < 1) throw DomainError("sweep max_flows values must be >= 1");
  for (double r : sweep_phi_ratio)
    if (!(r > 0.0) || !std::isfinite(r)) throw DomainError("sweep phi_ratio values must be > 0");
  for (double r : sweep_rho)
    if (!(r >= 0.0) || !std::isfinite(r)) throw DomainError("sweep rho values must be >= 0");
  for (double q : sweep_q_a)
    if (!(q >= 0.0) || !std::isfinite(q)) throw DomainError("sweep q_a values must be >= 0");
  if (!(capacity_bps > 0.0) || !(bitrate_bps > 0.0))
    throw DomainError("capacity_bps and bitrate_bps must be > 0");
  if (!(p1 >= 0.0 && p1 <= 1.0)) throw DomainError("p1 must lie in [0, 1]");
  if (!(mean1 > 0.0) || !(mean2 > 0.0)) throw DomainError("mean1 and mean2 must be > 0");
  if (!(lambda >= 0.0)) throw DomainError("lambda must be >= 0");
  if (target_flows < 1) throw DomainError("target_flows must be >= 1");
  if (warmup_flows < 0) throw DomainError("warmup_flows must be >= 0");
  if (replicas < 1) throw DomainError("replicas must be >= 1");
  if (!(horizon_s >= 0.0)) throw DomainError("horizon_s must be >= 0");
  if (!(tolerance >= 0.0)) throw DomainError("tolerance must be >= 0");
  if (cdf_points < 2) throw DomainError("cdf_points must be >= 2");
  if (infer_samples < 1) throw DomainError("samples must be >= 1");
  flowsim::DurationModel{omega_min1, omega_min2}.validate();

  if ((command == "simulate" || command == "compare") && !trace.empty())
    require_file("trace", trace);
  if (command == "fit") require_file("fit input", fit_input);
  if (command == "infer") {
    require_file("bucket table", infer_table);
    if (!(infer_duration > 0.0)) throw DomainError("duration_s must be > 0");
  }
}

ExperimentConfig default_config() { return {}; }

ExperimentConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(e.message(), e.line());
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    const auto sec = std::find_if(schema().begin(), schema().end(),
                                  [&](const auto& s) { return s.first == section; });
    if (sec == schema().end())
      throw DomainError("unknown config section or top-level key '" + section + "'");
    if (body.empty() && !body.data().empty())
      throw DomainError("key '" + section + "' must sit inside a section");
    for (const auto& [key, value] : body) {
      const auto it = std::find_if(sec->second.begin(), sec->second.end(),
                                   [&](const auto& k) { return k.first == key; });
      if (it == sec->second.end())
        throw DomainError("unknown key '" + key + "' in section [" + section + "]");
      it->second(cfg, value.data());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path + "'");
  return parse_config(f);
}

std::string render_config(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "[run]\n"
    << "seed = " << c.seed << "\n\n"
    << "[system]\n"
    << "capacity_bps = " << fmt(c.capacity_bps) << "\n"
    << "bitrate_bps = " << fmt(c.bitrate_bps) << "\n"
    << "p1 = " << fmt(c.p1) << "\n"
    << "mean1 = " << fmt(c.mean1) << "\n"
    << "mean2 = " << fmt(c.mean2) << "\n"
    << "lambda = " << fmt(c.lambda) << "\n"
    << "pd_mode = " << pd_name(c.pd_mode) << "\n\n"
    << "[solver]\n"
    << "boundary = " << boundary_name(c.boundary) << "\n"
    << "force_integration = " << b(c.force_integration) << "\n"
    << "pd_refine_arrival_chain = " << b(c.pd_refine_arrival_chain) << "\n\n"
    << "[sim]\n"
    << "mode = " << flowsim::mode_name(c.mode) << "\n"
    << "rebuffer_policy = " << flowsim::policy_name(c.rebuffer_policy) << "\n"
    << "target_flows = " << c.target_flows << "\n"
    << "warmup_flows = " << c.warmup_flows << "\n"
    << "replicas = " << c.replicas << "\n"
    << "horizon_s = " << fmt(c.horizon_s) << "\n"
    << "trace = " << c.trace << "\n"
    << "omega_min1 = " << fmt(c.omega_min1) << "\n"
    << "omega_min2 = " << fmt(c.omega_min2) << "\n\n"
    << "[sweep]\n"
    << "max_flows = " << join(c.sweep_max_flows) << "\n"
    << "phi_ratio = " << join(c.sweep_phi_ratio) << "\n"
    << "rho = " << join(c.sweep_rho) << "\n"
    << "q_a = " << join(c.sweep_q_a) << "\n\n"
    << "[compare]\n"
    << "tolerance = " << fmt(c.tolerance) << "\n\n"
    << "[fit]\n"
    << "input = " << c.fit_input << "\n"
    << "doc_table = " << c.doc_table_out << "\n"
    << "method = " << (c.fit_method == workload::MleMethod::em ? "em" : "newton") << "\n"
    << "cdf_points = " << c.cdf_points << "\n\n"
    << "[infer]\n"
    << "table = " << c.infer_table << "\n"
    << "duration_s = " << fmt(c.infer_duration) << "\n"
    << "samples = " << c.infer_samples << "\n\n"
    << "[output]\n"
    << "path = " << c.out << "\n"
    << "format = " << (c.format == ExperimentConfig::Format::json ? "json" : "csv") << "\n";
  return o.str();
}

std::vector<SweepPoint> expand_sweep(const ExperimentConfig& cfg) {
  std::vector<SweepPoint> pts;
  for (int k : cfg.sweep_max_flows)
    for (double r : cfg.sweep_phi_ratio)
      for (double rho : cfg.sweep_rho)
        for (double q : cfg.sweep_q_a) pts.push_back({k, r, rho, q});
  return pts;
}

bool pd_enabled(const ExperimentConfig& cfg) {
  if (cfg.pd_mode == PdSetting::automatic) return cfg.mode != flowsim::Mode::basic;
  return cfg.pd_mode == PdSetting::on;
}

markov::SystemConfig system_at(const ExperimentConfig& cfg, const SweepPoint& p) {
  markov::SystemConfig s;
  s.capacity_bps = cfg.capacity_bps;
  s.bitrate_bps = cfg.bitrate_bps;
  s.max_flows = p.max_flows;
  s.phi1 = p.phi_ratio;
  s.phi2 = 1.0;
  s.theta1 = 1.0 / cfg.mean1;
  s.theta2 = 1.0 / cfg.mean2;
  s.startup_threshold = p.q_a;
  s.pd_mode = pd_enabled(cfg);
  if (cfg.lambda > 0.0) {
    s.lambda1 = cfg.p1 * cfg.lambda;
    s.lambda2 = (1.0 - cfg.p1) * cfg.lambda;
  } else {
    s = markov::with_load(s, p.rho, cfg.p1);
  }
  return s;
}

analytic::SolverOptions solver_options(const ExperimentConfig& cfg) {
  analytic::SolverOptions o;
  o.boundary = cfg.boundary;
  o.force_integration = cfg.force_integration;
  o.pd_refine_arrival_chain = cfg.pd_refine_arrival_chain;
  return o;
}

flowsim::SimConfig sim_at(const ExperimentConfig& cfg, const SweepPoint& p, std::size_t index,
                          const std::optional<std::vector<ViewRecord>>& trace) {
  flowsim::SimConfig s;
  s.system = system_at(cfg, p);
  s.mode = cfg.mode;
  s.rebuffer_policy = cfg.rebuffer_policy;
  s.target_flows = (cfg.target_flows + cfg.replicas - 1) / cfg.replicas;
  s.warmup_flows = cfg.warmup_flows;
  s.horizon_s = cfg.horizon_s;
  s.seed = derive_seed(derive_seed(cfg.seed, "simulate"), static_cast<std::uint64_t>(index));
  s.trace = trace;
  s.durations = {cfg.omega_min1, cfg.omega_min2};
  return s;
}

std::vector<SolveRow> run_solve(const ExperimentConfig& cfg) {
  std::vector<SolveRow> rows;
  const auto opts = solver_options(cfg);
  for (const auto& p : expand_sweep(cfg)) {
    SolveRow row{p, {}, true, ""};
    const auto sys = system_at(cfg, p);
    try {
      row.report = analytic::solve_qoe(sys, opts);
      for (const auto& c : row.report.classes)
        if (!c.ok) row.ok = false;
    } catch (const NumericalError& e) {
      row.ok = false;
      row.error = e.what();
      for (int k = 0; k < 2; ++k) {
        row.report.classes[k].tagged_class = k + 1;
        row.report.classes[k].ok = false;
        row.report.classes[k].error = e.what();
        row.report.classes[k].starvation_probability = std::nan("");
        row.report.classes[k].mean_dtvt = std::nan("");
        row.report.classes[k].mean_dtvt_closed_form = std::nan("");
      }
      row.report.p_rej = std::nan("");
      row.report.startup_threshold = p.q_a;
      row.report.pd_mode = sys.pd_mode;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<SimRow> run_simulate(const ExperimentConfig& cfg) {
  std::optional<std::vector<ViewRecord>> trace;
  if (!cfg.trace.empty()) trace = read_view_records(cfg.trace);
  std::vector<SimRow> rows;
  const auto pts = expand_sweep(cfg);
  for (std::size_t k = 0; k < pts.size(); ++k)
    rows.push_back({pts[k], flowsim::run_replicas(sim_at(cfg, pts[k], k, trace), cfg.replicas)});
  return rows;
}

CsvTable solve_table(const std::vector<SolveRow>& rows) {
  CsvTable t;
  t.header = {"max_flows",      "phi_ratio", "rho",   "q_a",   "pd_mode",
              "class",          "starvation_probability", "mean_dtvt",
              "mean_dtvt_closed_form", "p_rej", "ok", "error", "warnings"};
  for (const auto& r : rows)
    for (const auto& c : r.report.classes) {
      auto cells = point_cells(r.point);
      cells.insert(cells.end(),
                   {b(r.report.pd_mode), std::to_string(c.tagged_class),
                    fmt(c.starvation_probability), fmt(c.mean_dtvt), fmt(c.mean_dtvt_closed_form),
                    fmt(r.report.p_rej), b(c.ok), c.error, join(c.diagnostics.warnings, "; ")});
      t.rows.push_back(std::move(cells));
    }
  return t;
}

CsvTable simulate_table(const std::vector<SimRow>& rows) {
  CsvTable t;
  t.header = {"max_flows", "phi_ratio", "rho", "q_a", "class", "accepted", "rejected", "starved",
              "starvation_fraction", "starvation_stderr", "mean_dtvt", "rejection_fraction"};
  for (const auto& r : rows)
    for (int k = 1; k <= 2; ++k) {
      const auto& s = r.report.of(k);
      auto cells = point_cells(r.point);
      cells.insert(cells.end(),
                   {std::to_string(k), std::to_string(s.accepted), std::to_string(s.rejected),
                    std::to_string(s.starved), fmt(s.starvation_fraction()),
                    fmt(s.starvation_stderr()), fmt(s.mean_dtvt()),
                    fmt(r.report.rejection_fraction())});
      t.rows.push_back(std::move(cells));
    }
  return t;
}

CsvTable compare_table(const ExperimentConfig& cfg, const std::vector<SolveRow>& model,
                       const std::vector<SimRow>& sim) {
  if (model.size() != sim.size())
    throw DomainError("model and simulation sweeps differ in length");
  CsvTable t;
  t.header = {"max_flows", "phi_ratio", "rho", "q_a", "class", "metric",
              "model",     "sim",       "gap", "tolerance", "flag"};
  for (std::size_t n = 0; n < model.size(); ++n) {
    const auto& m = model[n];
    const auto& s = sim[n];
    for (int k = 1; k <= 2; ++k) {
      const auto& mc = m.report.classes[k - 1];
      const auto& sc = s.report.of(k);
      const std::pair<const char*, std::pair<double, double>> metrics[] = {
          {"starvation_probability", {mc.starvation_probability, sc.starvation_fraction()}},
          {"mean_dtvt", {mc.mean_dtvt, sc.mean_dtvt()}}};
      for (const auto& [name, vals] : metrics) {
        const double gap = std::abs(vals.first - vals.second);
        std::string flag = gap <= cfg.tolerance ? "pass" : "fail";
        if (flag == "fail" && cfg.mode != flowsim::Mode::basic && k == 2 && m.point.q_a > 80.0 &&
            std::string(name) == "starvation_probability" && gap <= 0.10)
          flag = "expected";
        if (!std::isfinite(gap)) flag = "fail";
        auto cells = point_cells(m.point);
        cells.insert(cells.end(), {std::to_string(k), name, fmt(vals.first), fmt(vals.second),
                                   fmt(gap), fmt(cfg.tolerance), flag});
        t.rows.push_back(std::move(cells));
      }
    }
  }
  return t;
}

json solve_json(const std::vector<SolveRow>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"point", point_json(r.point)},
                   {"ok", r.ok},
                   {"error", r.error},
                   {"report", report::to_json(r.report)}});
  return out;
}

json simulate_json(const std::vector<SimRow>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"point", point_json(r.point)}, {"report", report::to_json(r.report)}});
  return out;
}

FitOutcome run_fit(const ExperimentConfig& cfg) {
  const auto records = read_view_records(cfg.fit_input);
  if (records.empty()) throw ParseError("trace '" + cfg.fit_input + "' holds no records");
  workload::FitOptions opts;
  opts.method = cfg.fit_method;
  opts.cdf_points = cfg.cdf_points;
  FitOutcome out;
  out.records = static_cast<long>(records.size());
  const auto times = viewing_times(records);
  out.selection = workload::compare_fits(times, opts);
  if (!cfg.doc_table_out.empty()) out.doc = inference::fit_bucket_table(records);
  return out;
}

CsvTable fit_table(const workload::ModelSelection& sel) {
  CsvTable t;
  t.header = {"family", "dof",    "p1",     "theta1",      "theta2", "theta",
              "xi",     "sigma",  "loglik", "adjusted_r2", "rank",   "selected"};
  for (std::size_t rank = 0; rank < sel.ranking.size(); ++rank) {
    const auto f = sel.ranking[rank];
    const auto& r = sel.report(f);
    std::vector<std::string> cells(t.header.size());
    cells[0] = workload::family_name(f);
    cells[1] = std::to_string(workload::model_dof(f));
    if (const auto* h = std::get_if<workload::HyperExpParams>(&r.params)) {
      cells[2] = fmt(h->p1);
      cells[3] = fmt(h->theta1);
      cells[4] = fmt(h->theta2);
    } else if (const auto* e = std::get_if<workload::ExpParams>(&r.params)) {
      cells[5] = fmt(e->theta);
    } else if (const auto* g = std::get_if<workload::GenParetoParams>(&r.params)) {
      cells[6] = fmt(g->xi);
      cells[7] = fmt(g->sigma);
    }
    cells[8] = fmt(r.loglik);
    cells[9] = fmt(r.adjusted_r2);
    cells[10] = std::to_string(rank + 1);
    cells[11] = b(f == sel.selected);
    t.rows.push_back(std::move(cells));
  }
  return t;
}

json fit_json(const FitOutcome& fit) {
  json out = report::to_json(fit.selection);
  out["records"] = fit.records;
  if (fit.doc) {
    json buckets = json::array();
    for (const auto& f : fit.doc->fits)
      buckets.push_back({{"lo", f.model.bucket().lo},
                         {"hi", fmt(f.model.bucket().hi)},
                         {"records", f.records},
                         {"clamped", f.clamped},
                         {"rms_residual", f.rms_residual},
                         {"epsilon", f.model.epsilon()},
                         {"c", f.model.c()},
                         {"a", f.model.a()},
                         {"b", f.model.b()}});
    out["doc_buckets"] = buckets;
  }
  return out;
}

std::vector<InferSample> run_infer(const ExperimentConfig& cfg) {
  const auto table = inference::read_bucket_table(cfg.infer_table);
  const auto params = workload::HyperExpParams::from_means(cfg.p1, cfg.mean1, cfg.mean2);
  Rng rng(derive_seed(cfg.seed, "infer"));
  std::vector<InferSample> out;
  for (int s = 0; s < cfg.infer_samples; ++s) {
    const double vt = inference::sample_viewing_time_from_duration(cfg.infer_duration, table, rng);
    out.push_back({cfg.infer_duration, vt, inference::class_posterior(vt, params)});
  }
  return out;
}

CsvTable infer_table(const std::vector<InferSample>& samples) {
  CsvTable t;
  t.header = {"sample", "duration_s", "viewing_time_s", "gamma1"};
  for (std::size_t k = 0; k < samples.size(); ++k)
    t.rows.push_back({std::to_string(k), fmt(samples[k].duration), fmt(samples[k].viewing_time),
                      fmt(samples[k].gamma)});
  return t;
}

}  // namespace vqoe::experiment
