// vqoe: fit | solve | simulate | compare | infer, driven by an INI config.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vqoe/error.hpp"
#include "vqoe/experiment.hpp"
#include "vqoe/inference.hpp"
#include "vqoe/report.hpp"

namespace ex = vqoe::experiment;
namespace rp = vqoe::report;

namespace {

int exit_code(vqoe::ErrorKind k) {
  switch (k) {
    case vqoe::ErrorKind::validation: return 1;
    case vqoe::ErrorKind::numerical: return 2;
    case vqoe::ErrorKind::io: return 3;
  }
  return 2;
}

class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty()) return;
    file_.open(path, std::ios::binary);
    if (!file_) throw vqoe::IoError("cannot open '" + path + "' for writing");
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }
  void finish() {
    stream().flush();
    if (!stream()) throw vqoe::IoError("write failed");
  }

 private:
  std::ofstream file_;
};

void emit(const ex::ExperimentConfig& cfg, const rp::CsvTable& table, const rp::json& doc) {
  Output out(cfg.out);
  if (cfg.format == ex::ExperimentConfig::Format::json)
    out.stream() << doc.dump(2) << '\n';
  else
    rp::write_csv(out.stream(), table);
  out.finish();
}

rp::json table_json(const rp::CsvTable& t) {
  rp::json rows = rp::json::array();
  for (const auto& r : t.rows) {
    rp::json row = rp::json::object();
    for (std::size_t k = 0; k < t.header.size(); ++k) row[t.header[k]] = r[k];
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow-level video QoE: workload fitting, analytic starvation model, simulator"};
  app.require_subcommand(0, 1);
  app.fallthrough();

  std::string config_path, out_path, input_path, doc_table, table_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> replicas;
  std::optional<double> duration;
  bool print_config = false;

  app.add_option("--config", config_path, "INI experiment config");
  app.add_option("--out", out_path, "Output file (default: stdout)");
  app.add_option("--seed", seed, "Root seed, overrides [run] seed");
  app.add_option("--replicas", replicas, "Simulation replicas, overrides [sim] replicas");
  app.add_flag("--print-config", print_config, "Print the effective config and exit");

  auto* fit = app.add_subcommand("fit", "Fit hyper-exponential, GP and exponential laws to a trace");
  fit->add_option("input", input_path, "Trace CSV, overrides [fit] input");
  fit->add_option("--doc-table", doc_table, "Also fit and write a DoC bucket table");
  app.add_subcommand("solve", "Analytic starvation probability and DT/VT over the sweep");
  app.add_subcommand("simulate", "Fluid simulation over the sweep");
  app.add_subcommand("compare", "Analytic vs simulated, with absolute gaps");
  auto* infer = app.add_subcommand("infer", "Class posterior and sampled viewing time for a duration");
  infer->add_option("--duration", duration, "Video duration in seconds");
  infer->add_option("--table", table_path, "DoC bucket table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    auto cfg = config_path.empty() ? ex::default_config() : ex::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (replicas) cfg.replicas = *replicas;
    if (!out_path.empty()) cfg.out = out_path;
    if (!input_path.empty()) cfg.fit_input = input_path;
    if (!doc_table.empty()) cfg.doc_table_out = doc_table;
    if (!table_path.empty()) cfg.infer_table = table_path;
    if (duration) cfg.infer_duration = *duration;

    if (print_config) {
      std::cout << ex::render_config(cfg);
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << app.help();
      return 1;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();
    cfg.validate(cmd);

    if (cmd == "fit") {
      const auto outcome = ex::run_fit(cfg);
      if (outcome.doc) vqoe::inference::write_bucket_table(cfg.doc_table_out, outcome.doc->table);
      emit(cfg, ex::fit_table(outcome.selection), ex::fit_json(outcome));
      return 0;
    }
    if (cmd == "solve") {
      const auto rows = ex::run_solve(cfg);
      emit(cfg, ex::solve_table(rows), ex::solve_json(rows));
      for (const auto& r : rows)
        if (!r.ok) return 2;
      return 0;
    }
    if (cmd == "simulate") {
      const auto rows = ex::run_simulate(cfg);
      emit(cfg, ex::simulate_table(rows), ex::simulate_json(rows));
      return 0;
    }
    if (cmd == "compare") {
      const auto model = ex::run_solve(cfg);
      const auto sim = ex::run_simulate(cfg);
      const auto table = ex::compare_table(cfg, model, sim);
      emit(cfg, table, table_json(table));
      for (const auto& r : model)
        if (!r.ok) return 2;
      return 0;
    }
    if (cmd == "infer") {
      const auto table = ex::infer_table(ex::run_infer(cfg));
      emit(cfg, table, table_json(table));
      return 0;
    }
    return 1;
  } catch (const vqoe::Error& e) {
    std::cerr << "vqoe: error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "vqoe: error: " << e.what() << '\n';
    return 2;
  }
}
