// Command-line front end: simulate, curve, detect, sweep, calibrate.
//
// Every failure exits nonzero and prints {"error": <kind>, "message": ...}
// on stderr.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "condpar/commands.hpp"
#include "condpar/error.hpp"

namespace {

using condpar::ExperimentConfig;

int report(std::string_view kind, const std::string& message, int code) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
  return code;
}

// A --config value is a JSON file, or the bare name of a shipped preset.
ExperimentConfig resolve_config(const std::string& arg) {
  if (!std::filesystem::exists(arg)) {
    for (const auto& name : condpar::preset_names()) {
      if (arg == name) return condpar::preset(name);
    }
  }
  return condpar::load_config(arg);
}

void write_to(const std::string& path, const std::function<void(std::ostream&)>& body) {
  if (path.empty() || path == "-") {
    body(std::cout);
    return;
  }
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw condpar::IoError(path, "cannot open for writing");
  body(out);
  out.flush();
  if (!out) throw condpar::IoError(path, "write failed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid data/pipeline parallelism simulator for guided diffusion sampling"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::string series;
  std::string k_list;

  auto* simulate = app.add_subcommand("simulate", "run the configured plan, write metrics and traces");
  simulate->add_option("--config", config, "config JSON or preset name")->required();
  simulate->add_option("--out", out, "output directory (defaults to the config's output_dir)");

  auto* curve = app.add_subcommand("curve", "dump the discrepancy curve as CSV");
  curve->add_option("--config", config, "config JSON or preset name")->required();
  curve->add_option("--out", out, "CSV path, '-' for stdout")->required();

  auto* detect = app.add_subcommand("detect", "replay switch detection over a (t, M_t) CSV");
  detect->add_option("--series", series, "CSV with t and M_t columns")->required();
  detect->add_option("--config", config, "config JSON or preset name")->required();

  auto* sweep = app.add_subcommand("sweep", "latency and fidelity across parallel intervals k");
  sweep->add_option("--config", config, "config JSON or preset name")->required();
  sweep->add_option("--k", k_list, "comma-separated k values")->required();
  sweep->add_option("--out", out, "CSV path, '-' for stdout");

  auto* calibrate = app.add_subcommand("calibrate", "derive tau_cap from the curve minimum");
  calibrate->add_option("--config", config, "config JSON or preset name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("usage", e.what(), 2);
  }

  try {
    const ExperimentConfig cfg = resolve_config(config);
    if (*simulate) {
      const auto result =
          condpar::cmd_simulate(cfg, std::filesystem::path(out.empty() ? cfg.output_dir : out));
      std::cout << condpar::to_json(result.metrics).dump(2) << '\n';
    } else if (*curve) {
      const auto rows = condpar::compute_curve(cfg);
      write_to(out, [&](std::ostream& os) { condpar::write_curve_csv(os, rows); });
    } else if (*detect) {
      std::cout << condpar::cmd_detect(series, cfg).dump(2) << '\n';
    } else if (*calibrate) {
      std::cout << condpar::cmd_calibrate(cfg).dump(2) << '\n';
    } else if (*sweep) {
      const auto ks = condpar::parse_k_list(k_list);
      const auto rows = condpar::run_sweep(cfg, ks);
      for (const auto& r : rows) {
        if (!r.feasible) {
          std::cerr << nlohmann::json{{"warning", "infeasible_k"}, {"k", r.k}}.dump() << '\n';
        }
      }
      write_to(out, [&](std::ostream& os) { condpar::write_sweep_csv(os, rows); });
    }
  } catch (const condpar::Error& e) {
    return report(condpar::to_string(e.kind()), e.what(), 1);
  } catch (const std::filesystem::filesystem_error& e) {
    return report("io", e.what(), 1);
  } catch (const std::exception& e) {
    return report("internal", e.what(), 1);
  }
  return 0;
}
