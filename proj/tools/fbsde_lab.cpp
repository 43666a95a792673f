// Command-line front end for the experiment registry: run one experiment from
// a JSON configuration, sweep a convergence study, or list what is available.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fbsde/experiments.hpp"

namespace {

fbsde::ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fbsde::ConfigError("cannot open config file '" + path + "'");
  fbsde::json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw fbsde::SchemaError(std::string("config is not valid JSON: ") + e.what());
  }
  return fbsde::parse_config(doc);
}

void print_report(const fbsde::RunReport& report) {
  for (const auto& row : report.rows) {
    std::printf("%-28s %-32s measured=%-14.6g tol=%-12.6g se=%-10.4g %s\n",
                report.experiment.c_str(), row.name.c_str(), row.measured, row.tolerance,
                row.std_error, row.pass ? "pass" : "FAIL");
  }
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> values;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) values.push_back(std::stod(item));
  return values;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fbsde-lab: forward-backward SDE control experiments"};
  app.require_subcommand(1);

  std::string config_path, dump_paths_file;
  auto* run = app.add_subcommand("run", "run one experiment from a JSON config");
  run->add_option("config", config_path, "path to the JSON configuration")->required();
  run->add_option("--dump-paths", dump_paths_file,
                  "also simulate the configured problem and write its paths as CSV");

  std::string study_config, axis = "N", values_csv, row_name;
  auto* study = app.add_subcommand("study", "rerun an experiment along one axis");
  study->add_option("config", study_config, "path to the JSON configuration")->required();
  study->add_option("--axis", axis, "axis to sweep: N, M, or degree");
  study->add_option("--values", values_csv, "comma-separated ascending axis values")->required();
  study->add_option("--row", row_name, "criterion row to track (default: first)");

  auto* list = app.add_subcommand("list-experiments", "print the registered experiment names");

  CLI11_PARSE(app, argc, argv);

  try {
    if (list->parsed()) {
      for (const auto& name : fbsde::experiment_names()) std::cout << name << "\n";
      return 0;
    }
    if (run->parsed()) {
      const fbsde::ExperimentConfig config = load_config(config_path);
      const fbsde::RunReport report = fbsde::run_experiment(config);
      const std::string csv = fbsde::write_report(report);
      print_report(report);
      std::cout << "report: " << csv << "\n";
      if (!dump_paths_file.empty())
        std::cout << "paths: " << fbsde::dump_experiment_paths(config, dump_paths_file) << "\n";
      return report.all_pass() ? 0 : 1;
    }
    if (study->parsed()) {
      const fbsde::ExperimentConfig config = load_config(study_config);
      const fbsde::StudyTable table =
          fbsde::convergence_study(config, axis, parse_values(values_csv), row_name);
      for (const auto& row : table.rows)
        std::printf("%s=%-10g error=%-14.6g se=%-10.4g\n", table.axis.c_str(), row.value,
                    row.error, row.std_error);
      std::printf("log-log slope: %.4f\n", table.slope);
      std::cout << "study: " << fbsde::write_study(table, config.output_dir) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
