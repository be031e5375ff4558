#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fabg/episode_io.hpp"
#include "fabg/executor.hpp"
#include "fabg/experiment.hpp"
#include "fabg/metrics.hpp"
#include "fabg/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitCellFailure = 2;

int cmd_run(const std::string& config_path, const std::string& out, std::optional<std::uint64_t> seed,
            int jobs) {
  fabg::ExperimentConfig config;
  try {
    config = fabg::load_experiment_config(config_path);
  } catch (const fabg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (seed) config.seed = *seed;
  std::string dir = out;
  if (dir.empty()) {
    if (!config.output_dir) {
      std::cerr << "config error: no --out given and $.output_dir unset\n";
      return kExitConfig;
    }
    dir = *config.output_dir;
  }
  fabg::ExperimentResult result;
  try {
    result = fabg::run_experiment(config, dir, {jobs});
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  std::cout << "cells: " << result.rows.size() << ", failed: " << result.failures.size() << "\n";
  std::cout << fabg::format_comparisons(result.comparisons);
  for (const auto& f : result.failures) std::cerr << "cell " << f.cell << " failed: " << f.error << "\n";
  std::cout << "outputs in " << dir << "\n";
  return result.failed() ? kExitCellFailure : kExitOk;
}

int cmd_compare(const std::string& summary, bool as_json) {
  try {
    const auto groups = fabg::compare_strategies(fabg::read_summary_csv(summary));
    if (as_json) {
      nlohmann::json j = nlohmann::json::array();
      for (const auto& g : groups) j.push_back(fabg::to_json(g));
      std::cout << j.dump(2) << "\n";
    } else {
      std::cout << fabg::format_comparisons(groups);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}

int cmd_gen(const std::string& spec_path, const std::string& out) {
  try {
    std::ifstream f(spec_path);
    if (!f) throw fabg::ConfigError("$", "cannot open " + spec_path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
      throw fabg::ConfigError("$", std::string("invalid JSON: ") + e.what());
    }
    fabg::ScenarioSpec spec;
    fabg::CorpusOptions corpus;
    corpus.jitter_sigma = 0.0;
    if (j.is_object() && j.contains("scenario")) {
      fabg::json_util::check_keys(j, "$", {"scenario", "corpus"});
      spec = fabg::scenario_from_json(j["scenario"], "$.scenario");
      if (j.contains("corpus")) corpus = fabg::corpus_options_from_json(j["corpus"], "$.corpus");
    } else {
      spec = fabg::scenario_from_json(j, "$");
    }
    const fabg::Episode ep = fabg::build_corpus({spec}, corpus).front();
    const std::size_t bytes = fabg::write_episode(ep, out);
    std::cout << "wrote " << ep.size() << " frames, " << bytes << " bytes to " << out << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}

// Episode files are recognised by their magic, anything else is read as a
// trace CSV.
std::vector<fabg::ActionFrame> load_frames(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::string(magic, 4) == "FABG") return fabg::read_episode(path).frames;
  return fabg::read_trace_csv(path).commanded;
}

int cmd_dtw(const std::string& a, const std::string& b, std::optional<std::size_t> dim) {
  try {
    std::cout << fabg::format_number(fabg::dtw(load_frames(a), load_frames(b), dim)) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fabg: latency-compensation simulator for chunked imitation policies"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
  auto* run = app.add_subcommand("run", "run an experiment matrix");
  run->add_option("--config", config_path, "experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "output directory (default: $.output_dir)");
  run->add_option("--seed", seed, "override the global seed");
  run->add_option("--jobs", jobs, "parallel cells (0 = all cores)")->check(CLI::NonNegativeNumber);

  std::string summary;
  bool as_json = false;
  auto* compare = app.add_subcommand("compare", "strategy orderings from a summary.csv");
  compare->add_option("--summary", summary, "summary.csv")->required()->check(CLI::ExistingFile);
  compare->add_flag("--json", as_json, "print JSON");

  std::string spec_path, episode_out;
  auto* gen = app.add_subcommand("gen", "generate one episode file from a scenario spec");
  gen->add_option("--spec", spec_path, "scenario JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", episode_out, "episode file")->required();

  std::string trace_a, trace_b;
  std::optional<std::size_t> dim;
  auto* dtw = app.add_subcommand("dtw", "DTW distance between two traces (CSV) or episodes (.fabg)");
  dtw->add_option("--a", trace_a, "trace CSV or episode file")->required()->check(CLI::ExistingFile);
  dtw->add_option("--b", trace_b, "trace CSV or episode file")->required()->check(CLI::ExistingFile);
  dtw->add_option("--dim", dim, "restrict to one dimension (default: all 61)")->check(CLI::Range(0, 60));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (*run) return cmd_run(config_path, out_dir, seed, jobs);
  if (*compare) return cmd_compare(summary, as_json);
  if (*gen) return cmd_gen(spec_path, episode_out);
  if (*dtw) return cmd_dtw(trace_a, trace_b, dim);
  return kExitConfig;
}
