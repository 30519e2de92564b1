// sfw: command-line harness for the stochastic Frank-Wolfe / steepest-descent trainer.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sfw/config.hpp"
#include "sfw/experiment.hpp"
#include "sfw/io.hpp"

namespace {

constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

// One --<key> flag per schema key; values override the config file.
struct KeyFlags {
  std::string config_path;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_path, "key = value config file");
    for (const sfw::KeyDef& def : sfw::config_schema()) {
      auto* opt = app->add_option("--" + def.name, overrides[def.name], def.help + " [default: " + def.default_value + "]");
      opt->type_name(def.type == sfw::KeyType::Choice ? "CHOICE" : "VALUE");
    }
  }

  sfw::ExperimentConfig resolve(CLI::App* app) const {
    sfw::KeyValueConfig kv = config_path.empty() ? sfw::KeyValueConfig() : sfw::KeyValueConfig::load(config_path);
    for (const auto& [key, value] : overrides)
      if (app->count("--" + key) > 0) kv.set(key, value);
    return sfw::ExperimentConfig::from(kv);
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw sfw::FormatError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw sfw::FormatError("cannot open " + path + " for writing");
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic Frank-Wolfe / steepest-descent training with in-face directions"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "train a model and write trace, report, and checkpoint");
  KeyFlags train_flags;
  train_flags.attach(train);

  auto* grid = app.add_subcommand("grid", "cross-validate l_nabla and per-layer deltas");
  KeyFlags grid_flags;
  grid_flags.attach(grid);

  auto* synth = app.add_subcommand("synth", "generate a synthetic sparse-network dataset");
  KeyFlags synth_flags;
  synth_flags.attach(synth);
  std::string synth_prefix = "synth";
  std::string synth_format = "csv";
  synth->add_option("--out", synth_prefix, "output file prefix");
  synth->add_option("--format", synth_format, "csv or bin")->check(CLI::IsMember({"csv", "bin"}));

  auto* thr = app.add_subcommand("threshold-eval", "evaluate a checkpoint after hard thresholding");
  std::string ckpt_path, data_path, thr_out = "-";
  std::vector<double> thetas{100, 50, 25, 10, 5};
  thr->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  thr->add_option("--data", data_path, "dataset file (csv or bin)")->required();
  thr->add_option("--thetas", thetas, "percentages to keep")->delimiter(',');
  thr->add_option("--out", thr_out, "output CSV ('-' for stdout)");

  auto* gap = app.add_subcommand("gap-trace", "smooth the gap column of a trace CSV");
  std::string trace_in, gap_out = "-";
  long long window = 50;
  gap->add_option("--trace", trace_in, "trace CSV")->required();
  gap->add_option("--window", window, "trailing window length");
  gap->add_option("--out", gap_out, "output CSV ('-' for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    if (train->parsed()) {
      const sfw::ExperimentConfig cfg = train_flags.resolve(train);
      const sfw::TrainOutcome out = sfw::cmd_train(cfg);
      std::cout << out.report;
      std::fprintf(stderr, "wall_clock_seconds = %.3f\n", out.wall_seconds);
    } else if (grid->parsed()) {
      const sfw::ExperimentConfig cfg = grid_flags.resolve(grid);
      const sfw::GridOutcome out = sfw::cmd_grid(cfg);
      std::cout << out.csv;
      const sfw::GridPoint& best = out.points[out.best];
      std::cout << "best: l_nabla = " << best.l_nabla << ", deltas =";
      for (double d : best.deltas) std::cout << ' ' << d;
      std::cout << ", val_loss = " << best.val_loss << '\n';
    } else if (synth->parsed()) {
      const sfw::ExperimentConfig cfg = synth_flags.resolve(synth);
      sfw::cmd_synth(cfg.synth, synth_prefix, synth_format == "bin");
    } else if (thr->parsed()) {
      for (double t : thetas)
        if (!(t > 0 && t <= 100)) throw sfw::ConfigError("thetas must lie in (0, 100]");
      const sfw::Checkpoint ck = sfw::read_checkpoint(ckpt_path);
      const sfw::Dataset data = sfw::read_dataset(data_path);
      write_file(thr_out, sfw::threshold_eval_csv(ck, data, thetas));
    } else if (gap->parsed()) {
      if (window < 1) throw sfw::ConfigError("--window must be >= 1");
      write_file(gap_out, sfw::gap_trace_csv(read_file(trace_in), window));
    }
  } catch (const sfw::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}
