#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "sfw/experiment.hpp"

using namespace sfw;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "sfw_experiment_tests";
  fs::create_directories(dir);
  return dir / name;
}

KeyValueConfig small_net() {
  KeyValueConfig kv;
  kv.set("layer_sizes", "8,6,4,1");
  kv.set("deltas", "5,5");
  kv.set("synth_m", "3");
  kv.set("synth_train", "300");
  kv.set("synth_val", "100");
  kv.set("synth_test", "200");
  kv.set("batch_size", "20");
  kv.set("iterations", "60");
  kv.set("l_nabla", "4");
  kv.set("smoothing_window", "10");
  return kv;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("trailing smoothing examples") {
  const std::vector<double> two{0.0, 2.0};
  CHECK(smooth_trailing(two, 2) == std::vector<double>{0.0, 1.0});
  const std::vector<double> s{3.0, 1.0, 4.0, 1.0, 5.0};
  CHECK(smooth_trailing(s, 1) == s);
  const std::vector<double> flat(7, 2.5);
  CHECK(smooth_trailing(flat, 3) == flat);
  const std::vector<double> w3 = smooth_trailing(s, 3);
  CHECK(w3[1] == 2.0);
  CHECK(w3[4] == doctest::Approx(10.0 / 3.0));
  CHECK_THROWS_AS(smooth_trailing(s, 0), InputError);
}

TEST_CASE("trace header") {
  const std::vector<Index> layers{0, 1};
  CHECK(trace_header(2, layers) ==
        "k,objective_estimate,gap_hat,gap_hat_smoothed,alpha_bar_0,alpha_bar_1,alpha_sd,nnz_layer_0,nnz_layer_1\n");
  CHECK(trace_header(0, {}) == "k,objective_estimate,gap_hat,gap_hat_smoothed,alpha_sd\n");
}

TEST_CASE("gap trace smoothing of a csv") {
  const std::string csv = "k,objective_estimate,gap_hat\n0,1,0\n1,1,2\n2,1,4\n";
  CHECK(gap_trace_csv(csv, 2) == "k,gap_hat,gap_hat_smoothed\n0,0,0\n1,2,1\n2,4,3\n");
  CHECK(gap_trace_csv(csv, 1) == "k,gap_hat,gap_hat_smoothed\n0,0,0\n1,2,2\n2,4,4\n");
  CHECK_THROWS_AS(gap_trace_csv("k,other\n0,1\n", 2), FormatError);
  CHECK_THROWS_AS(gap_trace_csv("k,gap_hat\n0\n", 2), FormatError);
  CHECK_THROWS_AS(gap_trace_csv("k,gap_hat\n0,x\n", 2), FormatError);
}

TEST_CASE("training is reproducible from the echoed config") {
  const ExperimentConfig cfg = ExperimentConfig::from(small_net());
  const ExperimentData data = load_data(cfg);
  const TrainOutcome a = train(cfg, data);
  const TrainOutcome b = train(ExperimentConfig::from(KeyValueConfig::parse(cfg.source.echo())), data);
  CHECK(a.report == b.report);
  CHECK(a.trace_csv == b.trace_csv);
  CHECK(a.report.find("iterate_digest = ") != std::string::npos);
  CHECK(KeyValueConfig::parse(a.report).echo() == cfg.source.echo());
  CHECK(a.trace_csv.rfind(trace_header(10, cfg.net.fw_layers), 0) == 0);
  CHECK(a.metrics.at("effective_iterations") == 60);
  CHECK(a.metrics.at("samples_consumed") == 2 * 60 * 20);
}

TEST_CASE("training keeps every node inside its ball") {
  KeyValueConfig kv = small_net();
  kv.set("l_nabla", "0.25");
  const ExperimentConfig cfg = ExperimentConfig::from(kv);
  const TrainOutcome o = train(cfg, load_data(cfg));
  const Checkpoint& ck = *o.checkpoint;
  for (std::size_t i = 0; i < ck.spec.fw_layers.size(); ++i) {
    const auto& w = ck.params.weights[static_cast<std::size_t>(ck.spec.fw_layers[i])];
    for (Index r = 0; r < w.rows(); ++r) CHECK(w.row(r).lpNorm<1>() <= ck.spec.delta_per_layer[i] + 1e-10);
  }
}

TEST_CASE("methods share the gradient budget") {
  KeyValueConfig kv = small_net();
  const ExperimentConfig base = ExperimentConfig::from(kv);
  const ExperimentData data = load_data(base);
  const double calls = train(base, data).metrics.at("samples_consumed");
  for (const char* m : {"sfw", "sgd"}) {
    kv.set("method", m);
    const TrainOutcome o = train(ExperimentConfig::from(kv), data);
    CHECK(o.metrics.at("effective_iterations") == 120);
    CHECK(o.metrics.at("samples_consumed") == calls);
  }
}

TEST_CASE("sgd trains every layer unconstrained") {
  KeyValueConfig kv = small_net();
  kv.set("method", "sgd");
  kv.set("iterations", "5");
  const ExperimentConfig cfg = ExperimentConfig::from(kv);
  const TrainOutcome o = train(cfg, load_data(cfg));
  CHECK(o.trace_csv.rfind(trace_header(0, cfg.net.fw_layers), 0) == 0);
  CHECK(o.metrics.at("nnz_layer_0") > 90.0);
}

TEST_CASE("threshold evaluation") {
  const ExperimentConfig cfg = ExperimentConfig::from(small_net());
  const ExperimentData data = load_data(cfg);
  const TrainOutcome o = train(cfg, data);
  const std::vector<double> thetas{100, 50, 10};
  const std::string csv = threshold_eval_csv(*o.checkpoint, *data.test, thetas);
  std::istringstream in(csv);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == "theta,loss,accuracy");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", evaluate(o.checkpoint->spec, o.checkpoint->params, *data.test).loss);
  CHECK(rows[1] == std::string("100,") + buf + ",");
  CHECK(rows[2].rfind("50,", 0) == 0);

  const MLPParams cut = hard_threshold(o.checkpoint->params, o.checkpoint->spec.fw_layers, 10.0);
  CHECK(cut.weights[2] == o.checkpoint->params.weights[2]);

  Dataset wrong;
  wrong.features.resize(3, 2);
  wrong.targets.resize(1, 2);
  CHECK_THROWS_AS(threshold_eval_csv(*o.checkpoint, wrong, thetas), InputError);
}

TEST_CASE("synth writes datasets and a valid teacher") {
  SynthSpec s;
  s.layer_sizes = {10, 8, 6, 1};
  s.m = 4;
  s.n_train = 50;
  s.n_val = 20;
  s.n_test = 30;
  s.seed = 2;
  const std::string prefix = scratch("syn").string();
  for (bool binary : {false, true}) {
    cmd_synth(s, prefix, binary);
    const std::string ext = binary ? ".bin" : ".csv";
    CHECK(read_dataset(prefix + "_train" + ext).size() == 50);
    CHECK(read_dataset(prefix + "_val" + ext).size() == 20);
    CHECK(read_dataset(prefix + "_test" + ext).size() == 30);
    const Checkpoint teacher = read_checkpoint(prefix + "_true.ckpt");
    CHECK_NOTHROW(validate_teacher(teacher, 4));
    CHECK_THROWS_AS(validate_teacher(teacher, 5), FormatError);
  }
  const std::string first = slurp(prefix + "_train.csv");
  cmd_synth(s, prefix, false);
  CHECK(slurp(prefix + "_train.csv") == first);
}

TEST_CASE("quadratic training reports the exact gap") {
  KeyValueConfig kv;
  kv.set("problem", "quadratic");
  kv.set("quad_p", "6");
  kv.set("quad_q", "3");
  kv.set("batch_size", "1");
  kv.set("iterations", "500");
  const ExperimentConfig cfg = ExperimentConfig::from(kv);
  const TrainOutcome o = train(cfg, {});
  CHECK_FALSE(o.checkpoint.has_value());
  CHECK(o.metrics.at("final_gap") < 0.05);
  CHECK(o.metrics.at("final_objective") >= o.metrics.at("f_star"));
  CHECK(train(cfg, {}).report == o.report);
}

TEST_CASE("grid search enumerates and selects by validation loss") {
  KeyValueConfig kv = small_net();
  kv.set("iterations", "20");
  kv.set("grid_l_nabla", "1,16");
  kv.set("grid_delta", "1,5");
  kv.set("grid_threads", "3");
  kv.set("grid_path", scratch("grid.csv").string());
  const ExperimentConfig cfg = ExperimentConfig::from(kv);
  const GridOutcome g = cmd_grid(cfg);
  REQUIRE(g.points.size() == 2 * 2 * 2);
  for (const GridPoint& p : g.points) CHECK(g.points[g.best].val_loss <= p.val_loss);
  CHECK(g.points[1].deltas == std::vector<double>{5, 1});
  kv.set("grid_threads", "1");
  const GridOutcome serial = cmd_grid(ExperimentConfig::from(kv));
  CHECK(serial.csv == g.csv);
  CHECK(slurp(scratch("grid.csv").string()) == g.csv);
  CHECK(g.csv.rfind("l_nabla,delta_0,delta_1,seed,val_loss,test_loss,best\n", 0) == 0);
}
