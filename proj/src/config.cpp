#include "sfw/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace sfw {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

void check_value(const KeyDef& def, const std::string& v) {
  auto bad = [&](const char* what) {
    throw ConfigError("config key '" + def.name + "': " + what + ", got '" + v + "'");
  };
  switch (def.type) {
    case KeyType::Int: {
      std::int64_t x;
      if (!parse_number(v, x)) bad("expected an integer");
      break;
    }
    case KeyType::UInt64: {
      std::uint64_t x;
      if (!parse_number(v, x)) bad("expected an unsigned integer");
      break;
    }
    case KeyType::Real: {
      double x;
      if (!parse_number(v, x) || !std::isfinite(x)) bad("expected a finite number");
      break;
    }
    case KeyType::Bool:
      if (v != "true" && v != "false") bad("expected true or false");
      break;
    case KeyType::Text:
      break;
    case KeyType::Choice:
      if (std::find(def.choices.begin(), def.choices.end(), v) == def.choices.end()) bad("not an allowed choice");
      break;
    case KeyType::IntList:
      for (const auto& item : split_list(v)) {
        std::int64_t x;
        if (!parse_number(item, x)) bad("expected a comma-separated integer list");
      }
      break;
    case KeyType::RealList:
      for (const auto& item : split_list(v)) {
        double x;
        if (!parse_number(item, x) || !std::isfinite(x)) bad("expected a comma-separated number list");
      }
      break;
  }
}

}  // namespace

const std::vector<KeyDef>& config_schema() {
  static const std::vector<KeyDef> schema = {
      {"problem", KeyType::Choice, "synthetic-net", {"quadratic", "synthetic-net", "dataset"}, "problem source"},
      {"method", KeyType::Choice, "sfw-if", {"sfw", "sfw-if", "sgd"}, "training method"},
      {"seed", KeyType::UInt64, "1", {}, "root random seed"},
      {"l_nabla", KeyType::Real, "1", {}, "smoothness constant L"},
      {"c_bar_scale", KeyType::Real, "1", {}, "C_i = c_bar_scale * 2 L diam(S_i)^2"},
      {"batch_schedule", KeyType::Choice, "constant", {"constant", "linear-in-k", "linear-in-iter"}, "b_k rule"},
      {"batch_size", KeyType::Int, "250", {}, "constant batch size"},
      {"norm_x", KeyType::Choice, "l2", {"l1", "l2"}, "block norm"},
      {"norm_y", KeyType::Choice, "l2", {"l1", "l2"}, "norm for the steepest-descent step"},
      {"iterations", KeyType::Int, "1000", {}, "iteration budget of sfw-if; sfw and sgd run twice as many"},
      {"epochs", KeyType::Int, "0", {}, "if > 0, budget in passes over the training set instead"},
      {"sampling", KeyType::Choice, "iid", {"iid", "epochs"}, "with-replacement draws or shuffled epochs"},
      {"alpha_clamp", KeyType::Bool, "true", {}, "clamp Frank-Wolfe steps at 1"},
      {"face_tol", KeyType::Real, "1e-12", {}, "zero threshold for face classification"},
      {"nnz_threshold", KeyType::Real, "0.001", {}, "magnitude below which a weight counts as zero"},
      {"output_iterate", KeyType::Choice, "final", {"final", "random"}, "which iterate is reported"},
      {"layer_sizes", KeyType::IntList, "20,20,20,1", {}, "network layer sizes"},
      {"activation", KeyType::Choice, "sigmoid", {"sigmoid", "relu"}, "hidden activation"},
      {"loss", KeyType::Choice, "mse", {"mse", "xent"}, "loss function"},
      {"bias", KeyType::Bool, "false", {}, "use bias terms"},
      {"fw_layers", KeyType::IntList, "0,1", {}, "l1-constrained weight layers"},
      {"deltas", KeyType::RealList, "10,10", {}, "l1 radius per fw layer"},
      {"synth_m", KeyType::Int, "5", {}, "nonzeros per node in the teacher network"},
      {"synth_snr", KeyType::Real, "10", {}, "signal-to-noise ratio"},
      {"synth_train", KeyType::Int, "5000", {}, "training samples"},
      {"synth_val", KeyType::Int, "1000", {}, "validation samples"},
      {"synth_test", KeyType::Int, "5000", {}, "test samples"},
      {"synth_seed", KeyType::UInt64, "1", {}, "teacher network and data seed"},
      {"train_data", KeyType::Text, "", {}, "training dataset file"},
      {"val_data", KeyType::Text, "", {}, "validation dataset file"},
      {"test_data", KeyType::Text, "", {}, "test dataset file"},
      {"quad_p", KeyType::Int, "10", {}, "quadratic: constrained dimension"},
      {"quad_q", KeyType::Int, "5", {}, "quadratic: free dimension"},
      {"quad_noise", KeyType::Real, "0", {}, "quadratic: gradient noise sigma"},
      {"quad_radius", KeyType::Real, "1", {}, "quadratic: l1 radius"},
      {"grid_l_nabla", KeyType::RealList, "0.25,1,4,16,64,256,1024,4096", {}, "L grid"},
      {"grid_delta", KeyType::RealList, "1,5,10,50,100", {}, "per-layer delta grid"},
      {"grid_threads", KeyType::Int, "1", {}, "worker threads for grid search"},
      {"thetas", KeyType::RealList, "100,50,25,10,5", {}, "hard-threshold percentages"},
      {"smoothing_window", KeyType::Int, "50", {}, "trailing window for gap smoothing"},
      {"trace_path", KeyType::Text, "trace.csv", {}, "trace CSV output"},
      {"report_path", KeyType::Text, "report.txt", {}, "report output"},
      {"checkpoint_path", KeyType::Text, "model.ckpt", {}, "checkpoint output"},
      {"grid_path", KeyType::Text, "grid.csv", {}, "grid results output"},
  };
  return schema;
}

const KeyDef* find_key(const std::string& name) {
  for (const KeyDef& d : config_schema())
    if (d.name == name) return &d;
  return nullptr;
}

KeyValueConfig::KeyValueConfig() {
  for (const KeyDef& d : config_schema()) values_[d.name] = d.default_value;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  const KeyDef* def = find_key(key);
  if (def == nullptr) throw ConfigError("unknown config key '" + key + "'");
  const std::string v = trim(value);
  check_value(*def, v);
  values_[key] = v;
}

const std::string& KeyValueConfig::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t == kResultsMarker) break;
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    try {
      cfg.set(trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

std::int64_t KeyValueConfig::get_int(const std::string& key) const {
  std::int64_t v = 0;
  parse_number(raw(key), v);
  return v;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key) const {
  std::uint64_t v = 0;
  parse_number(raw(key), v);
  return v;
}

double KeyValueConfig::get_real(const std::string& key) const {
  double v = 0;
  parse_number(raw(key), v);
  return v;
}

bool KeyValueConfig::get_bool(const std::string& key) const { return raw(key) == "true"; }

std::vector<std::int64_t> KeyValueConfig::get_int_list(const std::string& key) const {
  std::vector<std::int64_t> out;
  for (const auto& s : split_list(raw(key))) {
    std::int64_t v = 0;
    parse_number(s, v);
    out.push_back(v);
  }
  return out;
}

std::vector<double> KeyValueConfig::get_real_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : split_list(raw(key))) {
    double v = 0;
    parse_number(s, v);
    out.push_back(v);
  }
  return out;
}

std::string KeyValueConfig::echo() const {
  std::string out;
  for (const KeyDef& d : config_schema()) out += d.name + " = " + values_.at(d.name) + "\n";
  return out;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::SFW:
      return "sfw";
    case Method::SFW_IF:
      return "sfw-if";
    case Method::SGD:
      return "sgd";
  }
  return "?";
}

ExperimentConfig ExperimentConfig::from(const KeyValueConfig& kv) {
  ExperimentConfig c;
  c.source = kv;
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  const std::string& problem = kv.raw("problem");
  c.problem = problem == "quadratic" ? ProblemKind::Quadratic
              : problem == "dataset" ? ProblemKind::DatasetFile
                                     : ProblemKind::SyntheticNet;
  const std::string& method = kv.raw("method");
  c.method = method == "sfw" ? Method::SFW : method == "sgd" ? Method::SGD : Method::SFW_IF;
  c.seed = kv.get_u64("seed");

  c.l_nabla = kv.get_real("l_nabla");
  require(c.l_nabla > 0, "l_nabla must be positive");
  c.c_bar_scale = kv.get_real("c_bar_scale");
  require(c.c_bar_scale >= 1.0, "c_bar_scale must be >= 1");
  const std::string& sched = kv.raw("batch_schedule");
  c.batch = sched == "linear-in-k"      ? BatchSchedule::linear_in_k()
            : sched == "linear-in-iter" ? BatchSchedule::linear_in_iter()
                                        : BatchSchedule::constant(kv.get_int("batch_size"));
  require(kv.get_int("batch_size") >= 1, "batch_size must be >= 1");
  c.norm_x = kv.raw("norm_x") == "l1" ? Norm::L1 : Norm::L2;
  c.norm_y = kv.raw("norm_y") == "l1" ? Norm::L1 : Norm::L2;
  c.iterations = kv.get_int("iterations");
  c.epochs = kv.get_int("epochs");
  require(c.iterations >= 0 && c.epochs >= 0, "iterations and epochs must be >= 0");
  c.sampling = kv.raw("sampling") == "epochs" ? Sampling::ShuffledEpochs : Sampling::WithReplacement;
  c.alpha_clamp = kv.get_bool("alpha_clamp");
  c.face_tol = kv.get_real("face_tol");
  require(c.face_tol >= 0, "face_tol must be >= 0");
  c.nnz_threshold = kv.get_real("nnz_threshold");
  c.output = kv.raw("output_iterate") == "random" ? OutputChoice::Random : OutputChoice::Final;

  for (auto s : kv.get_int_list("layer_sizes")) c.net.layer_sizes.push_back(s);
  c.net.activation = kv.raw("activation") == "relu" ? Activation::ReLU : Activation::Sigmoid;
  c.net.loss = kv.raw("loss") == "xent" ? Loss::SoftmaxCrossEntropy : Loss::MSE;
  c.net.bias = kv.get_bool("bias");
  for (auto t : kv.get_int_list("fw_layers")) c.net.fw_layers.push_back(t);
  c.net.delta_per_layer = kv.get_real_list("deltas");
  if (c.problem != ProblemKind::Quadratic) {
    try {
      c.net.validate();
    } catch (const InputError& e) {
      throw ConfigError(e.what());
    }
  }

  c.synth.layer_sizes = c.net.layer_sizes;
  c.synth.activation = c.net.activation;
  c.synth.m = kv.get_int("synth_m");
  c.synth.snr = kv.get_real("synth_snr");
  c.synth.n_train = kv.get_int("synth_train");
  c.synth.n_val = kv.get_int("synth_val");
  c.synth.n_test = kv.get_int("synth_test");
  c.synth.seed = kv.get_u64("synth_seed");
  if (c.problem == ProblemKind::SyntheticNet) {
    try {
      c.synth.validate();
    } catch (const InputError& e) {
      throw ConfigError(e.what());
    }
    require(c.net.loss == Loss::MSE, "synthetic-net is a regression problem; use loss = mse");
  }
  c.train_data = kv.raw("train_data");
  c.val_data = kv.raw("val_data");
  c.test_data = kv.raw("test_data");
  if (c.problem == ProblemKind::DatasetFile) require(!c.train_data.empty(), "problem = dataset needs train_data");

  c.quad_p = kv.get_int("quad_p");
  c.quad_q = kv.get_int("quad_q");
  c.quad_noise = kv.get_real("quad_noise");
  c.quad_radius = kv.get_real("quad_radius");
  if (c.problem == ProblemKind::Quadratic) {
    require(c.quad_p >= 0 && c.quad_q >= 0 && c.quad_p + c.quad_q > 0, "quadratic needs quad_p + quad_q > 0");
    require(c.quad_noise >= 0 && c.quad_radius > 0, "quad_noise must be >= 0 and quad_radius > 0");
  }

  c.grid_l_nabla = kv.get_real_list("grid_l_nabla");
  c.grid_delta = kv.get_real_list("grid_delta");
  c.grid_threads = kv.get_int("grid_threads");
  require(c.grid_threads >= 1, "grid_threads must be >= 1");
  for (double v : c.grid_l_nabla) require(v > 0, "grid_l_nabla entries must be positive");
  for (double v : c.grid_delta) require(v > 0, "grid_delta entries must be positive");

  c.thetas = kv.get_real_list("thetas");
  for (double t : c.thetas) require(t > 0 && t <= 100, "thetas must lie in (0, 100]");
  c.smoothing_window = kv.get_int("smoothing_window");
  require(c.smoothing_window >= 1, "smoothing_window must be >= 1");

  c.trace_path = kv.raw("trace_path");
  c.report_path = kv.raw("report_path");
  c.checkpoint_path = kv.raw("checkpoint_path");
  c.grid_path = kv.raw("grid_path");
  return c;
}

Index ExperimentConfig::effective_iterations(Index n_train) const {
  const bool alt = method == Method::SFW_IF;
  if (epochs > 0) {
    const Index b = batch.kind == BatchSchedule::Kind::Constant ? batch.size : 1;
    const Index calls = (epochs * n_train + b - 1) / b;
    return alt ? calls / 2 : calls;
  }
  return alt ? iterations : 2 * iterations;
}

}  // namespace sfw
