#pragma once

// Flat "key = value" experiment configuration with a typed schema.
// Lines starting with '#' are comments; lists are comma separated.
// Unknown keys and ill-typed values are rejected.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sfw/errors.hpp"
#include "sfw/mlp.hpp"
#include "sfw/optimizer.hpp"

namespace sfw {

class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

enum class KeyType { Int, UInt64, Real, Bool, Text, Choice, IntList, RealList };

struct KeyDef {
  std::string name;
  KeyType type;
  std::string default_value;
  std::vector<std::string> choices;  // for Choice
  std::string help;
};

/// The full schema, in echo order.
const std::vector<KeyDef>& config_schema();
const KeyDef* find_key(const std::string& name);

/// Reports put their results after this line; parsing stops there, so a
/// report can be fed back as a config.
inline constexpr const char* kResultsMarker = "# results";

/// String-valued configuration checked against the schema on every set().
class KeyValueConfig {
 public:
  KeyValueConfig();  // all defaults

  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<config>");
  static KeyValueConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  const std::string& raw(const std::string& key) const;

  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_text(const std::string& key) const { return raw(key); }
  std::vector<std::int64_t> get_int_list(const std::string& key) const;
  std::vector<double> get_real_list(const std::string& key) const;

  /// Canonical "key = value" lines for every schema key, in schema order.
  std::string echo() const;

 private:
  std::map<std::string, std::string> values_;
};

enum class Method { SFW, SFW_IF, SGD };
enum class ProblemKind { Quadratic, SyntheticNet, DatasetFile };
enum class OutputChoice { Final, Random };

/// Typed view of a validated KeyValueConfig.
struct ExperimentConfig {
  KeyValueConfig source;

  ProblemKind problem = ProblemKind::SyntheticNet;
  Method method = Method::SFW_IF;
  std::uint64_t seed = 0;

  double l_nabla = 1.0;
  double c_bar_scale = 1.0;
  BatchSchedule batch;
  Norm norm_x = Norm::L2;
  Norm norm_y = Norm::L2;
  Index iterations = 0;  // budget in iterations of the alternative-direction method
  Index epochs = 0;
  Sampling sampling = Sampling::WithReplacement;
  bool alpha_clamp = true;
  double face_tol = kFaceTol;
  double nnz_threshold = 1e-3;
  OutputChoice output = OutputChoice::Final;

  MLPSpec net;  // fw_layers/deltas as configured; sgd trains them unconstrained
  SynthSpec synth;
  std::string train_data, val_data, test_data;

  Index quad_p = 0, quad_q = 0;
  double quad_noise = 0.0;
  double quad_radius = 1.0;

  std::vector<double> grid_l_nabla;
  std::vector<double> grid_delta;
  Index grid_threads = 1;

  std::vector<double> thetas;
  Index smoothing_window = 50;

  std::string trace_path, report_path, checkpoint_path, grid_path;

  static ExperimentConfig from(const KeyValueConfig& kv);

  /// Iterations actually run: methods without alternative directions get
  /// twice the budget so all methods draw the same number of gradient batches.
  Index effective_iterations(Index n_train) const;
};

std::string to_string(Method m);

}  // namespace sfw
