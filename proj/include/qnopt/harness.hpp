#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qnopt/data.hpp"
#include "qnopt/model.hpp"
#include "qnopt/optim.hpp"

namespace qnopt {

enum class OptimizerKind { sgd, adam, svrg, svrg2, naq, lnaq, onaq, olnaq, svrnaq, svrlnaq };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

/// Synthetic dataset request, parsed from dataset strings of the form
///   synth:quad:d=10,cond=100,n=200,noise=0.1
///   synth:mlp:layers=11-10-4-1,rows=4898,noise=0.1,corr=0.8
struct SynthSpec {
  enum class Kind { quadratic, mlp };
  Kind kind = Kind::quadratic;
  std::size_t d = 10;
  std::size_t n = 0;  // 0: generator default
  double cond = 10.0;
  double noise = 0.0;
  double corr = 0.0;
  std::vector<std::size_t> teacher_layers;
  std::size_t rows = 1000;
};

struct RunConfig {
  // data
  std::string dataset;  // CSV path or synth: spec
  std::size_t n_features = 0;
  TargetSpec target_columns = TargetSpec::last();
  double train_fraction = 0.8;
  // network
  std::vector<std::size_t> layers;
  OutputActivation output_activation = OutputActivation::linear;
  LossKind loss_kind = LossKind::mse;
  // optimizer
  OptimizerKind optimizer = OptimizerKind::svrlnaq;
  std::size_t batch_size = 32;
  std::size_t memory = 4;
  double mu = 0.95;
  double alpha0 = 1.0;
  double svrg_alpha = 0.025;
  AdamHyper adam;
  // run
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
  std::string out;  // output prefix; empty writes nothing
  std::string name;

  /// Checks everything that does not depend on the loaded data; throws
  /// ValidationError.
  void validate() const;
};

/// Flat key=value file; '#' starts a comment.
RunConfig load_config(const std::string& path);

/// Applies one key=value pair (the CLI override mechanism). Throws
/// ValidationError on unknown keys or malformed values.
void apply_override(RunConfig& config, const std::string& key, const std::string& value);

/// Resolves a --config argument: an existing file path is used as is,
/// otherwise <preset dir>/<name>.cfg is tried, where the preset directory is
/// $QNOPT_PRESET_DIR or ./presets.
std::string resolve_config_path(const std::string& arg);

/// Train/test data plus the network, after the full ingestion pipeline
/// (load or synthesize, split, normalize for regression).
struct Problem {
  Dataset train;
  Dataset test;
  NetworkSpec net;
};

Problem prepare_problem(const RunConfig& config);

/// Objective over a fixed contiguous partition of the training set into
/// ceil(rows / batch_size) batches.
class ModelObjective : public Objective {
 public:
  ModelObjective(NetworkSpec spec, Dataset train, std::size_t batch_size);

  std::size_t dim() const override;
  std::size_t num_batches() const override { return ranges_.size(); }
  double full_loss(const Vector& w) const override;

  Batch batch_view(std::size_t i) const;
  const Dataset& train() const { return train_; }

 protected:
  Vector eval_full_gradient(const Vector& w) override;
  Vector eval_batch_gradient(const Vector& w, std::size_t batch) override;

 private:
  NetworkSpec spec_;
  Dataset train_;
  std::vector<std::pair<std::size_t, std::size_t>> ranges_;
};

struct RunResult {
  RunConfig config;
  std::vector<RunRecord> records;
  Vector final_params;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  bool diverged = false;
  std::string divergence_message;
};

/// Runs one configuration: bootstrap (when the optimizer needs one) plus
/// epochs, streaming one CSV row per epoch to <out>.csv and the final
/// parameters to <out>.params.txt. Divergence yields a partial file with a
/// failure marker row instead of an exception.
RunResult run(const RunConfig& config);

struct CompareResult {
  std::vector<RunResult> runs;
  std::string merged_path;
};

/// Runs several configurations that differ only in optimizer fields
/// (optimizer, mu, memory, alpha0, svrg_alpha, adam_*), writing one metrics
/// file per optimizer plus <out_prefix>_compare.csv. Every run sees identical
/// init, split, and batch-index streams.
CompareResult compare(std::vector<RunConfig> configs, const std::string& out_prefix);

struct GradcheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_coord = 0;
  std::size_t coords = 0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Backprop vs central finite differences (h = 1e-5) over every coordinate
/// on one batch; per-coordinate error |bp - fd| / max(|bp|, |fd|, 1).
GradcheckReport gradcheck(const RunConfig& config, double tolerance);

/// Sub-stream tags so the init draw, the split shuffle, and the batch
/// sampling never perturb one another.
inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kDataStream = 2;
inline constexpr std::uint64_t kBatchStream = 3;

}  // namespace qnopt
