#include "qnopt/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>

namespace qnopt {

namespace {

constexpr std::uint64_t kSynthStream = 4;

std::string trim(std::string s) {
  const char* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& s, const std::string& key) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("config: bad numeric value for " + key + ": '" + s + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& s, const std::string& key) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("config: bad integer value for " + key + ": '" + s + "'");
  }
  return v;
}

std::vector<std::size_t> parse_size_list(const std::string& s, char sep, const std::string& key) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<std::size_t>(parse_u64(item, key)));
  }
  if (out.empty()) throw ValidationError("config: empty list for " + key);
  return out;
}

std::optional<SynthSpec> parse_synth(const std::string& dataset) {
  if (dataset.rfind("synth:", 0) != 0) return std::nullopt;
  std::string rest = dataset.substr(6);
  SynthSpec spec;
  if (rest.rfind("quad:", 0) == 0) {
    spec.kind = SynthSpec::Kind::quadratic;
    rest = rest.substr(5);
  } else if (rest.rfind("mlp:", 0) == 0) {
    spec.kind = SynthSpec::Kind::mlp;
    rest = rest.substr(4);
  } else {
    throw ValidationError("dataset: synth kind must be quad or mlp: " + dataset);
  }
  std::stringstream ss(rest);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ValidationError("dataset: bad synth item '" + item + "'");
    const std::string key = trim(item.substr(0, eq));
    const std::string value = trim(item.substr(eq + 1));
    if (key == "d") {
      spec.d = static_cast<std::size_t>(parse_u64(value, key));
    } else if (key == "n") {
      spec.n = static_cast<std::size_t>(parse_u64(value, key));
    } else if (key == "cond") {
      spec.cond = parse_double(value, key);
    } else if (key == "noise") {
      spec.noise = parse_double(value, key);
    } else if (key == "corr") {
      spec.corr = parse_double(value, key);
    } else if (key == "layers") {
      spec.teacher_layers = parse_size_list(value, '-', key);
    } else if (key == "rows") {
      spec.rows = static_cast<std::size_t>(parse_u64(value, key));
    } else {
      throw ValidationError("dataset: unknown synth key '" + key + "'");
    }
  }
  if (spec.kind == SynthSpec::Kind::mlp && spec.teacher_layers.empty()) {
    throw ValidationError("dataset: synth:mlp needs layers=");
  }
  return spec;
}

bool is_limited_memory(OptimizerKind kind) {
  return kind == OptimizerKind::lnaq || kind == OptimizerKind::olnaq ||
         kind == OptimizerKind::svrlnaq || kind == OptimizerKind::svrg2;
}

bool is_momentum(OptimizerKind kind) {
  return kind == OptimizerKind::naq || kind == OptimizerKind::lnaq ||
         kind == OptimizerKind::onaq || kind == OptimizerKind::olnaq ||
         kind == OptimizerKind::svrnaq || kind == OptimizerKind::svrlnaq;
}

bool is_full_batch(OptimizerKind kind) {
  return kind == OptimizerKind::naq || kind == OptimizerKind::lnaq;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_compact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string target_columns_string(const TargetSpec& t) {
  switch (t.kind) {
    case TargetSpec::Kind::first:
      return "first";
    case TargetSpec::Kind::last:
      return "last";
    case TargetSpec::Kind::indices: {
      std::string out;
      for (std::size_t i = 0; i < t.indices.size(); ++i) {
        if (i) out += ';';
        out += std::to_string(t.indices[i]);
      }
      return out;
    }
  }
  return "last";
}

std::string layers_string(const std::vector<std::size_t>& layers) {
  std::string out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(layers[i]);
  }
  return out;
}

// Resolved-config comment line; excludes the output path so identical runs
// writing to different locations stay byte-identical.
std::string config_comment(const RunConfig& c, const Problem& prob, std::size_t eff_batch) {
  std::ostringstream os;
  os << "# config:"
     << " optimizer=" << to_string(c.optimizer) << " dataset=" << c.dataset
     << " target_columns=" << target_columns_string(c.target_columns)
     << " name=" << (c.name.empty() ? prob.train.name : c.name)
     << " layers=" << layers_string(prob.net.layer_sizes)
     << " output_activation=" << (c.output_activation == OutputActivation::linear ? "linear" : "softmax")
     << " loss=" << (c.loss_kind == LossKind::mse ? "mse" : "cross_entropy")
     << " batch_size=" << c.batch_size << " effective_batch=" << eff_batch
     << " memory=" << c.memory << " mu=" << fmt_compact(c.mu)
     << " alpha0=" << fmt_compact(c.alpha0) << " svrg_alpha=" << fmt_compact(c.svrg_alpha)
     << " adam=" << fmt_compact(c.adam.alpha) << '/' << fmt_compact(c.adam.beta1) << '/'
     << fmt_compact(c.adam.beta2) << '/' << fmt_compact(c.adam.eps)
     << " train_fraction=" << fmt_compact(c.train_fraction) << " epochs=" << c.epochs
     << " seed=" << c.seed << " split=" << prob.train.rows << '/' << prob.test.rows;
  return os.str();
}

void fill_test_metrics(RunRecord& rec, const NetworkSpec& net, const Vector& w,
                       const Dataset& test) {
  if (net.loss_kind == LossKind::mse) {
    rec.test_rmse_or_error = rmse(net, w, test.all());
  } else {
    rec.test_rmse_or_error = loss(net, w, test.all());
    rec.test_accuracy = accuracy(net, w, test.all());
  }
}

/// Streams metrics rows; flushes after every row so interrupted runs leave a
/// parseable prefix.
class MetricsWriter {
 public:
  MetricsWriter(const std::string& out_prefix, const std::string& comment) {
    if (out_prefix.empty()) return;
    path_ = out_prefix + ".csv";
    const auto parent = std::filesystem::path(path_).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    file_.open(path_);
    if (!file_) throw IoError("cannot open metrics file " + path_);
    file_ << comment << '\n';
    file_ << "epoch,train_loss,test_rmse_or_error,test_accuracy,full_grad_evals,"
             "minibatch_grad_evals,curvature_skips,wall_time_s\n";
    file_.flush();
  }

  void row(const RunRecord& r) {
    if (!file_.is_open()) return;
    char wall[32];
    std::snprintf(wall, sizeof(wall), "%.6f", r.wall_time_s);
    file_ << r.epoch << ',' << fmt_double(r.train_loss) << ',' << fmt_double(r.test_rmse_or_error)
          << ',' << (r.test_accuracy ? fmt_double(*r.test_accuracy) : "") << ','
          << r.full_grad_evals << ',' << r.minibatch_grad_evals << ',' << r.curvature_skips << ','
          << wall << '\n';
    file_.flush();
  }

  void comment(const std::string& text) {
    if (!file_.is_open()) return;
    file_ << "# " << text << '\n';
    file_.flush();
  }

 private:
  std::string path_;
  std::ofstream file_;
};

class Driver {
 public:
  virtual ~Driver() = default;
  virtual RunRecord run_one(Objective& objective, BatchStream& batches) = 0;
  virtual const Vector& params() const = 0;
};

class SgdDriver : public Driver {
 public:
  SgdDriver(Vector w0, double alpha) : state_(make_sgd_state(std::move(w0))), alpha_(alpha) {}
  RunRecord run_one(Objective& o, BatchStream& b) override { return run_epoch_sgd(state_, o, b, alpha_); }
  const Vector& params() const override { return state_.w; }

 private:
  SgdState state_;
  double alpha_;
};

class AdamDriver : public Driver {
 public:
  AdamDriver(Vector w0, const AdamHyper& hyper) : state_(make_adam_state(std::move(w0))), hyper_(hyper) {}
  RunRecord run_one(Objective& o, BatchStream& b) override { return run_epoch_adam(state_, o, b, hyper_); }
  const Vector& params() const override { return state_.w; }

 private:
  AdamState state_;
  AdamHyper hyper_;
};

class SvrgDriver : public Driver {
 public:
  SvrgDriver(Vector w0, double alpha) : state_(make_svrg_state(std::move(w0))), alpha_(alpha) {}
  RunRecord run_one(Objective& o, BatchStream& b) override { return run_epoch_svrg(state_, o, b, alpha_); }
  const Vector& params() const override { return state_.w_snap; }

 private:
  SvrgState state_;
  double alpha_;
};

class Svrg2Driver : public Driver {
 public:
  Svrg2Driver(Vector w0, HessianMode mode, std::size_t memory, double bootstrap_alpha,
              StepSchedule schedule)
      : state_(make_svrg2_state(std::move(w0), mode, memory)),
        bootstrap_alpha_(bootstrap_alpha),
        schedule_(schedule) {}
  RunRecord run_one(Objective& o, BatchStream& b) override {
    if (!state_.bootstrap_done) return bootstrap_svrg2(state_, o, b, bootstrap_alpha_);
    return run_epoch_svrg2(state_, o, b, schedule_);
  }
  const Vector& params() const override { return state_.w_snap; }

 private:
  Svrg2State state_;
  double bootstrap_alpha_;
  StepSchedule schedule_;
};

class SvrNaqDriver : public Driver {
 public:
  SvrNaqDriver(Vector w0, double mu, HessianMode mode, std::size_t memory, double bootstrap_alpha,
               StepSchedule schedule)
      : state_(make_svrnaq_state(std::move(w0), mu, mode, memory)),
        bootstrap_alpha_(bootstrap_alpha),
        schedule_(schedule) {}
  RunRecord run_one(Objective& o, BatchStream& b) override {
    if (!state_.bootstrap_done) return bootstrap_svrnaq(state_, o, b, bootstrap_alpha_);
    return run_epoch_svrnaq(state_, o, b, schedule_);
  }
  const Vector& params() const override { return state_.w_snap; }

 private:
  SvrNaqState state_;
  double bootstrap_alpha_;
  StepSchedule schedule_;
};

class OnaqDriver : public Driver {
 public:
  OnaqDriver(Vector w0, double mu, HessianMode mode, std::size_t memory, StepSchedule schedule)
      : state_(make_onaq_state(std::move(w0), mu, mode, memory)), schedule_(schedule) {}
  RunRecord run_one(Objective& o, BatchStream& b) override {
    return run_epoch_onaq(state_, o, b, schedule_);
  }
  const Vector& params() const override { return state_.w; }

 private:
  OnaqState state_;
  StepSchedule schedule_;
};

std::unique_ptr<Driver> make_driver(const RunConfig& c, Vector w0) {
  const StepSchedule decay = StepSchedule::sqrt_decay(c.alpha0);
  switch (c.optimizer) {
    case OptimizerKind::sgd:
      return std::make_unique<SgdDriver>(std::move(w0), c.svrg_alpha);
    case OptimizerKind::adam:
      return std::make_unique<AdamDriver>(std::move(w0), c.adam);
    case OptimizerKind::svrg:
      return std::make_unique<SvrgDriver>(std::move(w0), c.svrg_alpha);
    case OptimizerKind::svrg2:
      // SVRG+II runs at the constant SVRG-family step; the decay schedule
      // belongs to the NAQ family.
      return std::make_unique<Svrg2Driver>(std::move(w0), HessianMode::limited, c.memory,
                                           c.svrg_alpha, StepSchedule::constant(c.svrg_alpha));
    case OptimizerKind::naq:
    case OptimizerKind::onaq:
      return std::make_unique<OnaqDriver>(std::move(w0), c.mu, HessianMode::full, c.memory, decay);
    case OptimizerKind::lnaq:
    case OptimizerKind::olnaq:
      return std::make_unique<OnaqDriver>(std::move(w0), c.mu, HessianMode::limited, c.memory,
                                          decay);
    case OptimizerKind::svrnaq:
      return std::make_unique<SvrNaqDriver>(std::move(w0), c.mu, HessianMode::full, c.memory,
                                            c.svrg_alpha, decay);
    case OptimizerKind::svrlnaq:
      return std::make_unique<SvrNaqDriver>(std::move(w0), c.mu, HessianMode::limited, c.memory,
                                            c.svrg_alpha, decay);
  }
  throw ValidationError("unknown optimizer");
}

}  // namespace

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::svrg: return "svrg";
    case OptimizerKind::svrg2: return "svrg2";
    case OptimizerKind::naq: return "naq";
    case OptimizerKind::lnaq: return "lnaq";
    case OptimizerKind::onaq: return "onaq";
    case OptimizerKind::olnaq: return "olnaq";
    case OptimizerKind::svrnaq: return "svrnaq";
    case OptimizerKind::svrlnaq: return "svrlnaq";
  }
  return "?";
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  if (name == "svrg") return OptimizerKind::svrg;
  if (name == "svrg2") return OptimizerKind::svrg2;
  if (name == "naq") return OptimizerKind::naq;
  if (name == "lnaq") return OptimizerKind::lnaq;
  if (name == "onaq") return OptimizerKind::onaq;
  if (name == "olnaq") return OptimizerKind::olnaq;
  if (name == "svrnaq") return OptimizerKind::svrnaq;
  if (name == "svrlnaq") return OptimizerKind::svrlnaq;
  throw ValidationError("unknown optimizer '" + name + "'");
}

void RunConfig::validate() const {
  if (dataset.empty()) throw ValidationError("config: dataset is required");
  parse_synth(dataset);  // validates synth syntax
  if (batch_size < 1) throw ValidationError("config: batch_size must be >= 1");
  if (is_limited_memory(optimizer) && memory < 1) {
    throw ValidationError("config: limited-memory optimizers require memory >= 1");
  }
  if (is_momentum(optimizer) && !(mu >= 0.0 && mu < 1.0)) {
    throw ValidationError("config: momentum optimizers require 0 <= mu < 1");
  }
  if (!(alpha0 > 0.0)) throw ValidationError("config: alpha0 must be > 0");
  if (!(svrg_alpha > 0.0)) throw ValidationError("config: svrg_alpha must be > 0");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("config: train_fraction must be in (0,1)");
  }
}

void apply_override(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "dataset") {
    c.dataset = value;
  } else if (key == "n_features") {
    c.n_features = static_cast<std::size_t>(parse_u64(value, key));
  } else if (key == "target_columns") {
    if (value == "first") {
      c.target_columns = TargetSpec::first();
    } else if (value == "last") {
      c.target_columns = TargetSpec::last();
    } else {
      c.target_columns.kind = TargetSpec::Kind::indices;
      c.target_columns.indices = parse_size_list(value, ',', key);
    }
  } else if (key == "train_fraction") {
    c.train_fraction = parse_double(value, key);
  } else if (key == "layers") {
    c.layers = parse_size_list(value, ',', key);
  } else if (key == "output_activation") {
    if (value == "linear") {
      c.output_activation = OutputActivation::linear;
    } else if (value == "softmax") {
      c.output_activation = OutputActivation::softmax;
    } else {
      throw ValidationError("config: output_activation must be linear or softmax");
    }
  } else if (key == "loss") {
    if (value == "mse") {
      c.loss_kind = LossKind::mse;
    } else if (value == "cross_entropy") {
      c.loss_kind = LossKind::cross_entropy;
    } else {
      throw ValidationError("config: loss must be mse or cross_entropy");
    }
  } else if (key == "optimizer") {
    c.optimizer = optimizer_from_string(value);
  } else if (key == "batch_size") {
    c.batch_size = static_cast<std::size_t>(parse_u64(value, key));
  } else if (key == "memory") {
    c.memory = static_cast<std::size_t>(parse_u64(value, key));
  } else if (key == "mu") {
    c.mu = parse_double(value, key);
  } else if (key == "alpha0") {
    c.alpha0 = parse_double(value, key);
  } else if (key == "svrg_alpha") {
    c.svrg_alpha = parse_double(value, key);
  } else if (key == "adam_alpha") {
    c.adam.alpha = parse_double(value, key);
  } else if (key == "adam_beta1") {
    c.adam.beta1 = parse_double(value, key);
  } else if (key == "adam_beta2") {
    c.adam.beta2 = parse_double(value, key);
  } else if (key == "adam_eps") {
    c.adam.eps = parse_double(value, key);
  } else if (key == "epochs") {
    c.epochs = static_cast<std::size_t>(parse_u64(value, key));
  } else if (key == "seed") {
    c.seed = parse_u64(value, key);
  } else if (key == "out") {
    c.out = value;
  } else if (key == "name") {
    c.name = value;
  } else {
    throw ValidationError("config: unknown key '" + key + "'");
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  RunConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config: line " + std::to_string(lineno) + " is not key=value");
    }
    apply_override(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

std::string resolve_config_path(const std::string& arg) {
  if (std::filesystem::exists(arg)) return arg;
  const char* env = std::getenv("QNOPT_PRESET_DIR");
  const std::string dir = env ? env : "presets";
  const std::string candidate = dir + "/" + arg + ".cfg";
  if (std::filesystem::exists(candidate)) return candidate;
  throw IoError("config '" + arg + "' not found (also tried " + candidate + ")");
}

Problem prepare_problem(const RunConfig& config) {
  config.validate();
  const auto synth = parse_synth(config.dataset);
  Dataset full;
  bool normalize = config.loss_kind == LossKind::mse;
  std::vector<std::size_t> default_layers;
  if (synth) {
    const std::uint64_t synth_seed = substream_seed(config.seed, kSynthStream);
    if (synth->kind == SynthSpec::Kind::quadratic) {
      full = synth_quadratic(synth->d, synth->cond, synth_seed, synth->n, synth->noise).data;
      normalize = false;  // constructed scaling carries the condition number
      default_layers = {synth->d, 1};
    } else {
      full = synth_regression(synth->teacher_layers, synth->rows, synth_seed, synth->noise,
                              synth->corr);
      default_layers = synth->teacher_layers;
    }
  } else {
    if (config.n_features == 0) throw ValidationError("config: n_features is required for CSV data");
    full = load_csv(config.dataset, config.n_features, config.target_columns);
  }

  Problem prob;
  prob.net.layer_sizes = config.layers.empty() ? default_layers : config.layers;
  prob.net.output_activation = config.output_activation;
  prob.net.loss_kind = config.loss_kind;
  prob.net.validate();
  if (prob.net.layer_sizes.front() != full.n_features) {
    throw ValidationError("config: first layer size " + std::to_string(prob.net.layer_sizes.front()) +
                          " != dataset features " + std::to_string(full.n_features));
  }
  if (prob.net.layer_sizes.back() != full.n_outputs) {
    throw ValidationError("config: last layer size " + std::to_string(prob.net.layer_sizes.back()) +
                          " != dataset outputs " + std::to_string(full.n_outputs));
  }

  SplitSpec split_spec;
  split_spec.train_fraction = config.train_fraction;
  split_spec.shuffle_seed = substream_seed(config.seed, kDataStream);
  auto [train, test] = split(full, split_spec);
  if (normalize) {
    znormalize(train);
    apply_normalization(test, train);
  }
  prob.train = std::move(train);
  prob.test = std::move(test);
  return prob;
}

ModelObjective::ModelObjective(NetworkSpec spec, Dataset train, std::size_t batch_size)
    : spec_(std::move(spec)), train_(std::move(train)) {
  if (batch_size < 1 || batch_size > train_.rows) {
    throw ValidationError("ModelObjective: batch_size must be in [1, train rows]");
  }
  for (std::size_t begin = 0; begin < train_.rows; begin += batch_size) {
    ranges_.emplace_back(begin, std::min(begin + batch_size, train_.rows));
  }
}

std::size_t ModelObjective::dim() const { return param_count(spec_); }

double ModelObjective::full_loss(const Vector& w) const { return loss(spec_, w, train_.all()); }

Batch ModelObjective::batch_view(std::size_t i) const {
  const auto& [begin, end] = ranges_.at(i);
  return train_.batch(begin, end);
}

Vector ModelObjective::eval_full_gradient(const Vector& w) {
  return gradient(spec_, w, train_.all());
}

Vector ModelObjective::eval_batch_gradient(const Vector& w, std::size_t batch) {
  return gradient(spec_, w, batch_view(batch));
}

RunResult run(const RunConfig& config) {
  Problem prob = prepare_problem(config);

  std::size_t eff_batch = is_full_batch(config.optimizer) ? prob.train.rows : config.batch_size;
  if (eff_batch > prob.train.rows) {
    throw ValidationError("config: batch_size " + std::to_string(eff_batch) +
                          " exceeds train rows " + std::to_string(prob.train.rows));
  }

  RunResult result;
  result.config = config;
  result.train_rows = prob.train.rows;
  result.test_rows = prob.test.rows;

  ModelObjective objective(prob.net, prob.train, eff_batch);
  Rng init_rng = Rng::substream(config.seed, kInitStream);
  Vector w0 = uniform_init(init_rng, param_count(prob.net), -0.5, 0.5);
  BatchStream batches(Rng::substream(config.seed, kBatchStream), objective.num_batches());

  MetricsWriter writer(config.out, config_comment(config, prob, eff_batch));
  auto driver = make_driver(config, w0);

  if (config.epochs >= 1) {
    RunRecord init_row;
    init_row.epoch = 0;
    init_row.train_loss = objective.full_loss(w0);
    fill_test_metrics(init_row, prob.net, w0, prob.test);
    writer.row(init_row);
  }

  for (std::size_t e = 1; e <= config.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    RunRecord rec;
    try {
      rec = driver->run_one(objective, batches);
    } catch (const DivergenceError& err) {
      result.diverged = true;
      result.divergence_message = err.what();
      writer.comment(std::string("diverged: ") + err.what());
      RunRecord marker;
      marker.epoch = e;
      marker.train_loss = std::numeric_limits<double>::quiet_NaN();
      marker.test_rmse_or_error = std::numeric_limits<double>::quiet_NaN();
      marker.full_grad_evals = objective.counts().full_grad;
      marker.minibatch_grad_evals = objective.counts().batch_grad;
      writer.row(marker);
      break;
    }
    fill_test_metrics(rec, prob.net, driver->params(), prob.test);
    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.records.push_back(rec);
    writer.row(rec);
  }

  result.final_params = driver->params();
  if (!config.out.empty()) {
    const std::string ppath = config.out + ".params.txt";
    std::ofstream pf(ppath);
    if (!pf) throw IoError("cannot open " + ppath);
    for (double v : result.final_params) pf << fmt_double(v) << '\n';
  }
  return result;
}

CompareResult compare(std::vector<RunConfig> configs, const std::string& out_prefix) {
  if (configs.empty()) throw ValidationError("compare: no configurations");
  const RunConfig& base = configs.front();
  for (const RunConfig& c : configs) {
    const bool shared = c.dataset == base.dataset && c.n_features == base.n_features &&
                        c.target_columns.kind == base.target_columns.kind &&
                        c.target_columns.indices == base.target_columns.indices &&
                        c.train_fraction == base.train_fraction && c.layers == base.layers &&
                        c.output_activation == base.output_activation &&
                        c.loss_kind == base.loss_kind && c.batch_size == base.batch_size &&
                        c.epochs == base.epochs && c.seed == base.seed && c.name == base.name;
    if (!shared) {
      throw ValidationError("compare: configurations may differ only in optimizer fields");
    }
  }

  CompareResult result;
  for (RunConfig& c : configs) {
    if (!out_prefix.empty()) c.out = out_prefix + "_" + to_string(c.optimizer);
    result.runs.push_back(run(c));
  }

  if (!out_prefix.empty()) {
    result.merged_path = out_prefix + "_compare.csv";
    std::ofstream merged(result.merged_path);
    if (!merged) throw IoError("cannot open " + result.merged_path);
    merged << "epoch";
    for (const RunResult& r : result.runs) {
      const std::string opt = to_string(r.config.optimizer);
      merged << ',' << opt << "_train_loss," << opt << "_test_rmse_or_error";
    }
    merged << '\n';
    for (std::size_t e = 1; e <= base.epochs; ++e) {
      merged << e;
      for (const RunResult& r : result.runs) {
        if (e <= r.records.size()) {
          const RunRecord& rec = r.records[e - 1];
          merged << ',' << fmt_double(rec.train_loss) << ',' << fmt_double(rec.test_rmse_or_error);
        } else {
          merged << ",,";
        }
      }
      merged << '\n';
    }
  }
  return result;
}

GradcheckReport gradcheck(const RunConfig& config, double tolerance) {
  Problem prob = prepare_problem(config);
  const std::size_t eff_batch = std::min(config.batch_size, prob.train.rows);
  ModelObjective objective(prob.net, prob.train, eff_batch);
  Rng init_rng = Rng::substream(config.seed, kInitStream);
  Vector w = uniform_init(init_rng, param_count(prob.net), -0.5, 0.5);
  const Batch batch = objective.batch_view(0);

  const Vector bp = gradient(prob.net, w, batch);
  const double h = 1e-5;
  GradcheckReport report;
  report.tolerance = tolerance;
  report.coords = w.size();
  Vector wp = w;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double orig = wp[i];
    wp[i] = orig + h;
    const double lp = loss(prob.net, wp, batch);
    wp[i] = orig - h;
    const double lm = loss(prob.net, wp, batch);
    wp[i] = orig;
    const double fd = (lp - lm) / (2.0 * h);
    const double rel = std::fabs(bp[i] - fd) / std::max({std::fabs(bp[i]), std::fabs(fd), 1.0});
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_coord = i;
    }
  }
  report.pass = report.max_rel_err < tolerance;
  return report;
}

}  // namespace qnopt
