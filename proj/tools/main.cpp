#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qnopt/harness.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::string optimizer;
  double mu = -1.0;
  long long batch = -1;
  long long memory = -1;
  long long epochs = -1;
  long long seed = -1;
  double alpha0 = -1.0;
  double svrg_alpha = -1.0;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "config file or preset name")->required();
  cmd->add_option("--optimizer", args.optimizer, "optimizer override");
  cmd->add_option("--mu", args.mu, "momentum coefficient override");
  cmd->add_option("--batch", args.batch, "batch size override");
  cmd->add_option("--memory", args.memory, "curvature memory override");
  cmd->add_option("--epochs", args.epochs, "epoch count override");
  cmd->add_option("--seed", args.seed, "seed override");
  cmd->add_option("--alpha0", args.alpha0, "step schedule alpha0 override");
  cmd->add_option("--svrg-alpha", args.svrg_alpha, "SVRG/SGD step override");
  cmd->add_option("--out", args.out, "output path prefix override");
}

qnopt::RunConfig build_config(const CommonArgs& args) {
  qnopt::RunConfig config = qnopt::load_config(qnopt::resolve_config_path(args.config));
  if (!args.optimizer.empty()) qnopt::apply_override(config, "optimizer", args.optimizer);
  if (args.mu >= 0.0) qnopt::apply_override(config, "mu", std::to_string(args.mu));
  if (args.batch >= 0) qnopt::apply_override(config, "batch_size", std::to_string(args.batch));
  if (args.memory >= 0) qnopt::apply_override(config, "memory", std::to_string(args.memory));
  if (args.epochs >= 0) qnopt::apply_override(config, "epochs", std::to_string(args.epochs));
  if (args.seed >= 0) qnopt::apply_override(config, "seed", std::to_string(args.seed));
  if (args.alpha0 >= 0.0) qnopt::apply_override(config, "alpha0", std::to_string(args.alpha0));
  if (args.svrg_alpha >= 0.0) {
    qnopt::apply_override(config, "svrg_alpha", std::to_string(args.svrg_alpha));
  }
  if (!args.out.empty()) config.out = args.out;
  return config;
}

int cmd_run(const CommonArgs& args) {
  const qnopt::RunConfig config = build_config(args);
  const qnopt::RunResult result = qnopt::run(config);
  for (const qnopt::RunRecord& r : result.records) {
    std::printf("epoch %3zu  train_loss %.6e  test %.6e  evals %llu/%llu  skips %llu\n", r.epoch,
                r.train_loss, r.test_rmse_or_error,
                static_cast<unsigned long long>(r.full_grad_evals),
                static_cast<unsigned long long>(r.minibatch_grad_evals),
                static_cast<unsigned long long>(r.curvature_skips));
  }
  if (result.diverged) {
    std::fprintf(stderr, "run failed: %s\n", result.divergence_message.c_str());
    return 2;
  }
  if (!config.out.empty()) std::printf("metrics written to %s.csv\n", config.out.c_str());
  return 0;
}

int cmd_compare(const CommonArgs& args, const std::string& optimizers) {
  qnopt::RunConfig base = build_config(args);
  std::vector<qnopt::RunConfig> configs;
  std::string item;
  for (char c : optimizers + ",") {
    if (c == ',') {
      if (!item.empty()) {
        qnopt::RunConfig cfg = base;
        cfg.optimizer = qnopt::optimizer_from_string(item);
        configs.push_back(cfg);
        item.clear();
      }
    } else {
      item.push_back(c);
    }
  }
  const std::string prefix = base.out.empty() ? "compare" : base.out;
  const qnopt::CompareResult result = qnopt::compare(configs, prefix);
  bool failed = false;
  for (const qnopt::RunResult& r : result.runs) {
    if (r.records.empty()) {
      std::printf("%-8s final train_loss n/a\n", qnopt::to_string(r.config.optimizer).c_str());
    } else {
      std::printf("%-8s final train_loss %.6e\n", qnopt::to_string(r.config.optimizer).c_str(),
                  r.records.back().train_loss);
    }
    failed = failed || r.diverged;
  }
  std::printf("merged table: %s\n", result.merged_path.c_str());
  return failed ? 2 : 0;
}

int cmd_gradcheck(const CommonArgs& args, double tol) {
  const qnopt::RunConfig config = build_config(args);
  const qnopt::GradcheckReport report = qnopt::gradcheck(config, tol);
  std::printf("gradcheck: %zu coordinates, max relative error %.3e (coordinate %zu), tolerance %.3e -> %s\n",
              report.coords, report.max_rel_err, report.worst_coord, report.tolerance,
              report.pass ? "pass" : "FAIL");
  return report.pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qnopt: stochastic quasi-Newton training harness"};
  app.require_subcommand(1);

  CommonArgs run_args;
  CLI::App* run_cmd = app.add_subcommand("run", "run one configuration");
  add_common(run_cmd, run_args);

  CommonArgs cmp_args;
  std::string optimizers;
  CLI::App* cmp_cmd = app.add_subcommand("compare", "run several optimizers on one configuration");
  add_common(cmp_cmd, cmp_args);
  cmp_cmd->add_option("--optimizers", optimizers, "comma-separated optimizer list")->required();

  CommonArgs gc_args;
  double tol = 1e-6;
  CLI::App* gc_cmd = app.add_subcommand("gradcheck", "verify backprop against finite differences");
  add_common(gc_cmd, gc_args);
  gc_cmd->add_option("--tol", tol, "maximum allowed relative error");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return cmd_run(run_args);
    if (cmp_cmd->parsed()) return cmd_compare(cmp_args, optimizers);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc_args, tol);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
