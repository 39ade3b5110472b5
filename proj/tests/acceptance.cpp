// Acceptance suite: runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion. Exit status is the number of failures.
//
// Criteria 7 and 8 need the UCI files (see tools/fetch_data.sh) under
// $QNOPT_DATA_DIR or ./data. When a file is missing the criterion fails with
// an explanatory message, and the same protocol additionally runs on a
// synthetic surrogate of identical shape so the ordering claims still get
// exercised; the surrogate lines are labeled as such and are not substitutes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "qnopt/data.hpp"
#include "qnopt/harness.hpp"
#include "qnopt/model.hpp"
#include "qnopt/optim.hpp"

using namespace qnopt;

namespace {

int g_failures = 0;

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void report(int id, const std::string& name, bool pass, const std::string& detail,
            double seconds) {
  std::printf("[%s] criterion %2d: %s (%s) [%.1f s]\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              detail.c_str(), seconds);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

// Supplements are informational: they exercise the criterion protocol on
// surrogate data when the real file is absent, but never gate the suite (the
// missing-data criterion failure already does).
void report_supplement(const std::string& name, bool confirms, const std::string& detail,
                       double seconds) {
  std::printf("[info] supplement  : %s %s the expected ordering (%s) [%.1f s]\n", name.c_str(),
              confirms ? "CONFIRMS" : "does NOT confirm", detail.c_str(), seconds);
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1.0});
}

std::string data_file(const std::string& name) {
  const char* env = std::getenv("QNOPT_DATA_DIR");
  const std::string dir = env ? env : "data";
  return dir + "/" + name;
}

// ---------------------------------------------------------------------------

void criterion1_gradient_correctness() {
  Timer timer;
  double worst = 0.0;
  for (const std::vector<std::size_t>& layers :
       {std::vector<std::size_t>{11, 10, 4, 1}, std::vector<std::size_t>{9, 10, 6, 1}}) {
    NetworkSpec net{layers};
    Rng rng(41 + layers.front());
    Vector w = uniform_init(rng, param_count(net), -0.5, 0.5);
    const std::size_t b = 8;
    std::vector<double> x = uniform_init(rng, b * layers.front(), -1.0, 1.0);
    std::vector<double> y = uniform_init(rng, b * 1, -1.0, 1.0);
    Batch batch;
    batch.inputs = std::span<const double>(x.data(), x.size());
    batch.targets = std::span<const double>(y.data(), y.size());
    batch.size = b;
    batch.input_dim = layers.front();
    batch.target_dim = 1;

    const Vector bp = gradient(net, w, batch);
    const double h = 1e-5;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + h;
      const double lp = loss(net, w, batch);
      w[i] = orig - h;
      const double lm = loss(net, w, batch);
      w[i] = orig;
      worst = std::max(worst, rel_err(bp[i], (lp - lm) / (2 * h)));
    }
  }
  const double secs = timer.seconds();
  report(1, "backprop matches central differences on 11-10-4-1 and 9-10-6-1",
         worst < 1e-6 && secs < 5.0, "max rel err " + fmt(worst), secs);
}

void criterion2_secant_identity() {
  Timer timer;
  Rng rng(2026);
  double worst_secant = 0.0, worst_sym = 0.0;
  int updates = 0;
  Matrix h;
  std::size_t d = 0;
  while (updates < 500) {
    if (updates % 25 == 0) {  // fresh chain, new dimension
      d = 2 + static_cast<std::size_t>(rng.below(49));
      h = Matrix::identity(d);
    }
    Vector p = uniform_init(rng, d, -1.0, 1.0);
    Vector q = p;
    const Vector noise = uniform_init(rng, d, -0.5, 0.5);
    axpy(1.0, noise, q);
    if (!curvature_ok(p, q)) continue;
    if (!naq_hessian_update(h, CurvaturePair{p, q})) continue;
    ++updates;
    worst_secant = std::max(worst_secant, norm_inf(sub(matvec(h, q), p)) / norm_inf(p));
    worst_sym = std::max(worst_sym, max_asymmetry(h));
  }
  const double secs = timer.seconds();
  report(2, "500 full-memory updates keep the secant identity and symmetry",
         worst_secant < 1e-10 && worst_sym < 1e-12 && secs < 10.0,
         "worst secant " + fmt(worst_secant) + ", worst asymmetry " + fmt(worst_sym), secs);
}

void criterion3_two_loop_oracle() {
  Timer timer;
  Rng rng(909);
  double worst = 0.0;
  int trials = 0;
  while (trials < 120) {
    const std::size_t d = 2 + static_cast<std::size_t>(rng.below(19));
    const std::size_t m = 1 + static_cast<std::size_t>(rng.below(5));
    CurvatureBuffer buf(m);
    for (std::size_t k = 0; k < m + rng.below(3); ++k) {
      Vector p = uniform_init(rng, d, -1.0, 1.0);
      Vector q = uniform_init(rng, d, -1.0, 1.0);
      if (dot(q, p) <= 1e-3) axpy(2.0, p, q);
      if (dot(q, p) <= 1e-3) continue;
      buf.push({std::move(p), std::move(q)});
    }
    if (buf.empty()) continue;
    ++trials;

    Matrix dense = Matrix::identity(d);
    const double h0 = two_loop_initial_scaling(buf);
    for (std::size_t i = 0; i < d; ++i) dense(i, i) = h0;
    for (std::size_t i = 0; i < buf.size(); ++i) {
      dense = rank_updates_bfgs(dense, buf.pair(i).p, buf.pair(i).q);
    }
    const Vector f = uniform_init(rng, d, -1.0, 1.0);
    const Vector fast = two_loop_direction(f, buf);
    const Vector slow = scaled(matvec(dense, f), -1.0);
    worst = std::max(worst, norm_inf(sub(fast, slow)) / std::max(1e-30, norm_inf(slow)));
  }
  const double secs = timer.seconds();
  report(3, "two-loop recursion equals the dense reconstruction (120 buffers)",
         worst < 1e-10 && secs < 10.0, "worst rel err " + fmt(worst), secs);
}

void criterion4_unbiasedness() {
  Timer timer;
  Dataset data = synth_regression({11, 10, 4, 1}, 200, 17, 0.3);
  NetworkSpec net{{11, 10, 4, 1}};
  ModelObjective obj(net, data, 1);
  const std::size_t n = obj.num_batches();

  Rng rng(5);
  Vector snap = uniform_init(rng, obj.dim(), -0.5, 0.5);
  Vector v = uniform_init(rng, obj.dim(), -0.1, 0.1);
  Vector lookahead = snap;
  axpy(0.95, v, lookahead);

  const Vector omega = obj.full_gradient(snap);
  Vector avg(obj.dim(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector f =
        svrg_reduced_gradient(obj.batch_gradient(lookahead, i), obj.batch_gradient(snap, i), omega);
    axpy(1.0 / static_cast<double>(n), f, avg);
  }
  const double diff = norm_inf(sub(avg, obj.full_gradient(lookahead)));
  const double secs = timer.seconds();
  report(4, "estimator averaged over all 200 single-sample batches is the full gradient",
         n == 200 && diff < 1e-12, "max abs diff " + fmt(diff), secs);
}

void criterion5_reduction_chain() {
  Timer timer;
  const std::uint64_t seed = 303;
  SynthProblem prob = synth_quadratic(172, 40.0, seed, 640, 0.2);
  NetworkSpec net{{172, 1}};

  double worst_naq = 0.0;
  {
    ModelObjective obj_a(net, prob.data, 32);
    ModelObjective obj_b(net, prob.data, 32);
    Rng rng(6);
    const Vector w0 = uniform_init(rng, obj_a.dim(), -0.5, 0.5);
    SvrNaqState naq = make_svrnaq_state(w0, 0.0, HessianMode::full, 4);
    Svrg2State svrg2 = make_svrg2_state(w0, HessianMode::full, 4);
    BatchStream ba(Rng::substream(seed, kBatchStream), obj_a.num_batches());
    BatchStream bb(Rng::substream(seed, kBatchStream), obj_b.num_batches());
    std::vector<Vector> ta, tb;
    StepObserver oa = [&](std::size_t, std::size_t, const Vector& x) { ta.push_back(x); };
    StepObserver ob = [&](std::size_t, std::size_t, const Vector& x) { tb.push_back(x); };
    bootstrap_svrnaq(naq, obj_a, ba, 0.025, oa);
    bootstrap_svrg2(svrg2, obj_b, bb, 0.025, ob);
    for (int e = 0; e < 3; ++e) {
      run_epoch_svrnaq(naq, obj_a, ba, StepSchedule::sqrt_decay(1.0), oa);
      run_epoch_svrg2(svrg2, obj_b, bb, StepSchedule::sqrt_decay(1.0), ob);
    }
    if (ta.size() != tb.size()) {
      report(5, "reduction chain", false, "trajectory lengths differ", timer.seconds());
      return;
    }
    for (std::size_t i = 0; i < ta.size(); ++i) {
      worst_naq = std::max(worst_naq, norm_inf(sub(ta[i], tb[i])));
    }
  }

  double worst_svrg = 0.0;
  {
    ModelObjective obj_a(net, prob.data, 32);
    ModelObjective obj_b(net, prob.data, 32);
    Rng rng(6);
    const Vector w0 = uniform_init(rng, obj_a.dim(), -0.5, 0.5);
    SvrgState svrg = make_svrg_state(w0);
    Svrg2State ident = make_svrg2_state(w0, HessianMode::identity, 1);
    BatchStream ba(Rng::substream(seed, kBatchStream), obj_a.num_batches());
    BatchStream bb(Rng::substream(seed, kBatchStream), obj_b.num_batches());
    std::vector<Vector> ta, tb;
    StepObserver oa = [&](std::size_t, std::size_t, const Vector& x) { ta.push_back(x); };
    StepObserver ob = [&](std::size_t, std::size_t, const Vector& x) { tb.push_back(x); };
    run_epoch_svrg(svrg, obj_a, ba, 0.025, oa);
    bootstrap_svrg2(ident, obj_b, bb, 0.025, ob);
    for (int e = 0; e < 3; ++e) {
      run_epoch_svrg(svrg, obj_a, ba, 0.025, oa);
      run_epoch_svrg2(ident, obj_b, bb, StepSchedule::constant(0.025), ob);
    }
    for (std::size_t i = 0; i < ta.size(); ++i) {
      worst_svrg = std::max(worst_svrg, norm_inf(sub(ta[i], tb[i])));
    }
  }
  const double secs = timer.seconds();
  report(5, "SVR-NAQ(mu=0) == SVRG+II and SVRG+II(H=I) == SVRG, step for step (d=173)",
         worst_naq < 1e-12 && worst_svrg < 1e-12 && secs < 30.0,
         "worst diffs " + fmt(worst_naq) + " / " + fmt(worst_svrg), secs);
}

void criterion6_variance_reduction() {
  Timer timer;
  SynthProblem prob = synth_quadratic(6, 10.0, 91, 240, 0.5);
  NetworkSpec net{{6, 1}};
  ModelObjective obj(net, prob.data, 8);
  const std::size_t n = obj.num_batches();
  Rng rng(23);

  Vector snapshot = prob.optimum;
  axpy(1.0, uniform_init(rng, snapshot.size(), -0.01, 0.01), snapshot);
  Vector x = snapshot;
  axpy(1.0, uniform_init(rng, x.size(), -0.0005, 0.0005), x);

  const Vector omega = obj.full_gradient(snapshot);
  std::vector<Vector> fs, gs;
  Vector mean_f(x.size(), 0.0), mean_g(x.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    fs.push_back(
        svrg_reduced_gradient(obj.batch_gradient(x, i), obj.batch_gradient(snapshot, i), omega));
    gs.push_back(obj.batch_gradient(x, i));
    axpy(1.0 / static_cast<double>(n), fs.back(), mean_f);
    axpy(1.0 / static_cast<double>(n), gs.back(), mean_g);
  }
  double var_f = 0.0, var_g = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    var_f += dot(sub(fs[i], mean_f), sub(fs[i], mean_f));
    var_g += dot(sub(gs[i], mean_g), sub(gs[i], mean_g));
  }
  const double ratio = var_f / var_g;
  report(6, "SVR estimator variance < 0.1x plain mini-batch variance near the optimum",
         ratio < 0.1, "ratio " + fmt(ratio), timer.seconds());
}

// ---------------------------------------------------------------------------

struct OrderingResult {
  bool ok = false;
  std::string detail;
};

RunConfig regression_config(const std::string& dataset, const std::string& name,
                            std::size_t n_features, const TargetSpec& targets,
                            const std::vector<std::size_t>& layers, std::size_t batch) {
  RunConfig c;
  c.dataset = dataset;
  c.name = name;
  c.n_features = n_features;
  c.target_columns = targets;
  c.layers = layers;
  c.batch_size = batch;
  c.memory = 4;
  c.alpha0 = 1.0;
  c.svrg_alpha = 0.025;
  c.epochs = 20;
  return c;
}

double final_train_rmse(RunConfig config, OptimizerKind opt, double mu, std::uint64_t seed) {
  config.optimizer = opt;
  config.mu = mu;
  config.seed = seed;
  config.out.clear();
  const RunResult result = run(config);
  if (result.diverged || result.records.empty()) {
    return std::numeric_limits<double>::infinity();
  }
  return std::sqrt(2.0 * result.records.back().train_loss);
}

// Criterion 7 protocol: (a) svrlnaq < svrg for all seeds at b=32 and b=8;
// (b) svrlnaq < olnaq at b=8 in at least 2 of 3 seeds.
OrderingResult wine_ordering(const RunConfig& base32, const RunConfig& base8) {
  OrderingResult res;
  int beats_svrg = 0, beats_olnaq = 0;
  std::ostringstream detail;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const double naq32 = final_train_rmse(base32, OptimizerKind::svrlnaq, 0.95, seed);
    const double svrg32 = final_train_rmse(base32, OptimizerKind::svrg, 0.95, seed);
    const double naq8 = final_train_rmse(base8, OptimizerKind::svrlnaq, 0.95, seed);
    const double svrg8 = final_train_rmse(base8, OptimizerKind::svrg, 0.95, seed);
    const double onaq8 = final_train_rmse(base8, OptimizerKind::olnaq, 0.95, seed);
    if (naq32 < svrg32 && naq8 < svrg8) ++beats_svrg;
    if (naq8 < onaq8) ++beats_olnaq;
    detail << " s" << seed << "[b32 " << fmt(naq32) << "<" << fmt(svrg32) << "; b8 " << fmt(naq8)
           << "<" << fmt(svrg8) << "," << fmt(onaq8) << "]";
  }
  res.ok = beats_svrg == 3 && beats_olnaq >= 2;
  res.detail = "svrg beaten " + std::to_string(beats_svrg) + "/3, olnaq beaten at b=8 " +
               std::to_string(beats_olnaq) + "/3;" + detail.str();
  return res;
}

// Criterion 8 protocol: svrlnaq (mu=0.85) and olnaq (mu=0.95) both beat adam,
// svrg, and svrg2 in at least 2 of 3 seeds at b=64.
OrderingResult casp_ordering(const RunConfig& base64) {
  OrderingResult res;
  int good_seeds = 0;
  std::ostringstream detail;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const double naq = final_train_rmse(base64, OptimizerKind::svrlnaq, 0.85, seed);
    const double onaq = final_train_rmse(base64, OptimizerKind::olnaq, 0.95, seed);
    const double adam = final_train_rmse(base64, OptimizerKind::adam, 0.0, seed);
    const double svrg = final_train_rmse(base64, OptimizerKind::svrg, 0.0, seed);
    const double svrg2 = final_train_rmse(base64, OptimizerKind::svrg2, 0.0, seed);
    const double others = std::min({adam, svrg, svrg2});
    if (naq < others && onaq < others) ++good_seeds;
    detail << " s" << seed << "[svrlnaq " << fmt(naq) << ", olnaq " << fmt(onaq) << " vs best-other "
           << fmt(others) << "]";
  }
  res.ok = good_seeds >= 2;
  res.detail = std::to_string(good_seeds) + "/3 seeds;" + detail.str();
  return res;
}

void criterion7_wine() {
  Timer timer;
  const std::string path = data_file("winequality-white.csv");
  const std::vector<std::size_t> layers = {11, 10, 4, 1};
  if (std::filesystem::exists(path)) {
    RunConfig b32 = regression_config(path, "wine", 11, TargetSpec::last(), layers, 32);
    RunConfig b8 = regression_config(path, "wine", 11, TargetSpec::last(), layers, 8);
    const OrderingResult r = wine_ordering(b32, b8);
    const double secs = timer.seconds();
    report(7, "wine quality convergence ordering (b=32, b=8; mu=0.95, m=4)",
           r.ok && secs < 300.0, r.detail, secs);
  } else {
    report(7, "wine quality convergence ordering (b=32, b=8; mu=0.95, m=4)", false,
           path + " missing; run tools/fetch_data.sh (no network in this environment)",
           timer.seconds());
    Timer sur;
    const std::string synth = "synth:mlp:layers=11-10-4-1,rows=4898,noise=1.0";
    RunConfig b32 = regression_config(synth, "wine-surrogate", 11, TargetSpec::last(), layers, 32);
    RunConfig b8 = regression_config(synth, "wine-surrogate", 11, TargetSpec::last(), layers, 8);
    const OrderingResult r = wine_ordering(b32, b8);
    report_supplement("criterion-7 protocol on a 4898x11 synthetic surrogate", r.ok, r.detail,
                      sur.seconds());
  }
}

void criterion8_casp() {
  Timer timer;
  const std::string path = data_file("CASP.csv");
  const std::vector<std::size_t> layers = {9, 10, 6, 1};
  if (std::filesystem::exists(path)) {
    RunConfig b64 = regression_config(path, "casp", 9, TargetSpec::first(), layers, 64);
    const OrderingResult r = casp_ordering(b64);
    const double secs = timer.seconds();
    report(8, "CASP convergence ordering (b=64; svrlnaq mu=0.85, olnaq mu=0.95)",
           r.ok && secs < 900.0, r.detail, secs);
  } else {
    report(8, "CASP convergence ordering (b=64; svrlnaq mu=0.85, olnaq mu=0.95)", false,
           path + " missing; run tools/fetch_data.sh (no network in this environment)",
           timer.seconds());
    Timer sur;
    const std::string synth = "synth:mlp:layers=9-10-6-1,rows=45730,noise=1.0";
    RunConfig b64 = regression_config(synth, "casp-surrogate", 9, TargetSpec::first(), layers, 64);
    const OrderingResult r = casp_ordering(b64);
    report_supplement("criterion-8 protocol on a 45730x9 synthetic surrogate", r.ok, r.detail,
                      sur.seconds());
  }
}

void criterion9_determinism() {
  Timer timer;
  RunConfig base;
  base.dataset = "synth:mlp:layers=11-10-4-1,rows=1200,noise=0.5";
  base.name = "determinism";
  base.layers = {11, 10, 4, 1};
  base.batch_size = 32;
  base.memory = 4;
  base.mu = 0.95;
  base.epochs = 8;
  base.seed = 7;
  std::vector<RunConfig> configs;
  for (const char* opt : {"svrg", "svrg2", "svrlnaq", "olnaq", "adam"}) {
    RunConfig c = base;
    c.optimizer = optimizer_from_string(opt);
    configs.push_back(c);
  }
  const auto dir = std::filesystem::temp_directory_path() / "qnopt_acceptance";
  std::filesystem::create_directories(dir);
  const std::string p1 = (dir / "det1").string();
  const std::string p2 = (dir / "det2").string();
  compare(configs, p1);
  compare(configs, p2);

  auto strip_wall = [](const std::string& path) {
    std::ifstream in(path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line[0] != '#' && line.rfind("epoch,", 0) != 0) {
        const auto pos = line.rfind(',');
        if (pos != std::string::npos) line = line.substr(0, pos);
      }
      lines.push_back(line);
    }
    return lines;
  };
  bool identical = true;
  std::string what = "all files byte-identical (wall-time column excluded)";
  for (const char* opt : {"svrg", "svrg2", "svrlnaq", "olnaq", "adam"}) {
    if (strip_wall(p1 + "_" + opt + ".csv") != strip_wall(p2 + "_" + opt + ".csv")) {
      identical = false;
      what = std::string("mismatch in ") + opt;
    }
  }
  if (strip_wall(p1 + "_compare.csv") != strip_wall(p2 + "_compare.csv")) {
    identical = false;
    what = "mismatch in merged table";
  }
  report(9, "two compare invocations produce byte-identical metrics", identical, what,
         timer.seconds());
}

void criterion10_budget() {
  Timer timer;
  Dataset data = synth_regression({11, 10, 4, 1}, 640, 29, 0.3);
  NetworkSpec net{{11, 10, 4, 1}};
  ModelObjective obj(net, data, 32);
  const std::uint64_t n = obj.num_batches();
  Rng rng(4);
  SvrNaqState state =
      make_svrnaq_state(uniform_init(rng, obj.dim(), -0.5, 0.5), 0.95, HessianMode::limited, 4);
  BatchStream batches(Rng::substream(11, kBatchStream), obj.num_batches());
  RunRecord prev = bootstrap_svrnaq(state, obj, batches, 0.025);
  bool exact = prev.full_grad_evals == 1 && prev.minibatch_grad_evals == 2 * n;
  for (int e = 0; e < 4; ++e) {
    const RunRecord rec = run_epoch_svrnaq(state, obj, batches, StepSchedule::sqrt_decay(1.0));
    exact = exact && (rec.full_grad_evals - prev.full_grad_evals == 2) &&
            (rec.minibatch_grad_evals - prev.minibatch_grad_evals == 2 * n);
    prev = rec;
  }
  report(10, "SVR-NAQ epoch costs exactly 2 full and 2n mini-batch gradients", exact,
         "n = " + std::to_string(n), timer.seconds());
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  if (argc > 2 && std::strcmp(argv[1], "--only") == 0) only = std::atoi(argv[2]);

  using CriterionFn = void (*)();
  const CriterionFn criteria[] = {
      criterion1_gradient_correctness, criterion2_secant_identity, criterion3_two_loop_oracle,
      criterion4_unbiasedness,         criterion5_reduction_chain, criterion6_variance_reduction,
      criterion7_wine,                 criterion8_casp,            criterion9_determinism,
      criterion10_budget};
  for (int i = 0; i < 10; ++i) {
    if (only == 0 || only == i + 1) criteria[i]();
  }
  if (g_failures == 0) {
    std::printf("acceptance: all criteria passed\n");
  } else {
    std::printf("acceptance: %d failure(s)\n", g_failures);
  }
  return g_failures;
}
