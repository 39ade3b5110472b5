#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>

#include "qnopt/numerics.hpp"

namespace qnopt {

/// Gradient-evaluation ledger. full_grad counts whole-training-set gradient
/// evaluations, batch_grad counts mini-batch ones; loss evaluations are free.
struct EvalCounts {
  std::uint64_t full_grad = 0;
  std::uint64_t batch_grad = 0;
};

/// Stochastic objective: a fixed partition of the training set into
/// num_batches() mini-batches. Counting happens here so epoch drivers cannot
/// misreport their budgets.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::size_t dim() const = 0;
  virtual std::size_t num_batches() const = 0;
  virtual double full_loss(const Vector& w) const = 0;

  Vector full_gradient(const Vector& w) {
    ++counts_.full_grad;
    return eval_full_gradient(w);
  }
  Vector batch_gradient(const Vector& w, std::size_t batch) {
    ++counts_.batch_grad;
    return eval_batch_gradient(w, batch);
  }

  const EvalCounts& counts() const { return counts_; }

 protected:
  virtual Vector eval_full_gradient(const Vector& w) = 0;
  virtual Vector eval_batch_gradient(const Vector& w, std::size_t batch) = 0;

 private:
  EvalCounts counts_;
};

/// Displacement / gradient-difference pair: (s, y) for BFGS, (p, q) for NAQ.
struct CurvaturePair {
  Vector p;
  Vector q;
};

/// Curvature safeguard: q^T p > 1e-8 * ||p|| * ||q||.
bool curvature_ok(const Vector& p, const Vector& q);

/// FIFO buffer of the last m accepted curvature pairs; index 0 is oldest.
class CurvatureBuffer {
 public:
  CurvatureBuffer() : capacity_(1) {}
  explicit CurvatureBuffer(std::size_t capacity);

  /// Rejects (returns false) pairs failing the curvature safeguard; otherwise
  /// appends, evicting the oldest pair when full.
  bool push(CurvaturePair pair);

  std::size_t size() const { return pairs_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return pairs_.empty(); }
  const CurvaturePair& pair(std::size_t i) const { return pairs_.at(i); }

 private:
  std::size_t capacity_;
  std::deque<CurvaturePair> pairs_;
};

/// f_t = grad_at_lookahead - grad_at_snapshot + full_grad, elementwise.
Vector svrg_reduced_gradient(const Vector& grad_at_lookahead, const Vector& grad_at_snapshot,
                             const Vector& full_grad);

/// BFGS-form update with the NAQ (p, q) pair. Applies the curvature safeguard
/// first: returns false and leaves H untouched when the pair is rejected.
bool naq_hessian_update(Matrix& h, const CurvaturePair& pair);

/// Two-loop recursion: -H f where H is the matrix implicitly defined by
/// folding the buffered pairs (oldest first) into the scaled identity. The
/// initial scaling averages p_i^T q_i / q_i^T q_i over the stored pairs; an
/// empty buffer returns -f.
Vector two_loop_direction(const Vector& f, const CurvatureBuffer& buffer);

/// Initial scaling used by two_loop_direction (1.0 for an empty buffer).
double two_loop_initial_scaling(const CurvatureBuffer& buffer);

/// Polynomial decay alpha_0/sqrt(t) over a 1-based step counter (the
/// optimizer states carry it across epochs so decay stays monotone), or a
/// constant alpha_0 for the constant-step methods sharing the epoch drivers.
struct StepSchedule {
  enum class Kind { sqrt_decay, constant };
  double alpha0 = 1.0;
  Kind kind = Kind::sqrt_decay;

  static StepSchedule sqrt_decay(double alpha0) { return {alpha0, Kind::sqrt_decay}; }
  static StepSchedule constant(double alpha0) { return {alpha0, Kind::constant}; }
};

/// alpha_0 / sqrt(t) for t >= 1 (or alpha_0 when constant). t = 0 is an error.
double step_size(const StepSchedule& schedule, std::size_t t);

/// Uniform batch-index stream over [0, n); one draw per inner iteration so
/// optimizers sharing a seed see identical streams.
class BatchStream {
 public:
  BatchStream(Rng rng, std::size_t n) : rng_(rng), n_(n) {}
  std::size_t next() { return static_cast<std::size_t>(rng_.below(n_)); }
  std::size_t num_batches() const { return n_; }

 private:
  Rng rng_;
  std::size_t n_;
};

enum class HessianMode { full, limited, identity };

/// Per-epoch metrics row; the harness fills the test metrics and wall time.
struct RunRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_rmse_or_error = 0.0;
  std::optional<double> test_accuracy;
  std::uint64_t full_grad_evals = 0;       // cumulative
  std::uint64_t minibatch_grad_evals = 0;  // cumulative
  std::uint64_t curvature_skips = 0;       // cumulative
  double wall_time_s = 0.0;
};

/// Test hook: called after every inner iteration with the current iterate.
using StepObserver = std::function<void(std::size_t epoch, std::size_t t, const Vector& x)>;

// ---------------------------------------------------------------------------
// SVRG

struct SvrgState {
  Vector w_prev;
  Vector w_snap;
  Vector full_grad;  // gradient at the snapshot used during the last epoch
  std::size_t epoch = 0;
};

SvrgState make_svrg_state(Vector w0);

/// One SVRG epoch: full gradient at the snapshot, n inner iterations
/// x <- x - alpha * f_t, snapshot advanced to x_n at the end.
RunRecord run_epoch_svrg(SvrgState& state, Objective& objective, BatchStream& batches,
                         double alpha, const StepObserver& observer = {});

// ---------------------------------------------------------------------------
// SVRG+II

struct Svrg2State {
  Vector w_prev;
  Vector w_snap;
  Vector full_grad_prev;  // Omega_k, retained across epochs
  HessianMode mode = HessianMode::limited;
  Matrix h;
  CurvatureBuffer buffer;
  bool h_scaled = false;  // cold-start scaling applied with the first pair
  bool cap_directions = true;
  std::uint64_t curvature_skips = 0;
  std::uint64_t global_step = 0;  // decay counter carries across epochs
  std::size_t epoch = 0;
  bool bootstrap_done = false;
};

Svrg2State make_svrg2_state(Vector w0, HessianMode mode, std::size_t memory);

/// The required first SVRG epoch; fills w_prev/w_snap/full_grad_prev.
RunRecord bootstrap_svrg2(Svrg2State& state, Objective& objective, BatchStream& batches,
                          double alpha, const StepObserver& observer = {});

/// One SVRG+II epoch: curvature pair (s_k, y_k) from stored full gradients,
/// one Hessian update, then n position-only steps x <- x + alpha_t * g_t.
RunRecord run_epoch_svrg2(Svrg2State& state, Objective& objective, BatchStream& batches,
                          const StepSchedule& schedule, const StepObserver& observer = {});

// ---------------------------------------------------------------------------
// SVR-NAQ / SVR-LNAQ

struct SvrNaqState {
  Vector w_prev;  // w_k
  Vector w_snap;  // w_{k+1}
  Vector v;       // epoch-level momentum V_k
  double mu = 0.95;
  HessianMode mode = HessianMode::limited;
  Matrix h;
  CurvatureBuffer buffer;
  bool h_scaled = false;
  bool cap_directions = true;
  std::uint64_t curvature_skips = 0;
  std::uint64_t global_step = 0;  // decay counter carries across epochs
  std::size_t epoch = 0;
  bool bootstrap_done = false;
};

SvrNaqState make_svrnaq_state(Vector w0, double mu, HessianMode mode, std::size_t memory);

/// The required first SVRG epoch; leaves V = 0 with w_prev/w_snap the pre-
/// and post-bootstrap parameters.
RunRecord bootstrap_svrnaq(SvrNaqState& state, Objective& objective, BatchStream& batches,
                           double alpha, const StepObserver& observer = {});

/// One SVR-NAQ epoch: full gradient at the snapshot, epoch-level look-ahead
/// curvature pair (costing one extra full gradient), one Hessian update or
/// buffer push, then n inner iterations
///   f_t = grad_i(x_t + mu v_t) - grad_i(w_snap) + Omega
///   g_t = -H f_t (or the two-loop recursion)
///   v <- mu v + alpha_t g_t,  x <- x + v
/// The Hessian stays fixed throughout the inner loop.
RunRecord run_epoch_svrnaq(SvrNaqState& state, Objective& objective, BatchStream& batches,
                           const StepSchedule& schedule, const StepObserver& observer = {});

// ---------------------------------------------------------------------------
// oNAQ / oLNAQ

struct OnaqState {
  Vector w;
  Vector v;
  double mu = 0.95;
  HessianMode mode = HessianMode::limited;
  Matrix h;
  CurvatureBuffer buffer;
  bool h_scaled = false;
  bool cap_directions = true;
  std::uint64_t curvature_skips = 0;
  std::uint64_t global_step = 0;  // decay counter carries across epochs
  std::size_t epoch = 0;
};

OnaqState make_onaq_state(Vector w0, double mu, HessianMode mode, std::size_t memory);

/// Per-iteration stochastic NAQ: both gradients of each curvature pair come
/// from the same sampled batch; pairs feed the buffer (or dense update) every
/// iteration; the decay counter is global across epochs.
RunRecord run_epoch_onaq(OnaqState& state, Objective& objective, BatchStream& batches,
                         const StepSchedule& schedule, const StepObserver& observer = {});

// ---------------------------------------------------------------------------
// Adam / SGD

struct AdamHyper {
  double alpha = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vector w;
  Vector m;
  Vector v;
  std::uint64_t step = 0;
  std::size_t epoch = 0;
};

AdamState make_adam_state(Vector w0);

RunRecord run_epoch_adam(AdamState& state, Objective& objective, BatchStream& batches,
                         const AdamHyper& hyper, const StepObserver& observer = {});

struct SgdState {
  Vector w;
  std::size_t epoch = 0;
};

SgdState make_sgd_state(Vector w0);

RunRecord run_epoch_sgd(SgdState& state, Objective& objective, BatchStream& batches, double alpha,
                        const StepObserver& observer = {});

}  // namespace qnopt
