#include "qnopt/optim.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace qnopt {

namespace {

constexpr double kCurvatureEps = 1e-8;

void notify(const StepObserver& observer, std::size_t epoch, std::size_t t, const Vector& x) {
  if (observer) observer(epoch, t, x);
}

void check_iterate(const Vector& x, std::size_t epoch, std::size_t t) {
  if (!all_finite(x)) {
    throw DivergenceError(epoch, t,
                          "diverged: non-finite iterate at epoch " + std::to_string(epoch) +
                              ", inner iteration " + std::to_string(t));
  }
}

RunRecord finish_record(std::size_t epoch, Objective& objective, const Vector& w,
                        std::uint64_t curvature_skips) {
  RunRecord rec;
  rec.epoch = epoch;
  rec.train_loss = objective.full_loss(w);
  if (!std::isfinite(rec.train_loss)) {
    throw DivergenceError(epoch, objective.num_batches(),
                          "diverged: non-finite training loss at epoch " + std::to_string(epoch));
  }
  rec.full_grad_evals = objective.counts().full_grad;
  rec.minibatch_grad_evals = objective.counts().batch_grad;
  rec.curvature_skips = curvature_skips;
  return rec;
}

/// One SVRG epoch over (w_prev, w_snap); stores the snapshot gradient it used
/// so callers can retain Omega_k across epochs.
void svrg_epoch_core(Vector& w_prev, Vector& w_snap, Vector& full_grad_store, Objective& objective,
                     BatchStream& batches, double alpha, std::size_t epoch,
                     const StepObserver& observer) {
  const std::size_t n = objective.num_batches();
  Vector omega = objective.full_gradient(w_snap);
  check_iterate(omega, epoch, 0);
  Vector x = w_snap;
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t i = batches.next();
    const Vector ga = objective.batch_gradient(x, i);
    const Vector gb = objective.batch_gradient(w_snap, i);
    const Vector f = svrg_reduced_gradient(ga, gb, omega);
    axpy(-alpha, f, x);
    check_iterate(x, epoch, t);
    notify(observer, epoch, t, x);
  }
  w_prev = std::move(w_snap);
  w_snap = std::move(x);
  full_grad_store = std::move(omega);
}

/// Quasi-Newton directions are capped at unit Euclidean norm: epoch-level
/// pairs can transiently overestimate the initial scaling badly enough that
/// the momentum recursion diverges without a cap. A no-op whenever the
/// direction is already short, so exact Newton steps pass through untouched.
void cap_direction(Vector& g) {
  const double nrm = norm2(g);
  if (nrm > 1.0) {
    for (double& v : g) v /= nrm;
  }
}

/// -H f under the state's Hessian mode.
template <typename State>
Vector direction(const State& state, const Vector& f) {
  switch (state.mode) {
    case HessianMode::full: {
      Vector g = matvec(state.h, f);
      for (double& v : g) v = -v;
      if (state.cap_directions) cap_direction(g);
      return g;
    }
    case HessianMode::limited: {
      Vector g = two_loop_direction(f, state.buffer);
      if (state.cap_directions) cap_direction(g);
      return g;
    }
    case HessianMode::identity:
      return scaled(f, -1.0);
  }
  throw ArgumentError("direction: bad Hessian mode");
}

/// Dense update or buffer push; counts rejected pairs. The dense matrix gets
/// the standard cold-start scaling (p^T q / q^T q) I together with its first
/// accepted pair, mirroring the two-loop initial scaling.
template <typename State>
void absorb_pair(State& state, CurvaturePair pair) {
  switch (state.mode) {
    case HessianMode::full:
      if (!curvature_ok(pair.p, pair.q)) {
        ++state.curvature_skips;
        break;
      }
      if (!state.h_scaled) {
        const double gamma = dot(pair.p, pair.q) / dot(pair.q, pair.q);
        for (std::size_t i = 0; i < state.h.rows(); ++i) state.h(i, i) = gamma;
        state.h_scaled = true;
      }
      naq_hessian_update(state.h, pair);
      break;
    case HessianMode::limited:
      if (!state.buffer.push(std::move(pair))) ++state.curvature_skips;
      break;
    case HessianMode::identity:
      break;
  }
}

}  // namespace

bool curvature_ok(const Vector& p, const Vector& q) {
  if (p.size() != q.size()) throw DimensionError("curvature_ok: length mismatch");
  return dot(q, p) > kCurvatureEps * norm2(p) * norm2(q);
}

CurvatureBuffer::CurvatureBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ArgumentError("CurvatureBuffer: capacity must be >= 1");
}

bool CurvatureBuffer::push(CurvaturePair pair) {
  if (pair.p.size() != pair.q.size()) throw DimensionError("CurvatureBuffer: p/q length mismatch");
  if (!curvature_ok(pair.p, pair.q)) return false;
  if (pairs_.size() == capacity_) pairs_.pop_front();
  pairs_.push_back(std::move(pair));
  return true;
}

Vector svrg_reduced_gradient(const Vector& grad_at_lookahead, const Vector& grad_at_snapshot,
                             const Vector& full_grad) {
  if (grad_at_lookahead.size() != grad_at_snapshot.size() ||
      grad_at_lookahead.size() != full_grad.size()) {
    throw DimensionError("svrg_reduced_gradient: length mismatch");
  }
  Vector f(full_grad.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = grad_at_lookahead[i] - grad_at_snapshot[i] + full_grad[i];
  }
  return f;
}

bool naq_hessian_update(Matrix& h, const CurvaturePair& pair) {
  if (!curvature_ok(pair.p, pair.q)) return false;
  h = rank_updates_bfgs(h, pair.p, pair.q);
  return true;
}

double two_loop_initial_scaling(const CurvatureBuffer& buffer) {
  if (buffer.empty()) return 1.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const CurvaturePair& pr = buffer.pair(i);
    acc += dot(pr.p, pr.q) / dot(pr.q, pr.q);
  }
  return acc / static_cast<double>(buffer.size());
}

Vector two_loop_direction(const Vector& f, const CurvatureBuffer& buffer) {
  if (buffer.empty()) return scaled(f, -1.0);
  const std::size_t tau = buffer.size();
  Vector g = f;
  std::vector<double> rho(tau), sigma(tau);
  for (std::size_t i = tau; i-- > 0;) {  // newest to oldest
    const CurvaturePair& pr = buffer.pair(i);
    rho[i] = 1.0 / dot(pr.q, pr.p);
    sigma[i] = rho[i] * dot(pr.p, g);
    axpy(-sigma[i], pr.q, g);
  }
  const double h0 = two_loop_initial_scaling(buffer);
  for (double& v : g) v *= h0;
  for (std::size_t i = 0; i < tau; ++i) {  // oldest to newest
    const CurvaturePair& pr = buffer.pair(i);
    const double beta = rho[i] * dot(pr.q, g);
    axpy(sigma[i] - beta, pr.p, g);
  }
  for (double& v : g) v = -v;
  return g;
}

double step_size(const StepSchedule& schedule, std::size_t t) {
  if (t == 0) throw ArgumentError("step_size: counter is 1-based");
  if (schedule.kind == StepSchedule::Kind::constant) return schedule.alpha0;
  return schedule.alpha0 / std::sqrt(static_cast<double>(t));
}

// ---------------------------------------------------------------------------

SvrgState make_svrg_state(Vector w0) {
  SvrgState s;
  s.w_prev = w0;
  s.w_snap = std::move(w0);
  return s;
}

RunRecord run_epoch_svrg(SvrgState& state, Objective& objective, BatchStream& batches,
                         double alpha, const StepObserver& observer) {
  const std::size_t epoch = state.epoch + 1;
  svrg_epoch_core(state.w_prev, state.w_snap, state.full_grad, objective, batches, alpha, epoch,
                  observer);
  state.epoch = epoch;
  return finish_record(epoch, objective, state.w_snap, 0);
}

// ---------------------------------------------------------------------------

Svrg2State make_svrg2_state(Vector w0, HessianMode mode, std::size_t memory) {
  Svrg2State s;
  s.mode = mode;
  if (mode == HessianMode::full) s.h = Matrix::identity(w0.size());
  s.buffer = CurvatureBuffer(mode == HessianMode::limited ? memory : 1);
  s.w_prev = w0;
  s.w_snap = std::move(w0);
  return s;
}

RunRecord bootstrap_svrg2(Svrg2State& state, Objective& objective, BatchStream& batches,
                          double alpha, const StepObserver& observer) {
  if (state.bootstrap_done) throw ArgumentError("bootstrap_svrg2: already bootstrapped");
  const std::size_t epoch = state.epoch + 1;
  svrg_epoch_core(state.w_prev, state.w_snap, state.full_grad_prev, objective, batches, alpha,
                  epoch, observer);
  state.epoch = epoch;
  state.bootstrap_done = true;
  return finish_record(epoch, objective, state.w_snap, state.curvature_skips);
}

RunRecord run_epoch_svrg2(Svrg2State& state, Objective& objective, BatchStream& batches,
                          const StepSchedule& schedule, const StepObserver& observer) {
  if (!state.bootstrap_done) throw ArgumentError("run_epoch_svrg2: bootstrap epoch required");
  const std::size_t epoch = state.epoch + 1;
  const std::size_t n = objective.num_batches();

  Vector omega = objective.full_gradient(state.w_snap);
  check_iterate(omega, epoch, 0);
  CurvaturePair pair;
  pair.p = sub(state.w_snap, state.w_prev);            // s_k
  pair.q = sub(omega, state.full_grad_prev);           // y_k from stored full gradients
  absorb_pair(state, std::move(pair));

  Vector x = state.w_snap;
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t i = batches.next();
    const Vector ga = objective.batch_gradient(x, i);
    const Vector gb = objective.batch_gradient(state.w_snap, i);
    const Vector f = svrg_reduced_gradient(ga, gb, omega);
    const Vector g = direction(state, f);
    axpy(step_size(schedule, ++state.global_step), g, x);
    check_iterate(x, epoch, t);
    notify(observer, epoch, t, x);
  }
  state.w_prev = std::move(state.w_snap);
  state.w_snap = std::move(x);
  state.full_grad_prev = std::move(omega);
  state.epoch = epoch;
  return finish_record(epoch, objective, state.w_snap, state.curvature_skips);
}

// ---------------------------------------------------------------------------

SvrNaqState make_svrnaq_state(Vector w0, double mu, HessianMode mode, std::size_t memory) {
  if (!(mu >= 0.0 && mu < 1.0)) throw ArgumentError("make_svrnaq_state: mu must be in [0,1)");
  SvrNaqState s;
  s.mu = mu;
  s.mode = mode;
  if (mode == HessianMode::full) s.h = Matrix::identity(w0.size());
  s.buffer = CurvatureBuffer(mode == HessianMode::limited ? memory : 1);
  s.v.assign(w0.size(), 0.0);
  s.w_prev = w0;
  s.w_snap = std::move(w0);
  return s;
}

RunRecord bootstrap_svrnaq(SvrNaqState& state, Objective& objective, BatchStream& batches,
                           double alpha, const StepObserver& observer) {
  if (state.bootstrap_done) throw ArgumentError("bootstrap_svrnaq: already bootstrapped");
  const std::size_t epoch = state.epoch + 1;
  Vector omega_unused;
  svrg_epoch_core(state.w_prev, state.w_snap, omega_unused, objective, batches, alpha, epoch,
                  observer);
  state.epoch = epoch;
  state.bootstrap_done = true;
  return finish_record(epoch, objective, state.w_snap, state.curvature_skips);
}

RunRecord run_epoch_svrnaq(SvrNaqState& state, Objective& objective, BatchStream& batches,
                           const StepSchedule& schedule, const StepObserver& observer) {
  if (!state.bootstrap_done) throw ArgumentError("run_epoch_svrnaq: bootstrap epoch required");
  const std::size_t epoch = state.epoch + 1;
  const std::size_t n = objective.num_batches();
  const double mu = state.mu;

  Vector omega = objective.full_gradient(state.w_snap);  // Omega_{k+1}
  check_iterate(omega, epoch, 0);

  // Epoch-level look-ahead pair; the second full gradient of the epoch.
  Vector lookahead = state.w_prev;
  axpy(mu, state.v, lookahead);
  const Vector grad_lookahead = objective.full_gradient(lookahead);
  CurvaturePair pair;
  pair.p = sub(state.w_snap, lookahead);
  pair.q = sub(omega, grad_lookahead);
  absorb_pair(state, std::move(pair));

  Vector x = state.w_snap;
  Vector vt = state.v;
  Vector xla(x.size());
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t i = batches.next();
    for (std::size_t j = 0; j < x.size(); ++j) xla[j] = x[j] + mu * vt[j];
    const Vector ga = objective.batch_gradient(xla, i);
    const Vector gb = objective.batch_gradient(state.w_snap, i);
    const Vector f = svrg_reduced_gradient(ga, gb, omega);
    const Vector g = direction(state, f);
    const double alpha_t = step_size(schedule, ++state.global_step);
    for (std::size_t j = 0; j < x.size(); ++j) {
      vt[j] = mu * vt[j] + alpha_t * g[j];
      x[j] += vt[j];
    }
    check_iterate(x, epoch, t);
    notify(observer, epoch, t, x);
  }
  state.v = std::move(vt);
  state.w_prev = std::move(state.w_snap);
  state.w_snap = std::move(x);
  state.epoch = epoch;
  return finish_record(epoch, objective, state.w_snap, state.curvature_skips);
}

// ---------------------------------------------------------------------------

OnaqState make_onaq_state(Vector w0, double mu, HessianMode mode, std::size_t memory) {
  if (!(mu >= 0.0 && mu < 1.0)) throw ArgumentError("make_onaq_state: mu must be in [0,1)");
  OnaqState s;
  s.mu = mu;
  s.mode = mode;
  if (mode == HessianMode::full) s.h = Matrix::identity(w0.size());
  s.buffer = CurvatureBuffer(mode == HessianMode::limited ? memory : 1);
  s.v.assign(w0.size(), 0.0);
  s.w = std::move(w0);
  return s;
}

RunRecord run_epoch_onaq(OnaqState& state, Objective& objective, BatchStream& batches,
                         const StepSchedule& schedule, const StepObserver& observer) {
  const std::size_t epoch = state.epoch + 1;
  const std::size_t n = objective.num_batches();
  const double mu = state.mu;
  Vector lookahead(state.w.size());
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t i = batches.next();
    for (std::size_t j = 0; j < state.w.size(); ++j) lookahead[j] = state.w[j] + mu * state.v[j];
    const Vector grad_lookahead = objective.batch_gradient(lookahead, i);
    Vector g = direction(state, grad_lookahead);
    // oNAQ normalizes the search direction every iteration, so each update
    // has magnitude alpha_t regardless of gradient scale.
    const double gn = norm2(g);
    if (gn > 0.0) {
      for (double& v : g) v /= gn;
    }
    const double alpha_t = step_size(schedule, ++state.global_step);
    Vector w_next(state.w.size());
    for (std::size_t j = 0; j < state.w.size(); ++j) {
      state.v[j] = mu * state.v[j] + alpha_t * g[j];
      w_next[j] = state.w[j] + state.v[j];
    }
    // Both pair gradients come from the batch sampled this iteration.
    const Vector grad_next = objective.batch_gradient(w_next, i);
    CurvaturePair pair;
    pair.p = sub(w_next, lookahead);
    pair.q = sub(grad_next, grad_lookahead);
    absorb_pair(state, std::move(pair));
    state.w = std::move(w_next);
    check_iterate(state.w, epoch, t);
    notify(observer, epoch, t, state.w);
  }
  state.epoch = epoch;
  return finish_record(epoch, objective, state.w, state.curvature_skips);
}

// ---------------------------------------------------------------------------

AdamState make_adam_state(Vector w0) {
  AdamState s;
  s.m.assign(w0.size(), 0.0);
  s.v.assign(w0.size(), 0.0);
  s.w = std::move(w0);
  return s;
}

RunRecord run_epoch_adam(AdamState& state, Objective& objective, BatchStream& batches,
                         const AdamHyper& hyper, const StepObserver& observer) {
  const std::size_t epoch = state.epoch + 1;
  const std::size_t n = objective.num_batches();
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t i = batches.next();
    const Vector g = objective.batch_gradient(state.w, i);
    ++state.step;
    const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
    for (std::size_t j = 0; j < state.w.size(); ++j) {
      state.m[j] = hyper.beta1 * state.m[j] + (1.0 - hyper.beta1) * g[j];
      state.v[j] = hyper.beta2 * state.v[j] + (1.0 - hyper.beta2) * g[j] * g[j];
      const double mhat = state.m[j] / c1;
      const double vhat = state.v[j] / c2;
      state.w[j] -= hyper.alpha * mhat / (std::sqrt(vhat) + hyper.eps);
    }
    check_iterate(state.w, epoch, t);
    notify(observer, epoch, t, state.w);
  }
  state.epoch = epoch;
  return finish_record(epoch, objective, state.w, 0);
}

SgdState make_sgd_state(Vector w0) {
  SgdState s;
  s.w = std::move(w0);
  return s;
}

RunRecord run_epoch_sgd(SgdState& state, Objective& objective, BatchStream& batches, double alpha,
                        const StepObserver& observer) {
  const std::size_t epoch = state.epoch + 1;
  const std::size_t n = objective.num_batches();
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t i = batches.next();
    const Vector g = objective.batch_gradient(state.w, i);
    axpy(-alpha, g, state.w);
    check_iterate(state.w, epoch, t);
    notify(observer, epoch, t, state.w);
  }
  state.epoch = epoch;
  return finish_record(epoch, objective, state.w, 0);
}

}  // namespace qnopt
