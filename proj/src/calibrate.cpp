#include "bfq/calibrate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "bfq/analyze.hpp"
#include "bfq/error.hpp"
#include "bfq/rng.hpp"

namespace bfq {

namespace {

constexpr double kSmoothing = 1e-8;

struct Fq {
  std::vector<double> values;
  std::vector<std::uint8_t> mask;
  std::vector<double> scales;
};

Fq maybe_fake_quant(std::span<const double> x, std::size_t rows, std::size_t cols,
                    const QuantScheme& scheme, bool enabled) {
  if (enabled) {
    auto r = fake_quant(x, rows, cols, scheme);
    return {std::move(r.values), std::move(r.mask), std::move(r.scales)};
  }
  Fq out;
  out.values.assign(x.begin(), x.end());
  out.mask.assign(x.size(), 1);
  return out;
}

// Applies B to every row of W, giving W B^T.
DenseMatrix rotate_weights(const DenseMatrix& w, const Transform& t) {
  DenseMatrix out = w;
  for (std::size_t r = 0; r < out.rows(); ++r) t.apply_inplace(out.row(r));
  return out;
}

DenseVector layer_output(const DenseMatrix& w, const DenseVector& x) { return mat_vec(w, x); }

// Gradient plumbing over the learnable transform kinds.
class Backprop {
 public:
  explicit Backprop(const Transform& t) : t_(t) {
    if (const auto* b = t.butterfly()) {
      grad_angles_.assign(b->angles.size(), 0.0);
    } else if (const auto* c = t.composite()) {
      work_.emplace(*c);
      grad_q1_ = DenseMatrix(c->d1, c->d1);
      grad_angles_.assign(c->b2.angles.size(), 0.0);
    } else {
      throw Error("config", "dense transforms have no learnable parameters");
    }
    scratch_.resize(t.dim());
  }

  void accumulate(std::span<const double> x, std::span<const double> grad_out) {
    if (const auto* b = t_.butterfly()) {
      butterfly_backward_accumulate(*b, x, grad_out, grad_angles_, scratch_);
    } else {
      kron_backward_accumulate(*work_, x, grad_out, grad_q1_, grad_angles_, scratch_);
    }
  }

  std::vector<double> finish() const {
    if (const auto* c = t_.composite()) {
      std::vector<double> out = cayley_backward(c->q1, grad_q1_);
      out.insert(out.end(), grad_angles_.begin(), grad_angles_.end());
      return out;
    }
    return grad_angles_;
  }

 private:
  const Transform& t_;
  std::optional<CompositeWork> work_;
  DenseMatrix grad_q1_;
  std::vector<double> grad_angles_;
  std::vector<double> scratch_;
};

void check_layer(const DenseMatrix& w, std::span<const DenseVector> xs,
                 const Transform& t) {
  if (xs.empty()) throw Error("empty", "no calibration samples");
  if (w.cols() != t.dim()) {
    throw Error("shape", "weight columns " + std::to_string(w.cols()) +
                             " do not match transform dim " + std::to_string(t.dim()));
  }
  for (std::size_t s = 0; s < xs.size(); ++s) {
    if (xs[s].dim() != w.cols()) {
      throw Error("shape", "sample " + std::to_string(s) + " has dim " +
                               std::to_string(xs[s].dim()) + ", expected " +
                               std::to_string(w.cols()));
    }
  }
}

// Loss (and, when backprop is given, gradients) for one parameter setting.
LossTerms evaluate(const DenseMatrix& w, std::span<const DenseVector> xs,
                   const Transform& t, const TrainConfig& config, Backprop* backprop) {
  check_layer(w, xs, t);
  const QuantConfig& q = config.quant;
  const std::size_t m = w.rows();
  const std::size_t n = w.cols();

  const DenseMatrix w_rot = rotate_weights(w, t);
  const Fq wq = maybe_fake_quant(w_rot.span(), m, n, q.weight_scheme(), q.enabled);
  const DenseMatrix w_hat(m, n, wq.values);

  std::vector<DenseVector> ys;
  ys.reserve(xs.size());
  double energy = 0.0;
  for (const auto& x : xs) {
    ys.push_back(layer_output(w, x));
    energy += norm2(ys.back().span()) * norm2(ys.back().span());
  }
  const double denom = energy > 0.0 ? energy : 1.0;
  const double inv_samples = 1.0 / static_cast<double>(xs.size());

  double sq_err = 0.0;
  double uniform = 0.0;
  std::vector<double> grad_w_hat;
  if (backprop) grad_w_hat.assign(m * n, 0.0);

  for (std::size_t s = 0; s < xs.size(); ++s) {
    DenseVector x_rot = t.apply(xs[s]);
    const Fq xq =
        maybe_fake_quant(x_rot.span(), 1, n, q.activation_scheme(), q.enabled);
    std::vector<double> r(m);
    double err = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = w_hat.row(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += row[j] * xq.values[j];
      r[i] = ys[s][i] - acc;
      err += r[i] * r[i];
    }
    sq_err += err;

    const double scale = compute_scale(x_rot.span(), q.bits);
    uniform += uniform_loss(x_rot.span(), scale, q.bits, config.soft_tau);

    if (backprop) {
      // d(err / denom)/d x_hat = -2 W_hat^T r / denom; d/d W_hat = -2 r x_hat^T / denom.
      std::vector<double> g(n, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        const double ri = -2.0 * r[i] / denom;
        const auto row = w_hat.row(i);
        double* gw = grad_w_hat.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
          g[j] += ri * row[j];
          gw[j] += ri * xq.values[j];
        }
      }
      if (q.enabled) {
        g = fake_quant_backward(x_rot.span(), 1, n, q.activation_scheme(), g,
                                config.scale_gradient);
      }
      if (config.lambda_uniform != 0.0) {
        const auto gu = uniform_loss_grad(x_rot.span(), scale, q.bits, config.soft_tau,
                                            config.scale_gradient);
        const double f = config.lambda_uniform * inv_samples;
        for (std::size_t j = 0; j < n; ++j) g[j] += f * gu[j];
      }
      backprop->accumulate(xs[s].span(), g);
    }
  }

  if (backprop) {
    if (q.enabled) {
      grad_w_hat = fake_quant_backward(w_rot.span(), m, n, q.weight_scheme(), grad_w_hat,
                                       config.scale_gradient);
    }
    for (std::size_t i = 0; i < m; ++i) {
      backprop->accumulate(w.row(i), std::span<const double>(grad_w_hat).subspan(i * n, n));
    }
  }

  LossTerms terms;
  terms.recon = sq_err / denom;
  terms.uniform = uniform * inv_samples;
  terms.total = terms.recon + config.lambda_uniform * terms.uniform;
  return terms;
}

bool finite(const LossTerms& l) {
  return std::isfinite(l.total) && std::isfinite(l.recon) && std::isfinite(l.uniform);
}

}  // namespace

std::string to_string(Archetype a) {
  switch (a) {
    case Archetype::PositiveTail:
      return "positive-tail";
    case Archetype::NegativeRegion:
      return "negative-region";
    case Archetype::Boundary:
      return "boundary";
    case Archetype::Gaussian:
      return "gaussian";
  }
  return "?";
}

Archetype parse_archetype(const std::string& name) {
  for (auto a : {Archetype::PositiveTail, Archetype::NegativeRegion, Archetype::Boundary,
                 Archetype::Gaussian}) {
    if (to_string(a) == name) return a;
  }
  throw Error("archetype",
              "unknown archetype '" + name + "'; valid: " + kArchetypeNames);
}

std::string to_string(Init init) {
  switch (init) {
    case Init::Identity:
      return "identity";
    case Init::Hadamard:
      return "hadamard";
    case Init::Random:
      return "random";
  }
  return "?";
}

Init parse_init(const std::string& name) {
  for (auto i : {Init::Identity, Init::Hadamard, Init::Random}) {
    if (to_string(i) == name) return i;
  }
  throw Error("init", "unknown init '" + name + "'; valid: identity, hadamard, random");
}

void CalibrationSet::validate() const {
  if (x.empty()) throw Error("empty", "calibration set has no samples");
  for (std::size_t s = 0; s < x.size(); ++s) {
    if (x[s].dim() != w.cols()) {
      throw Error("shape", "sample " + std::to_string(s) + " dim does not match W");
    }
  }
}

void TrainConfig::validate() const {
  if (steps < 0) throw Error("config", "steps must be >= 0");
  if (!(lr0 > 0)) throw Error("config", "lr0 must be positive");
  if (!(lambda_uniform >= 0)) throw Error("config", "lambda_uniform must be >= 0");
  if (!(soft_tau > 0)) throw Error("config", "soft_tau must be positive");
  if (!(random_init_scale > 0)) throw Error("config", "random_init_scale must be positive");
  quant.weight_scheme().validate();
  quant.activation_scheme().validate();
}

double TrainReport::convergence_fraction_at(std::size_t k) const {
  return convergence_fraction(loss_curve, k);
}

double recon_loss(const DenseMatrix& w, const DenseVector& x, const Transform& transform,
                  const QuantConfig& quant) {
  const DenseVector xs[] = {x};
  check_layer(w, xs, transform);
  const std::size_t m = w.rows();
  const std::size_t n = w.cols();
  const DenseMatrix w_rot = rotate_weights(w, transform);
  const Fq wq = maybe_fake_quant(w_rot.span(), m, n, quant.weight_scheme(), quant.enabled);
  const DenseVector x_rot = transform.apply(x);
  const Fq xq =
      maybe_fake_quant(x_rot.span(), 1, n, quant.activation_scheme(), quant.enabled);
  const DenseVector y = layer_output(w, x);
  double err = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += wq.values[i * n + j] * xq.values[j];
    const double d = y[i] - acc;
    err += d * d;
  }
  return err;
}

double kl_to_uniform(std::span<const double> p) {
  const double k = static_cast<double>(p.size());
  double z = 0.0;
  for (double v : p) z += v + kSmoothing;
  double kl = 0.0;
  for (double v : p) {
    const double q = (v + kSmoothing) / z;
    kl += q * std::log(k * q);
  }
  return std::max(kl, 0.0);
}

double uniform_loss(std::span<const double> x_rot, double scale, int bits, double tau) {
  return kl_to_uniform(soft_histogram(x_rot, scale, bits, tau));
}

std::vector<double> uniform_loss_grad(std::span<const double> x_rot, double scale,
                                      int bits, double tau, bool scale_path) {
  const auto p = soft_histogram(x_rot, scale, bits, tau);
  const double k = static_cast<double>(p.size());
  double z = 0.0;
  for (double v : p) z += v + kSmoothing;
  double kl = 0.0;
  for (double v : p) {
    const double q = (v + kSmoothing) / z;
    kl += q * std::log(k * q);
  }
  std::vector<double> grad_p(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = (p[i] + kSmoothing) / z;
    grad_p[i] = (std::log(k * q) - kl) / z;
  }
  auto grad = soft_histogram_backward(x_rot, scale, bits, tau, grad_p);
  if (scale_path && !x_rot.empty()) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < x_rot.size(); ++i) {
      if (std::abs(x_rot[i]) > std::abs(x_rot[arg])) arg = i;
    }
    if (x_rot[arg] != 0.0) {
      // Logits depend on x / s, so dL/ds = -sum_i x_i dL/dx_i / s.
      double d_scale = 0.0;
      for (std::size_t i = 0; i < x_rot.size(); ++i) d_scale -= x_rot[i] * grad[i];
      d_scale /= scale;
      const double qmax = static_cast<double>((1 << (bits - 1)) - 1);
      grad[arg] += d_scale * (x_rot[arg] > 0 ? 1.0 : -1.0) / qmax;
    }
  }
  return grad;
}

LossTerms total_loss(const DenseMatrix& w, std::span<const DenseVector> xs,
                     const Transform& transform, const TrainConfig& config) {
  return evaluate(w, xs, transform, config, nullptr);
}

LossGrad loss_and_grad(const DenseMatrix& w, std::span<const DenseVector> xs,
                       const Transform& transform, const TrainConfig& config) {
  Backprop bp(transform);
  LossGrad out;
  out.loss = evaluate(w, xs, transform, config, &bp);
  out.grad = bp.finish();
  return out;
}

std::vector<double> flat_params(const Transform& t) {
  if (const auto* b = t.butterfly()) return b->angles;
  if (const auto* c = t.composite()) {
    std::vector<double> out = c->q1.skew;
    out.insert(out.end(), c->b2.angles.begin(), c->b2.angles.end());
    return out;
  }
  return {};
}

Transform with_flat_params(const Transform& t, std::span<const double> flat) {
  if (flat.size() != t.learnable_count()) {
    throw Error("shape", "flat parameter vector has wrong length");
  }
  if (const auto* b = t.butterfly()) {
    ButterflyParams p = *b;
    std::copy(flat.begin(), flat.end(), p.angles.begin());
    return Transform(std::move(p));
  }
  if (const auto* c = t.composite()) {
    CompositeParams p = *c;
    const std::size_t ns = p.q1.skew.size();
    std::copy(flat.begin(), flat.begin() + ns, p.q1.skew.begin());
    std::copy(flat.begin() + ns, flat.end(), p.b2.angles.begin());
    return Transform(std::move(p));
  }
  return t;
}

double cosine_lr(int step, int total_steps, double lr0) {
  if (step < 0 || step > total_steps) {
    throw Error("step", "step " + std::to_string(step) + " outside 0.." +
                            std::to_string(total_steps));
  }
  if (total_steps == 0) return lr0;
  return lr0 * 0.5 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total_steps));
}

Transform initial_transform(std::size_t n, const TrainConfig& config) {
  auto make_butterfly = [&](std::size_t dim) {
    switch (config.init) {
      case Init::Hadamard:
        return init_hadamard(dim);
      case Init::Random:
        return init_random(dim, config.seed, config.random_init_scale);
      case Init::Identity:
        break;
    }
    return init_identity(dim);
  };
  std::pair<std::size_t, std::size_t> f;
  if (config.factorization) {
    f = *config.factorization;
    if (f.first * f.second != n || !is_power_of_two(f.second)) {
      throw Error("config", "factorization " + std::to_string(f.first) + "x" +
                                std::to_string(f.second) + " does not fit dim " +
                                std::to_string(n));
    }
  } else {
    f = choose_factorization(n);
  }
  if (f.first == 1) return Transform(make_butterfly(n));

  CompositeParams c;
  c.d1 = f.first;
  c.d2 = f.second;
  c.q1 = CayleyParams::zero(f.first);
  if (config.init == Init::Random) {
    Rng rng(config.seed ^ 0x5bd1e995ULL);
    for (double& v : c.q1.skew) v = rng.uniform(-config.random_init_scale,
                                                config.random_init_scale);
  }
  c.b2 = make_butterfly(f.second);
  return Transform(std::move(c));
}

TrainResult train(const CalibrationSet& cal, const TrainConfig& config) {
  config.validate();
  cal.validate();
  const auto t0 = std::chrono::steady_clock::now();

  Transform current = initial_transform(cal.dim(), config);
  std::vector<double> theta = flat_params(current);

  TrainReport report;
  report.loss_curve.reserve(config.steps + 1);
  Transform best = current;
  LossTerms best_loss;
  best_loss.total = std::numeric_limits<double>::infinity();

  auto consider = [&](const LossTerms& l, std::size_t step) {
    if (!finite(l)) {
      throw Error("diverged", "non-finite loss at step " + std::to_string(step));
    }
    if (l.total < best_loss.total) {
      best_loss = l;
      best = current;
      report.best_step = step;
    }
  };

  for (int step = 0; step < config.steps; ++step) {
    const LossGrad lg = loss_and_grad(cal.w, cal.x, current, config);
    consider(lg.loss, static_cast<std::size_t>(step));
    report.loss_curve.push_back(lg.loss.total);
    report.recon_curve.push_back(lg.loss.recon);
    report.uniform_curve.push_back(lg.loss.uniform);

    const double lr = cosine_lr(step, config.steps, config.lr0);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      if (!std::isfinite(lg.grad[i])) {
        throw Error("diverged", "non-finite gradient at step " + std::to_string(step));
      }
      theta[i] -= lr * lg.grad[i];
      if (!std::isfinite(theta[i])) {
        throw Error("diverged", "non-finite parameter at step " + std::to_string(step));
      }
    }
    current = with_flat_params(current, theta);
  }
  consider(total_loss(cal.w, cal.x, current, config),
           static_cast<std::size_t>(config.steps));
  report.loss_curve.push_back(best_loss.total);
  report.recon_curve.push_back(best_loss.recon);
  report.uniform_curve.push_back(best_loss.uniform);

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return TrainResult{std::move(best), std::move(report)};
}

CalibrationSet gen_synthetic(Archetype archetype, std::size_t n, std::size_t m_samples,
                             std::uint64_t seed) {
  if (n < 2) throw Error("dimension", "synthetic layers need n >= 2");
  if (m_samples < 1) throw Error("empty", "need at least one sample");
  Rng rng(seed);

  CalibrationSet cal;
  cal.archetype = to_string(archetype);
  cal.w = DenseMatrix(n, n);
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
  for (double& v : cal.w.span()) v = rng.normal() * inv_sqrt_n;

  // Partial Fisher-Yates for the 5% outlier channels.
  const std::size_t k =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.05 * n)));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(order[i], order[j]);
  }
  // outlier_rank[c] = position of channel c in the subset, or -1.
  std::vector<long> outlier_rank(n, -1);
  for (std::size_t i = 0; i < k; ++i) outlier_rank[order[i]] = static_cast<long>(i);

  constexpr double kMagnitude = 10.0;
  cal.x.reserve(m_samples);
  for (std::size_t s = 0; s < m_samples; ++s) {
    DenseVector x(n);
    for (std::size_t c = 0; c < n; ++c) {
      double v = rng.normal();
      const long rank = outlier_rank[c];
      if (rank >= 0) {
        switch (archetype) {
          case Archetype::PositiveTail:
            v = std::abs(rng.normal()) * kMagnitude;
            break;
          case Archetype::NegativeRegion:
            v = -std::abs(rng.normal()) * kMagnitude;
            break;
          case Archetype::Boundary:
            v = (rank % 2 == 0) ? kMagnitude : -kMagnitude;
            break;
          case Archetype::Gaussian:
            break;
        }
      }
      x[c] = v;
    }
    cal.x.push_back(std::move(x));
  }
  return cal;
}

}  // namespace bfq
