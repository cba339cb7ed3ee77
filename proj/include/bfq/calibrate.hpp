#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bfq/linalg.hpp"
#include "bfq/quant.hpp"
#include "bfq/transform.hpp"

namespace bfq {

enum class Archetype { PositiveTail, NegativeRegion, Boundary, Gaussian };

std::string to_string(Archetype a);
// Error("archetype") listing the valid names on failure.
Archetype parse_archetype(const std::string& name);
inline constexpr const char* kArchetypeNames =
    "positive-tail, negative-region, boundary, gaussian";

/// A layer weight matrix W (m x n) plus activation samples of dim n.
struct CalibrationSet {
  DenseMatrix w;
  std::vector<DenseVector> x;
  std::string archetype;

  std::size_t dim() const noexcept { return w.cols(); }
  void validate() const;
};

/// Quantization applied to the rotated layer: weights and activations share a
/// bit width but are grouped independently. enabled = false turns fake
/// quantization into the identity.
struct QuantConfig {
  int bits = 2;
  Grouping weights = Grouping::per_row();
  Grouping activations = Grouping::per_tensor();
  bool enabled = true;

  QuantScheme weight_scheme() const { return {bits, weights}; }
  QuantScheme activation_scheme() const { return {bits, activations}; }
};

enum class Init { Identity, Hadamard, Random };
std::string to_string(Init init);
Init parse_init(const std::string& name);

struct TrainConfig {
  int steps = 500;
  double lr0 = 0.01;
  double lambda_uniform = 0.1;
  QuantConfig quant;
  Init init = Init::Identity;
  std::uint64_t seed = 0;
  // Soft-histogram temperature in code units (0.25 s^2 in data units).
  double soft_tau = 0.25;
  double random_init_scale = 0.1;
  bool scale_gradient = true;
  // Overrides choose_factorization for non power-of-2 layers.
  std::optional<std::pair<std::size_t, std::size_t>> factorization;

  void validate() const;
};

struct LossTerms {
  double total = 0.0;
  double recon = 0.0;
  double uniform = 0.0;
};

struct TrainReport {
  std::vector<double> loss_curve;
  std::vector<double> recon_curve;
  std::vector<double> uniform_curve;
  std::size_t best_step = 0;
  double wall_seconds = 0.0;

  // Fraction of the total improvement reached within the first k steps.
  double convergence_fraction_at(std::size_t k) const;
};

struct TrainResult {
  Transform params;
  TrainReport report;
};

// ||W x - FQ(W B^T) FQ(B x)||^2. Row r of W B^T is B applied to row r of W.
double recon_loss(const DenseMatrix& w, const DenseVector& x, const Transform& transform,
                  const QuantConfig& quant);

// KL(P || U) of the soft histogram of x_rot against the uniform distribution on
// 2^b bins, after adding 1e-8 to every bin and renormalizing.
double uniform_loss(std::span<const double> x_rot, double scale, int bits, double tau);
// dL/dx_rot of uniform_loss. With scale_path the scale is taken to be
// compute_scale(x_rot, bits) and its dependence on the largest-magnitude entry
// is included; otherwise the scale is held fixed.
std::vector<double> uniform_loss_grad(std::span<const double> x_rot, double scale,
                                      int bits, double tau, bool scale_path = false);

// KL of a probability vector against uniform with the same smoothing.
double kl_to_uniform(std::span<const double> p);

// recon is the summed squared error over samples divided by the summed
// ||W x||^2; uniform is the per-sample mean; total = recon + lambda uniform.
LossTerms total_loss(const DenseMatrix& w, std::span<const DenseVector> xs,
                     const Transform& transform, const TrainConfig& config);

struct LossGrad {
  LossTerms loss;
  // Composite: skew entries then butterfly angles. Butterfly: angles.
  std::vector<double> grad;
};

// Loss and straight-through gradient with respect to the learnable parameters.
LossGrad loss_and_grad(const DenseMatrix& w, std::span<const DenseVector> xs,
                       const Transform& transform, const TrainConfig& config);

std::vector<double> flat_params(const Transform& t);
Transform with_flat_params(const Transform& t, std::span<const double> flat);

// lr0 * (1 + cos(pi step / total)) / 2.
double cosine_lr(int step, int total_steps, double lr0);

// Initial transform for a layer of dimension n under the config.
Transform initial_transform(std::size_t n, const TrainConfig& config);

// Full-batch SGD with a cosine schedule. The returned parameters are the best
// iterate seen; loss_curve[k] is the loss at step k for k < steps and
// loss_curve[steps] is the loss of the returned parameters.
TrainResult train(const CalibrationSet& cal, const TrainConfig& config);

// Standard-normal activations with a fixed 5% channel subset replaced by
// archetype outliers; W is n x n standard normal / sqrt(n).
CalibrationSet gen_synthetic(Archetype archetype, std::size_t n, std::size_t m_samples,
                             std::uint64_t seed);

}  // namespace bfq
