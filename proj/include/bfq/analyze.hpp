#pragma once

// Coherence and quantization-error measurements for orthogonal transforms.
//
// Coherence here is the largest absolute entry of an orthogonal matrix, taken
// over all entries (diagonal included): the identity scores 1 and the
// normalized Hadamard matrix reaches the 1/sqrt(n) floor. The compressed
// sensing sampling bound that motivates low coherence (m >= C mu^2 S log n
// measurements for S-sparse recovery) is not computed anywhere in this
// toolkit.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bfq/calibrate.hpp"
#include "bfq/linalg.hpp"
#include "bfq/transform.hpp"

namespace bfq {

struct CoherenceRecord {
  std::string label;
  double mu = 0.0;
};

struct CoherenceProfile {
  std::vector<CoherenceRecord> records;
};

struct ComparisonRow {
  std::string method;
  double recon_mse = 0.0;
  double kl = 0.0;
  double mu = 0.0;
  std::size_t params_count = 0;
  double train_seconds = 0.0;
};

struct QuantError {
  double mse = 0.0;  // summed squared error / summed ||W x||^2
  double kl = 0.0;   // mean hard-bin KL of the rotated activations
};

// max_ij |Q_ij|. Error("not-orthogonal") when max|Q^T Q - I| > 1e-6. Up to
// n = 1024 the check is exact; larger matrices are checked on 16 seeded
// random probes, ||Q^T Q v - v||_inf per unit vector v.
double coherence(const DenseMatrix& q);

QuantError quant_error(const DenseMatrix& w, std::span<const DenseVector> xs,
                       const Transform& transform, const QuantConfig& quant);

// Rows for identity, hadamard (power-of-2 dims only), random and the trained
// butterfly on the same data, sorted by method label.
std::vector<ComparisonRow> compare(const CalibrationSet& cal, const TrainConfig& config);

// Row for an arbitrary labeled transform; train_seconds is left at zero.
ComparisonRow evaluate_method(const std::string& label, const CalibrationSet& cal,
                              const Transform& transform, const QuantConfig& quant);

// (c[0] - min c[0..k]) / (c[0] - min c); 1.0 when the curve never improves.
double convergence_fraction(std::span<const double> loss_curve, std::size_t k);

struct LabeledTransform {
  std::string label;
  Transform transform;
};

CoherenceProfile coherence_profile(std::span<const LabeledTransform> transforms);

}  // namespace bfq
