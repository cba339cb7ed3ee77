#include "bfq/analyze.hpp"

#include <algorithm>
#include <cmath>

#include "bfq/error.hpp"
#include "bfq/rng.hpp"

namespace bfq {

namespace {

constexpr double kOrthoTolerance = 1e-6;
constexpr std::size_t kExactCheckLimit = 1024;
constexpr int kProbes = 16;

double probe_deviation(const DenseMatrix& q) {
  const std::size_t n = q.rows();
  Rng rng(0x0c0ffee);
  double worst = 0.0;
  for (int p = 0; p < kProbes; ++p) {
    DenseVector v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = rng.normal();
    const double nv = norm2(v.span());
    for (std::size_t i = 0; i < n; ++i) v[i] /= nv;
    const DenseVector qv = mat_vec(q, v);
    // Q^T (Q v), accumulated row by row.
    std::vector<double> back(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = q.row(i);
      for (std::size_t j = 0; j < n; ++j) back[j] += row[j] * qv[i];
    }
    for (std::size_t j = 0; j < n; ++j) worst = std::max(worst, std::abs(back[j] - v[j]));
  }
  return worst;
}

}  // namespace

double coherence(const DenseMatrix& q) {
  if (q.rows() != q.cols() || q.rows() == 0) {
    throw Error("shape", "coherence needs a non-empty square matrix");
  }
  const double dev = q.rows() <= kExactCheckLimit ? orthogonality_deviation(q)
                                                  : probe_deviation(q);
  if (dev > kOrthoTolerance) {
    throw Error("not-orthogonal",
                "max |Q^T Q - I| = " + std::to_string(dev) + " exceeds 1e-6");
  }
  return max_abs(q.span());
}

QuantError quant_error(const DenseMatrix& w, std::span<const DenseVector> xs,
                       const Transform& transform, const QuantConfig& quant) {
  if (xs.empty()) throw Error("empty", "no samples");
  if (w.cols() != transform.dim()) {
    throw Error("shape", "weight columns do not match transform dim");
  }
  double err = 0.0;
  double energy = 0.0;
  double kl = 0.0;
  for (const auto& x : xs) {
    if (x.dim() != w.cols()) throw Error("shape", "sample dim does not match W");
    err += recon_loss(w, x, transform, quant);
    const DenseVector y = mat_vec(w, x);
    energy += norm2(y.span()) * norm2(y.span());

    const DenseVector x_rot = transform.apply(x);
    const QuantScheme scheme = quant.activation_scheme();
    const auto fq = fake_quant(x_rot.span(), 1, x_rot.dim(), scheme);
    // Codes follow from the group scales used by fake_quant.
    std::vector<std::int32_t> codes;
    codes.reserve(x_rot.dim());
    const std::size_t group = x_rot.dim() / fq.scales.size();
    for (std::size_t g = 0; g < fq.scales.size(); ++g) {
      const auto c = quantize(x_rot.span().subspan(g * group, group), fq.scales[g], quant.bits);
      codes.insert(codes.end(), c.begin(), c.end());
    }
    kl += kl_to_uniform(hard_histogram(codes, quant.bits));
  }
  QuantError out;
  out.mse = energy > 0.0 ? err / energy : 0.0;
  out.kl = kl / static_cast<double>(xs.size());
  return out;
}

ComparisonRow evaluate_method(const std::string& label, const CalibrationSet& cal,
                              const Transform& transform, const QuantConfig& quant) {
  const QuantError e = quant_error(cal.w, cal.x, transform, quant);
  ComparisonRow row;
  row.method = label;
  row.recon_mse = e.mse;
  row.kl = e.kl;
  row.mu = coherence(transform.materialize());
  row.params_count = transform.learnable_count();
  return row;
}

std::vector<ComparisonRow> compare(const CalibrationSet& cal, const TrainConfig& config) {
  cal.validate();
  const std::size_t n = cal.dim();
  std::vector<ComparisonRow> rows;

  rows.push_back(evaluate_method("identity", cal,
                                 Transform(DenseTransform{DenseMatrix::identity(n)}),
                                 config.quant));
  if (is_power_of_two(n)) {
    rows.push_back(
        evaluate_method("hadamard", cal, Transform(init_hadamard(n)), config.quant));
  }
  // Fresh seed, decorrelated from the one used for training.
  const std::uint64_t random_seed = config.seed + 0x9E3779B97F4A7C15ULL;
  rows.push_back(evaluate_method(
      "random", cal, Transform(DenseTransform{haar_orthogonal(n, random_seed)}),
      config.quant));

  const TrainResult trained = train(cal, config);
  ComparisonRow learned =
      evaluate_method("butterfly-learned", cal, trained.params, config.quant);
  learned.train_seconds = trained.report.wall_seconds;
  rows.push_back(learned);

  std::sort(rows.begin(), rows.end(),
            [](const ComparisonRow& a, const ComparisonRow& b) { return a.method < b.method; });
  return rows;
}

double convergence_fraction(std::span<const double> loss_curve, std::size_t k) {
  if (k >= loss_curve.size()) {
    throw Error("index", "k=" + std::to_string(k) + " outside a curve of length " +
                             std::to_string(loss_curve.size()));
  }
  const double start = loss_curve[0];
  const double overall = *std::min_element(loss_curve.begin(), loss_curve.end());
  const double improvement = start - overall;
  if (!(improvement > 0.0)) return 1.0;
  const double upto = *std::min_element(loss_curve.begin(), loss_curve.begin() + k + 1);
  return (start - upto) / improvement;
}

CoherenceProfile coherence_profile(std::span<const LabeledTransform> transforms) {
  CoherenceProfile profile;
  profile.records.reserve(transforms.size());
  for (const auto& t : transforms) {
    profile.records.push_back({t.label, coherence(t.transform.materialize())});
  }
  return profile;
}

}  // namespace bfq
