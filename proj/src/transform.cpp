#include "bfq/transform.hpp"

#include "bfq/error.hpp"

namespace bfq {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check(std::size_t dim, std::size_t expected) {
  if (dim != expected) {
    throw Error("shape", "vector dim " + std::to_string(dim) + " does not match transform dim " +
                             std::to_string(expected));
  }
}

}  // namespace

Transform::Transform(ButterflyParams p) : params_(std::move(p)) {
  std::get<ButterflyParams>(params_).validate();
}

Transform::Transform(CompositeParams p) : params_(std::move(p)) {
  const auto& c = std::get<CompositeParams>(params_);
  c.validate();
  composite_q1_ = cayley_materialize(c.q1);
}

Transform::Transform(DenseTransform d) : params_(std::move(d)) {
  const auto& q = std::get<DenseTransform>(params_).q;
  if (q.rows() != q.cols()) throw Error("shape", "dense transform must be square");
}

std::size_t Transform::dim() const noexcept {
  return std::visit(overloaded{[](const DenseTransform& d) { return d.q.rows(); },
                               [](const ButterflyParams& b) { return b.n; },
                               [](const CompositeParams& c) { return c.dim(); }},
                    params_);
}

std::size_t Transform::learnable_count() const noexcept {
  return std::visit(
      overloaded{[](const DenseTransform&) -> std::size_t { return 0; },
                 [](const ButterflyParams& b) { return b.angles.size(); },
                 [](const CompositeParams& c) { return c.learnable_count(); }},
      params_);
}

std::string Transform::kind() const {
  return std::visit(overloaded{[](const DenseTransform&) { return std::string("dense"); },
                               [](const ButterflyParams&) { return std::string("butterfly"); },
                               [](const CompositeParams&) { return std::string("composite"); }},
                    params_);
}

void Transform::apply_inplace(std::span<double> x) const {
  check(x.size(), dim());
  std::visit(overloaded{[&](const DenseTransform& d) {
                          const DenseVector y = mat_vec(d.q, DenseVector(std::vector<double>(
                                                                 x.begin(), x.end())));
                          std::copy(y.span().begin(), y.span().end(), x.begin());
                        },
                        [&](const ButterflyParams& b) { butterfly_forward_inplace(b, x); },
                        [&](const CompositeParams& c) {
                          CompositeWork w{c, composite_q1_};
                          kron_apply_inplace(w, x);
                        }},
             params_);
}

void Transform::transpose_inplace(std::span<double> y) const {
  check(y.size(), dim());
  std::visit(overloaded{[&](const DenseTransform& d) {
                          std::vector<double> out(y.size(), 0.0);
                          for (std::size_t i = 0; i < d.q.rows(); ++i) {
                            const auto row = d.q.row(i);
                            for (std::size_t j = 0; j < row.size(); ++j) out[j] += row[j] * y[i];
                          }
                          std::copy(out.begin(), out.end(), y.begin());
                        },
                        [&](const ButterflyParams& b) { butterfly_transpose_inplace(b, y); },
                        [&](const CompositeParams& c) {
                          CompositeWork w{c, composite_q1_};
                          kron_transpose_inplace(w, y);
                        }},
             params_);
}

DenseVector Transform::apply(const DenseVector& x) const {
  DenseVector y = x;
  apply_inplace(y.span());
  return y;
}

DenseVector Transform::transpose_apply(const DenseVector& y) const {
  DenseVector x = y;
  transpose_inplace(x.span());
  return x;
}

DenseMatrix Transform::materialize() const {
  if (const auto* d = std::get_if<DenseTransform>(&params_)) return d->q;
  return bfq::materialize([this](const DenseVector& v) { return apply(v); }, dim());
}

}  // namespace bfq
