#include <cmath>

#include "repose/ad/ops.hpp"

namespace repose::ad {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

// Generic unary op: y = f(x), dx += dfdx(x, y) * dy.
template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF dfdx) {
  const auto& av = a.value();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  auto ap = a.ptr();
  return make_op(a.shape(), std::move(out), {a}, [ap, dfdx](Node& n) {
    if (!ap->requires_grad) return;
    for (size_t i = 0; i < n.value.size(); ++i)
      ap->grad[i] += dfdx(ap->value[i], n.value[i]) * n.grad[i];
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  const auto &av = a.value(), &bv = b.value();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  auto ap = a.ptr();
  auto bp = b.ptr();
  return make_op(a.shape(), std::move(out), {a, b}, [ap, bp](Node& n) {
    if (ap->requires_grad)
      for (size_t i = 0; i < n.grad.size(); ++i) ap->grad[i] += n.grad[i];
    if (bp->requires_grad)
      for (size_t i = 0; i < n.grad.size(); ++i) bp->grad[i] += n.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  const auto &av = a.value(), &bv = b.value();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  auto ap = a.ptr();
  auto bp = b.ptr();
  return make_op(a.shape(), std::move(out), {a, b}, [ap, bp](Node& n) {
    if (ap->requires_grad)
      for (size_t i = 0; i < n.grad.size(); ++i) ap->grad[i] += n.grad[i];
    if (bp->requires_grad)
      for (size_t i = 0; i < n.grad.size(); ++i) bp->grad[i] -= n.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  const auto &av = a.value(), &bv = b.value();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  auto ap = a.ptr();
  auto bp = b.ptr();
  return make_op(a.shape(), std::move(out), {a, b}, [ap, bp](Node& n) {
    if (ap->requires_grad)
      for (size_t i = 0; i < n.grad.size(); ++i) ap->grad[i] += bp->value[i] * n.grad[i];
    if (bp->requires_grad)
      for (size_t i = 0; i < n.grad.size(); ++i) bp->grad[i] += ap->value[i] * n.grad[i];
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "div");
  const auto &av = a.value(), &bv = b.value();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] / bv[i];
  auto ap = a.ptr();
  auto bp = b.ptr();
  return make_op(a.shape(), std::move(out), {a, b}, [ap, bp](Node& n) {
    if (ap->requires_grad)
      for (size_t i = 0; i < n.grad.size(); ++i) ap->grad[i] += n.grad[i] / bp->value[i];
    if (bp->requires_grad)
      for (size_t i = 0; i < n.grad.size(); ++i)
        bp->grad[i] -= n.value[i] / bp->value[i] * n.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; },
               [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

namespace {
double sigmoid_stable(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Tensor sigmoid(const Tensor& a) {
  return unary(a, [](double x) { return sigmoid_stable(x); },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor silu(const Tensor& a) {
  return unary(a, [](double x) { return x * sigmoid_stable(x); },
               [](double x, double) {
                 double s = sigmoid_stable(x);
                 return s + x * s * (1.0 - s);
               });
}

Tensor softplus(const Tensor& a) {
  return unary(a,
               [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
               [](double x, double) { return sigmoid_stable(x); });
}

Tensor exp_(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Tensor log_(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  check(lo <= hi, "clamp: lo > hi");
  return unary(a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  check(x.ndim() == 2 && v.ndim() == 1 && x.dim(1) == v.dim(0),
        "add_rowvec: want [N,D] + [D], got " + shape_str(x.shape()) + " + " +
            shape_str(v.shape()));
  const int n = x.dim(0), d = x.dim(1);
  std::vector<double> out(x.value());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out[static_cast<size_t>(i) * d + j] += v.at(j);
  auto xp = x.ptr();
  auto vp = v.ptr();
  return make_op(x.shape(), std::move(out), {x, v}, [xp, vp, n, d](Node& nd) {
    if (xp->requires_grad)
      for (size_t i = 0; i < nd.grad.size(); ++i) xp->grad[i] += nd.grad[i];
    if (vp->requires_grad)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
          vp->grad[static_cast<size_t>(j)] += nd.grad[static_cast<size_t>(i) * d + j];
  });
}

Tensor add_per_channel(const Tensor& x, const Tensor& e) {
  check(x.ndim() == 4 && e.ndim() == 2 && x.dim(0) == e.dim(0) && x.dim(1) == e.dim(1),
        "add_per_channel: want [N,C,H,W] + [N,C], got " + shape_str(x.shape()) +
            " + " + shape_str(e.shape()));
  const int n = x.dim(0), c = x.dim(1);
  const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  std::vector<double> out(x.value());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const double b = e.at(static_cast<int64_t>(i) * c + j);
      double* row = out.data() + (static_cast<int64_t>(i) * c + j) * hw;
      for (int64_t k = 0; k < hw; ++k) row[k] += b;
    }
  auto xp = x.ptr();
  auto ep = e.ptr();
  return make_op(x.shape(), std::move(out), {x, e}, [xp, ep, n, c, hw](Node& nd) {
    if (xp->requires_grad)
      for (size_t i = 0; i < nd.grad.size(); ++i) xp->grad[i] += nd.grad[i];
    if (ep->requires_grad)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
          const double* row = nd.grad.data() + (static_cast<int64_t>(i) * c + j) * hw;
          double acc = 0;
          for (int64_t k = 0; k < hw; ++k) acc += row[k];
          ep->grad[static_cast<size_t>(i) * c + j] += acc;
        }
  });
}

Tensor sum_all(const Tensor& a) {
  double acc = 0;
  for (double v : a.value()) acc += v;
  auto ap = a.ptr();
  return make_op({1}, {acc}, {a}, [ap](Node& n) {
    if (!ap->requires_grad) return;
    for (size_t i = 0; i < ap->grad.size(); ++i) ap->grad[i] += n.grad[0];
  });
}

Tensor mean_all(const Tensor& a) {
  check(a.size() > 0, "mean_all: empty tensor");
  return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

Tensor mse(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mse");
  return mean_all(square(sub(a, b)));
}

Tensor bce(const Tensor& p, const Tensor& y, double eps) {
  check_same_shape(p, y, "bce");
  Tensor pc = clamp(p, eps, 1.0 - eps);
  // -[y log p + (1-y) log(1-p)]
  Tensor t1 = mul(y, log_(pc));
  Tensor t2 = mul(add_scalar(neg(y), 1.0), log_(add_scalar(neg(pc), 1.0)));
  return neg(mean_all(add(t1, t2)));
}

}  // namespace repose::ad
