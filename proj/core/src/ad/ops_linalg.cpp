#include <Eigen/Dense>
#include <cmath>

#include "repose/ad/ops.hpp"

namespace repose::ad {

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.ndim() == 2 && b.ndim() == 2 && a.dim(1) == b.dim(0),
        "matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n);
  MapM(out.data(), m, n).noalias() =
      MapC(a.value().data(), m, k) * MapC(b.value().data(), k, n);
  auto ap = a.ptr();
  auto bp = b.ptr();
  return make_op({m, n}, std::move(out), {a, b}, [ap, bp, m, k, n](Node& nd) {
    MapC dy(nd.grad.data(), m, n);
    if (ap->requires_grad)
      MapM(ap->grad.data(), m, k).noalias() += dy * MapC(bp->value.data(), k, n).transpose();
    if (bp->requires_grad)
      MapM(bp->grad.data(), k, n).noalias() += MapC(ap->value.data(), m, k).transpose() * dy;
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check(a.ndim() == 2 && b.ndim() == 2 && a.dim(1) == b.dim(1),
        "matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<double> out(static_cast<size_t>(m) * n);
  MapM(out.data(), m, n).noalias() =
      MapC(a.value().data(), m, k) * MapC(b.value().data(), n, k).transpose();
  auto ap = a.ptr();
  auto bp = b.ptr();
  return make_op({m, n}, std::move(out), {a, b}, [ap, bp, m, k, n](Node& nd) {
    MapC dy(nd.grad.data(), m, n);
    if (ap->requires_grad)
      MapM(ap->grad.data(), m, k).noalias() += dy * MapC(bp->value.data(), n, k);
    if (bp->requires_grad)
      MapM(bp->grad.data(), n, k).noalias() += dy.transpose() * MapC(ap->value.data(), m, k);
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  check(x.ndim() == 2 && w.ndim() == 2 && x.dim(1) == w.dim(1),
        "linear: x " + shape_str(x.shape()) + " vs w " + shape_str(w.shape()));
  Tensor y = matmul_nt(x, w);
  if (!b.defined()) return y;
  check(b.ndim() == 1 && b.dim(0) == w.dim(0), "linear: bad bias shape");
  return add_rowvec(y, b);
}

Tensor softmax_rows(const Tensor& x) {
  check(x.ndim() == 2, "softmax_rows: want [R,C]");
  const int r = x.dim(0), c = x.dim(1);
  std::vector<double> out(x.value().size());
  for (int i = 0; i < r; ++i) {
    const double* row = x.value().data() + static_cast<size_t>(i) * c;
    double* o = out.data() + static_cast<size_t>(i) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0;
    for (int j = 0; j < c; ++j) {
      o[j] = std::exp(row[j] - mx);
      z += o[j];
    }
    for (int j = 0; j < c; ++j) o[j] /= z;
  }
  auto xp = x.ptr();
  return make_op(x.shape(), std::move(out), {x}, [xp, r, c](Node& nd) {
    if (!xp->requires_grad) return;
    for (int i = 0; i < r; ++i) {
      const double* y = nd.value.data() + static_cast<size_t>(i) * c;
      const double* dy = nd.grad.data() + static_cast<size_t>(i) * c;
      double dot = 0;
      for (int j = 0; j < c; ++j) dot += dy[j] * y[j];
      double* dx = xp->grad.data() + static_cast<size_t>(i) * c;
      for (int j = 0; j < c; ++j) dx[j] += (dy[j] - dot) * y[j];
    }
  });
}

}  // namespace repose::ad
