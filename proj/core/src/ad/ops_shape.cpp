#include <numeric>

#include "repose/ad/ops.hpp"

namespace repose::ad {

Tensor reshape(const Tensor& x, const Shape& shape) {
  check(numel(shape) == x.size(), "reshape: element count mismatch " +
                                      shape_str(x.shape()) + " -> " + shape_str(shape));
  auto xp = x.ptr();
  return make_op(shape, x.value(), {x}, [xp](Node& nd) {
    if (!xp->requires_grad) return;
    for (size_t i = 0; i < nd.grad.size(); ++i) xp->grad[i] += nd.grad[i];
  });
}

namespace {
std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[static_cast<size_t>(i)] = st[static_cast<size_t>(i) + 1] * s[static_cast<size_t>(i) + 1];
  return st;
}
}  // namespace

Tensor permute(const Tensor& x, const std::vector<int>& axes) {
  const int nd = x.ndim();
  check(static_cast<int>(axes.size()) == nd, "permute: axes rank mismatch");
  std::vector<bool> seen(static_cast<size_t>(nd), false);
  Shape out_shape(static_cast<size_t>(nd));
  for (int i = 0; i < nd; ++i) {
    int a = axes[static_cast<size_t>(i)];
    check(a >= 0 && a < nd && !seen[static_cast<size_t>(a)], "permute: bad axes");
    seen[static_cast<size_t>(a)] = true;
    out_shape[static_cast<size_t>(i)] = x.dim(a);
  }
  const auto in_st = row_major_strides(x.shape());
  const auto out_st = row_major_strides(out_shape);
  const int64_t n = x.size();

  // out[multi_out] = in[multi_in], where multi_in[axes[i]] = multi_out[i].
  std::vector<int64_t> src_stride_per_out_axis(static_cast<size_t>(nd));
  for (int i = 0; i < nd; ++i)
    src_stride_per_out_axis[static_cast<size_t>(i)] = in_st[static_cast<size_t>(axes[static_cast<size_t>(i)])];

  std::vector<double> out(static_cast<size_t>(n));
  std::vector<int64_t> src_index(static_cast<size_t>(n));
  std::vector<int> idx(static_cast<size_t>(nd), 0);
  int64_t src = 0;
  for (int64_t o = 0; o < n; ++o) {
    out[static_cast<size_t>(o)] = x.value()[static_cast<size_t>(src)];
    src_index[static_cast<size_t>(o)] = src;
    // increment multi-index in output order (last axis fastest)
    for (int a = nd - 1; a >= 0; --a) {
      idx[static_cast<size_t>(a)]++;
      src += src_stride_per_out_axis[static_cast<size_t>(a)];
      if (idx[static_cast<size_t>(a)] < out_shape[static_cast<size_t>(a)]) break;
      src -= src_stride_per_out_axis[static_cast<size_t>(a)] * out_shape[static_cast<size_t>(a)];
      idx[static_cast<size_t>(a)] = 0;
    }
  }
  (void)out_st;
  auto xp = x.ptr();
  return make_op(out_shape, std::move(out), {x},
                 [xp, src_index = std::move(src_index)](Node& nd2) {
                   if (!xp->requires_grad) return;
                   for (size_t o = 0; o < nd2.grad.size(); ++o)
                     xp->grad[static_cast<size_t>(src_index[o])] += nd2.grad[o];
                 });
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  check(!xs.empty(), "concat: empty input list");
  const int nd = xs[0].ndim();
  check(axis >= 0 && axis < nd, "concat: bad axis");
  Shape out_shape = xs[0].shape();
  int axis_total = 0;
  for (const auto& t : xs) {
    check(t.ndim() == nd, "concat: rank mismatch");
    for (int a = 0; a < nd; ++a)
      if (a != axis)
        check(t.dim(a) == out_shape[static_cast<size_t>(a)], "concat: dim mismatch off-axis");
    axis_total += t.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = axis_total;

  int64_t outer = 1, inner = 1;
  for (int a = 0; a < axis; ++a) outer *= out_shape[static_cast<size_t>(a)];
  for (int a = axis + 1; a < nd; ++a) inner *= out_shape[static_cast<size_t>(a)];

  std::vector<double> out(static_cast<size_t>(numel(out_shape)));
  const int64_t out_row = static_cast<int64_t>(axis_total) * inner;
  int64_t offset = 0;  // offset along axis (in elements of inner rows)
  std::vector<int64_t> starts(xs.size());
  for (size_t t = 0; t < xs.size(); ++t) {
    starts[t] = offset;
    const int64_t chunk = static_cast<int64_t>(xs[t].dim(axis)) * inner;
    for (int64_t o = 0; o < outer; ++o) {
      const double* src = xs[t].value().data() + o * chunk;
      double* dst = out.data() + o * out_row + offset;
      for (int64_t i = 0; i < chunk; ++i) dst[i] = src[i];
    }
    offset += chunk;
  }

  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& t : xs) parents.push_back(t.ptr());
  std::vector<int> axis_lens;
  for (const auto& t : xs) axis_lens.push_back(t.dim(axis));
  return make_op(out_shape, std::move(out), xs,
                 [parents, starts, axis_lens, outer, inner, out_row](Node& nd2) {
                   for (size_t t = 0; t < parents.size(); ++t) {
                     if (!parents[t]->requires_grad) continue;
                     const int64_t chunk = static_cast<int64_t>(axis_lens[t]) * inner;
                     for (int64_t o = 0; o < outer; ++o) {
                       const double* src = nd2.grad.data() + o * out_row + starts[t];
                       double* dst = parents[t]->grad.data() + o * chunk;
                       for (int64_t i = 0; i < chunk; ++i) dst[i] += src[i];
                     }
                   }
                 });
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
  const int nd = x.ndim();
  check(axis >= 0 && axis < nd, "slice: bad axis");
  check(start >= 0 && len > 0 && start + len <= x.dim(axis),
        "slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
            ") out of bounds for axis size " + std::to_string(x.dim(axis)));
  Shape out_shape = x.shape();
  out_shape[static_cast<size_t>(axis)] = len;
  int64_t outer = 1, inner = 1;
  for (int a = 0; a < axis; ++a) outer *= x.dim(a);
  for (int a = axis + 1; a < nd; ++a) inner *= x.dim(a);
  const int64_t in_row = static_cast<int64_t>(x.dim(axis)) * inner;
  const int64_t out_chunk = static_cast<int64_t>(len) * inner;
  const int64_t off = static_cast<int64_t>(start) * inner;

  std::vector<double> out(static_cast<size_t>(numel(out_shape)));
  for (int64_t o = 0; o < outer; ++o) {
    const double* src = x.value().data() + o * in_row + off;
    double* dst = out.data() + o * out_chunk;
    for (int64_t i = 0; i < out_chunk; ++i) dst[i] = src[i];
  }
  auto xp = x.ptr();
  return make_op(out_shape, std::move(out), {x},
                 [xp, outer, in_row, out_chunk, off](Node& nd2) {
                   if (!xp->requires_grad) return;
                   for (int64_t o = 0; o < outer; ++o) {
                     const double* src = nd2.grad.data() + o * out_chunk;
                     double* dst = xp->grad.data() + o * in_row + off;
                     for (int64_t i = 0; i < out_chunk; ++i) dst[i] += src[i];
                   }
                 });
}

}  // namespace repose::ad
