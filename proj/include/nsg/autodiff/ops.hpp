#ifndef NSG_AUTODIFF_OPS_HPP
#define NSG_AUTODIFF_OPS_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "nsg/autodiff/tape.hpp"
#include "nsg/core/tensor.hpp"

namespace nsg {

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
}

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

/// Gather image patches into a K x N row-major matrix, K = C*kh*kw, N = oh*ow.
template <typename S>
void im2col(const Tensor<S>& x, int kh, int kw, int stride, int pad, int oh, int ow,
            MatRM<S>& col) {
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int64_t n = static_cast<int64_t>(oh) * ow;
  col.setZero(C * kh * kw, n);
  for (int c = 0; c < C; ++c) {
    const S* src_ch = x.data.data() + static_cast<int64_t>(c) * H * W;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const int k = (c * kh + ky) * kw + kx;
        S* dst_row = col.data() + static_cast<int64_t>(k) * n;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          S* dst = dst_row + static_cast<int64_t>(oy) * ow;
          const S* src = src_ch + static_cast<int64_t>(iy) * W;
          if (stride == 1) {
            const int ox0 = std::max(0, pad - kx);
            const int ox1 = std::min(ow, W + pad - kx);
            for (int ox = ox0; ox < ox1; ++ox) dst[ox] = src[ox + kx - pad];
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride + kx - pad;
              if (ix >= 0 && ix < W) dst[ox] = src[ix];
            }
          }
        }
      }
    }
  }
}

/// Scatter-add of a K x N patch-gradient matrix back onto the image grid.
template <typename S>
void col2im_add(const MatRM<S>& dcol, int C, int H, int W, int kh, int kw, int stride, int pad,
                int oh, int ow, Tensor<S>& dx) {
  const int64_t n = static_cast<int64_t>(oh) * ow;
  for (int c = 0; c < C; ++c) {
    S* dst_ch = dx.data.data() + static_cast<int64_t>(c) * H * W;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const int k = (c * kh + ky) * kw + kx;
        const S* src_row = dcol.data() + static_cast<int64_t>(k) * n;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          const S* src = src_row + static_cast<int64_t>(oy) * ow;
          S* dst = dst_ch + static_cast<int64_t>(iy) * W;
          if (stride == 1) {
            const int ox0 = std::max(0, pad - kx);
            const int ox1 = std::min(ow, W + pad - kx);
            for (int ox = ox0; ox < ox1; ++ox) dst[ox + kx - pad] += src[ox];
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride + kx - pad;
              if (ix >= 0 && ix < W) dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  detail::check_same_shape(a.val(), b.val(), "add");
  Tape<S>& T = *a.tape;
  const int yid = static_cast<int>(T.size());
  Tensor<S> out = a.val();
  out.data += b.val().data;
  const bool ng = T.needs_grad(a.id) || T.needs_grad(b.id);
  const int aid = a.id, bid = b.id;
  return T.make(std::move(out), ng, [=](Tape<S>& t) {
    const auto& g = t.grad(yid);
    if (t.needs_grad(aid)) t.grad(aid).data += g.data;
    if (t.needs_grad(bid)) t.grad(bid).data += g.data;
  });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  detail::check_same_shape(a.val(), b.val(), "sub");
  Tape<S>& T = *a.tape;
  const int yid = static_cast<int>(T.size());
  Tensor<S> out = a.val();
  out.data -= b.val().data;
  const bool ng = T.needs_grad(a.id) || T.needs_grad(b.id);
  const int aid = a.id, bid = b.id;
  return T.make(std::move(out), ng, [=](Tape<S>& t) {
    const auto& g = t.grad(yid);
    if (t.needs_grad(aid)) t.grad(aid).data += g.data;
    if (t.needs_grad(bid)) t.grad(bid).data -= g.data;
  });
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  detail::check_same_shape(a.val(), b.val(), "mul");
  Tape<S>& T = *a.tape;
  const int yid = static_cast<int>(T.size());
  Tensor<S> out = a.val();
  out.data *= b.val().data;
  const bool ng = T.needs_grad(a.id) || T.needs_grad(b.id);
  const int aid = a.id, bid = b.id;
  return T.make(std::move(out), ng, [=](Tape<S>& t) {
    const auto& g = t.grad(yid);
    if (t.needs_grad(aid)) t.grad(aid).data += g.data * t.value(bid).data;
    if (t.needs_grad(bid)) t.grad(bid).data += g.data * t.value(aid).data;
  });
}

template <typename S>
Var<S> scale(Var<S> a, S s) {
  Tape<S>& T = *a.tape;
  const int yid = static_cast<int>(T.size());
  Tensor<S> out = a.val();
  out.data *= s;
  const int aid = a.id;
  return T.make(std::move(out), T.needs_grad(aid), [=](Tape<S>& t) {
    if (t.needs_grad(aid)) t.grad(aid).data += s * t.grad(yid).data;
  });
}

template <typename S>
Var<S> add_const(Var<S> a, S c) {
  Tape<S>& T = *a.tape;
  const int yid = static_cast<int>(T.size());
  Tensor<S> out = a.val();
  out.data += c;
  const int aid = a.id;
  return T.make(std::move(out), T.needs_grad(aid), [=](Tape<S>& t) {
    if (t.needs_grad(aid)) t.grad(aid).data += t.grad(yid).data;
  });
}

template <typename S>
Var<S> one_minus(Var<S> a) {
  Tape<S>& T = *a.tape;
  const int yid = static_cast<int>(T.size());
  Tensor<S> out = a.val();
  out.data = S(1) - out.data;
  const int aid = a.id;
  return T.make(std::move(out), T.needs_grad(aid), [=](Tape<S>& t) {
    if (t.needs_grad(aid)) t.grad(aid).data -= t.grad(yid).data;
  });
}

template <typename S>
Var<S> square(Var<S> a) {
  Tape<S>& T = *a.tape;
  const int yid = static_cast<int>(T.size());
  Tensor<S> out = a.val();
  out.data = out.data.square();
  const int aid = a.id;
  return T.make(std::move(out), T.needs_grad(aid), [=](Tape<S>& t) {
    if (t.needs_grad(aid)) t.grad(aid).data += S(2) * t.value(aid).data * t.grad(yid).data;
  });
}

template <typename S>
Var<S> abs_val(Var<S> a) {
  Tape<S>& T = *a.tape;
  const int yid = static_cast<int>(T.size());
  Tensor<S> out = a.val();
  out.data = out.data.abs();
  const int aid = a.id;
  return T.make(std::move(out), T.needs_grad(aid), [=](Tape<S>& t) {
    if (t.needs_grad(aid)) t.grad(aid).data += t.value(aid).data.sign() * t.grad(yid).data;
  });
}

template <typename S>
Var<S> leaky_relu(Var<S> a, S slope = S(0.2)) {
  Tape<S>& T = *a.tape;
  const int yid = static_cast<int>(T.size());
  Tensor<S> out = a.val();
  out.data = out.data.max(S(0)) + slope * out.data.min(S(0));
  const int aid = a.id;
  return T.make(std::move(out), T.needs_grad(aid), [=](Tape<S>& t) {
    if (!t.needs_grad(aid)) return;
    const auto& x = t.value(aid).data;
    t.grad(aid).data +=
        t.grad(yid).data * (slope + (S(1) - slope) * (x > S(0)).template cast<S>());
  });
}

template <typename S>
Var<S> relu(Var<S> a) {
  return leaky_relu(a, S(0));
}

template <typename S>
Var<S> tanh_act(Var<S> a) {
  Tape<S>& T = *a.tape;
  const int yid = static_cast<int>(T.size());
  Tensor<S> out = a.val();
  out.data = out.data.tanh();
  const int aid = a.id;
  return T.make(std::move(out), T.needs_grad(aid), [=](Tape<S>& t) {
    if (!t.needs_grad(aid)) return;
    const auto& y = t.value(yid).data;
    t.grad(aid).data += t.grad(yid).data * (S(1) - y.square());
  });
}

template <typename S>
Var<S> sigmoid(Var<S> a) {
  Tape<S>& T = *a.tape;
  const int yid = static_cast<int>(T.size());
  Tensor<S> out = a.val();
  out.data = S(1) / (S(1) + (-out.data).exp());
  const int aid = a.id;
  return T.make(std::move(out), T.needs_grad(aid), [=](Tape<S>& t) {
    if (!t.needs_grad(aid)) return;
    const auto& y = t.value(yid).data;
    t.grad(aid).data += t.grad(yid).data * y * (S(1) - y);
  });
}

template <typename S>
Var<S> clamp(Var<S> a, S lo, S hi) {
  Tape<S>& T = *a.tape;
  const int yid = static_cast<int>(T.size());
  Tensor<S> out = a.val();
  out.data = out.data.max(lo).min(hi);
  const int aid = a.id;
  return T.make(std::move(out), T.needs_grad(aid), [=](Tape<S>& t) {
    if (!t.needs_grad(aid)) return;
    const auto& x = t.value(aid).data;
    auto pass = (x > lo && x < hi).template cast<S>();
    t.grad(aid).data += t.grad(yid).data * pass;
  });
}

/// min(x, cap), elementwise against a constant.
template <typename S>
Var<S> clamp_max(Var<S> a, S cap) {
  Tape<S>& T = *a.tape;
  const int yid = static_cast<int>(T.size());
  Tensor<S> out = a.val();
  out.data = out.data.min(cap);
  const int aid = a.id;
  return T.make(std::move(out), T.needs_grad(aid), [=](Tape<S>& t) {
    if (!t.needs_grad(aid)) return;
    const auto& x = t.value(aid).data;
    auto pass = (x < cap).template cast<S>();
    t.grad(aid).data += t.grad(yid).data * pass;
  });
}

// ---------------------------------------------------------------------------
// reductions / shape
// ---------------------------------------------------------------------------

template <typename S>
Var<S> sum_all(Var<S> a) {
  Tape<S>& T = *a.tape;
  const int yid = static_cast<int>(T.size());
  const int aid = a.id;
  return T.make(Tensor<S>::scalar(a.val().data.sum()), T.needs_grad(aid), [=](Tape<S>& t) {
    if (t.needs_grad(aid)) t.grad(aid).data += t.grad(yid).data[0];
  });
}

template <typename S>
Var<S> mean_all(Var<S> a) {
  Tape<S>& T = *a.tape;
  const int yid = static_cast<int>(T.size());
  const int aid = a.id;
  const S n = static_cast<S>(a.val().numel());
  return T.make(Tensor<S>::scalar(a.val().data.sum() / n), T.needs_grad(aid), [=](Tape<S>& t) {
    if (t.needs_grad(aid)) t.grad(aid).data += t.grad(yid).data[0] / n;
  });
}

template <typename S>
Var<S> reshape(Var<S> a, std::vector<int> shape) {
  Tape<S>& T = *a.tape;
  if (Tensor<S>::count(shape) != a.val().numel()) throw ShapeError("reshape: numel mismatch");
  const int yid = static_cast<int>(T.size());
  Tensor<S> out = a.val();
  out.shape = std::move(shape);
  const int aid = a.id;
  return T.make(std::move(out), T.needs_grad(aid), [=](Tape<S>& t) {
    if (t.needs_grad(aid)) t.grad(aid).data += t.grad(yid).data;
  });
}

/// Stop-gradient: value flows, gradient does not.
template <typename S>
Var<S> detach(Var<S> a) {
  return a.tape->constant(a.val());
}

template <typename S>
Var<S> concat_ch(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_ch: empty");
  Tape<S>& T = *parts[0].tape;
  const int H = parts[0].val().dim(1), W = parts[0].val().dim(2);
  int C = 0;
  bool ng = false;
  for (const auto& p : parts) {
    if (p.val().rank() != 3 || p.val().dim(1) != H || p.val().dim(2) != W)
      throw ShapeError("concat_ch: spatial mismatch");
    C += p.val().dim(0);
    ng = ng || T.needs_grad(p.id);
  }
  Tensor<S> out({C, H, W});
  int64_t off = 0;
  std::vector<int> ids;
  std::vector<int64_t> sizes;
  for (const auto& p : parts) {
    const auto& v = p.val();
    out.data.segment(off, v.numel()) = v.data;
    ids.push_back(p.id);
    sizes.push_back(v.numel());
    off += v.numel();
  }
  const int yid = static_cast<int>(T.size());
  return T.make(std::move(out), ng, [=](Tape<S>& t) {
    const auto& g = t.grad(yid);
    int64_t o = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
      if (t.needs_grad(ids[i])) t.grad(ids[i]).data += g.data.segment(o, sizes[i]);
      o += sizes[i];
    }
  });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

/// y = op(a) * op(b) on rank-2 tensors, op = transpose when the flag is set.
template <typename S>
Var<S> matmul(Var<S> a, Var<S> b, bool ta = false, bool tb = false) {
  const auto& av = a.val();
  const auto& bv = b.val();
  if (av.rank() != 2 || bv.rank() != 2) throw ShapeError("matmul: rank-2 tensors required");
  const int m = ta ? av.dim(1) : av.dim(0);
  const int k = ta ? av.dim(0) : av.dim(1);
  const int kb = tb ? bv.dim(1) : bv.dim(0);
  const int n = tb ? bv.dim(0) : bv.dim(1);
  if (k != kb) throw ShapeError("matmul: inner dimension mismatch");
  Tape<S>& T = *a.tape;

  Tensor<S> out({m, n});
  {
    auto A = av.mat(av.dim(0), av.dim(1));
    auto B = bv.mat(bv.dim(0), bv.dim(1));
    auto Y = out.mat(m, n);
    if (!ta && !tb) Y.noalias() = A * B;
    else if (ta && !tb) Y.noalias() = A.transpose() * B;
    else if (!ta && tb) Y.noalias() = A * B.transpose();
    else Y.noalias() = A.transpose() * B.transpose();
  }
  const int aid = a.id, bid = b.id;
  const int yid = static_cast<int>(T.size());
  const bool ng = T.needs_grad(aid) || T.needs_grad(bid);
  return T.make(std::move(out), ng, [=](Tape<S>& t) {
    const auto& gv = t.grad(yid);
    auto G = gv.mat(m, n);
    const auto& avv = t.value(aid);
    const auto& bvv = t.value(bid);
    auto A = avv.mat(avv.dim(0), avv.dim(1));
    auto B = bvv.mat(bvv.dim(0), bvv.dim(1));
    if (t.needs_grad(aid)) {
      auto dA = t.grad(aid).mat(avv.dim(0), avv.dim(1));
      if (!ta && !tb) dA.noalias() += G * B.transpose();
      else if (!ta && tb) dA.noalias() += G * B;
      else if (ta && !tb) dA.noalias() += B * G.transpose();
      else dA.noalias() += B.transpose() * G.transpose();
    }
    if (t.needs_grad(bid)) {
      auto dB = t.grad(bid).mat(bvv.dim(0), bvv.dim(1));
      if (!ta && !tb) dB.noalias() += A.transpose() * G;
      else if (ta && !tb) dB.noalias() += A * G;
      else if (!ta && tb) dB.noalias() += G.transpose() * A;
      else dB.noalias() += G.transpose() * A.transpose();
    }
  });
}

/// y[M] = w[M,N] * x[N] + b[M]
template <typename S>
Var<S> linear(Var<S> x, Var<S> w, Var<S> b) {
  const auto& xv = x.val();
  const auto& wv = w.val();
  const auto& bv = b.val();
  if (xv.rank() != 1 || wv.rank() != 2 || bv.rank() != 1 || wv.dim(1) != xv.dim(0) ||
      wv.dim(0) != bv.dim(0))
    throw ShapeError("linear: shape mismatch");
  Tape<S>& T = *x.tape;
  const int M = wv.dim(0), N = wv.dim(1);
  Tensor<S> out({M});
  {
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> xm(xv.data.data(), N);
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> ym(out.data.data(), M);
    ym.noalias() = wv.mat(M, N) * xm;
    ym += bv.data.matrix();
  }
  const int xid = x.id, wid = w.id, bidn = b.id;
  const int yid = static_cast<int>(T.size());
  const bool ng = T.needs_grad(xid) || T.needs_grad(wid) || T.needs_grad(bidn);
  return T.make(std::move(out), ng, [=](Tape<S>& t) {
    const auto& g = t.grad(yid);
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> gm(g.data.data(), M);
    const auto& xvv = t.value(xid);
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> xm(xvv.data.data(), N);
    if (t.needs_grad(bidn)) t.grad(bidn).data += g.data;
    if (t.needs_grad(wid)) t.grad(wid).mat(M, N).noalias() += gm * xm.transpose();
    if (t.needs_grad(xid)) {
      Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> dxm(t.grad(xid).data.data(), N);
      dxm.noalias() += t.value(wid).mat(M, N).transpose() * gm;
    }
  });
}

/// Column-wise softmax (normalizes over the row index within each column),
/// computed with max-subtraction.
template <typename S>
Var<S> softmax_cols(Var<S> a) {
  const auto& av = a.val();
  if (av.rank() != 2) throw ShapeError("softmax_cols: rank-2 tensor required");
  const int R = av.dim(0), C = av.dim(1);
  Tape<S>& T = *a.tape;
  Tensor<S> out({R, C});
  for (int j = 0; j < C; ++j) {
    S m = av.at(0, j);
    for (int i = 1; i < R; ++i) m = std::max(m, av.at(i, j));
    S z = S(0);
    for (int i = 0; i < R; ++i) {
      const S e = std::exp(av.at(i, j) - m);
      out.at(i, j) = e;
      z += e;
    }
    for (int i = 0; i < R; ++i) out.at(i, j) /= z;
  }
  const int aid = a.id;
  const int yid = static_cast<int>(T.size());
  return T.make(std::move(out), T.needs_grad(aid), [=](Tape<S>& t) {
    if (!t.needs_grad(aid)) return;
    const auto& y = t.value(yid);
    const auto& g = t.grad(yid);
    auto& dx = t.grad(aid);
    for (int j = 0; j < C; ++j) {
      S dot = S(0);
      for (int i = 0; i < R; ++i) dot += g.at(i, j) * y.at(i, j);
      for (int i = 0; i < R; ++i) dx.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// image ops
// ---------------------------------------------------------------------------

template <typename S>
Var<S> conv2d(Var<S> x, Var<S> w, Var<S> b, int stride, int pad) {
  const auto& xv = x.val();
  const auto& wv = w.val();
  const auto& bv = b.val();
  if (xv.rank() != 3 || wv.rank() != 4) throw ShapeError("conv2d: bad ranks");
  const int Cin = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  const int Cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  if (wv.dim(1) != Cin) throw ShapeError("conv2d: channel mismatch");
  if (bv.rank() != 1 || bv.dim(0) != Cout) throw ShapeError("conv2d: bias mismatch");
  const int oh = detail::conv_out_dim(H, kh, stride, pad);
  const int ow = detail::conv_out_dim(W, kw, stride, pad);
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: output collapses to zero");
  const int K = Cin * kh * kw;
  const int64_t N = static_cast<int64_t>(oh) * ow;

  Tape<S>& T = *x.tape;
  Tensor<S> out({Cout, oh, ow});
  {
    MatRM<S> col;
    detail::im2col(xv, kh, kw, stride, pad, oh, ow, col);
    auto Y = out.mat(Cout, static_cast<int>(N));
    Y.noalias() = wv.mat(Cout, K) * col;
    Y.colwise() += bv.data.matrix();
  }
  const int xid = x.id, wid = w.id, bid = b.id;
  const int yid = static_cast<int>(T.size());
  const bool ng = T.needs_grad(xid) || T.needs_grad(wid) || T.needs_grad(bid);
  return T.make(std::move(out), ng, [=](Tape<S>& t) {
    const auto& g = t.grad(yid);
    auto G = g.mat(Cout, static_cast<int>(N));
    if (t.needs_grad(bid)) t.grad(bid).data.matrix() += G.rowwise().sum();
    const bool need_w = t.needs_grad(wid);
    const bool need_x = t.needs_grad(xid);
    if (!need_w && !need_x) return;
    // the patch matrix is rebuilt here instead of being cached at forward
    // time; it is the dominant memory cost otherwise
    MatRM<S> col;
    detail::im2col(t.value(xid), kh, kw, stride, pad, oh, ow, col);
    if (need_w) t.grad(wid).mat(Cout, K).noalias() += G * col.transpose();
    if (need_x) {
      MatRM<S> dcol(K, N);
      dcol.noalias() = t.value(wid).mat(Cout, K).transpose() * G;
      detail::col2im_add(dcol, Cin, H, W, kh, kw, stride, pad, oh, ow, t.grad(xid));
    }
  });
}

/// Per-channel instance normalization without affine parameters.
template <typename S>
Var<S> instance_norm(Var<S> x, S eps = S(1e-5)) {
  const auto& xv = x.val();
  if (xv.rank() != 3) throw ShapeError("instance_norm: rank-3 tensor required");
  const int C = xv.dim(0);
  const int64_t N = static_cast<int64_t>(xv.dim(1)) * xv.dim(2);
  if (N < 2) throw ShapeError("instance_norm: needs more than one spatial element");
  Tape<S>& T = *x.tape;
  Tensor<S> out = xv;
  Tensor<S> inv({C});
  for (int c = 0; c < C; ++c) {
    auto seg = out.data.segment(c * N, N);
    const S mu = seg.mean();
    seg -= mu;
    const S var = seg.square().mean();
    const S iv = S(1) / std::sqrt(var + eps);
    seg *= iv;
    inv.data[c] = iv;
  }
  const int xid = x.id;
  const int yid = static_cast<int>(T.size());
  return T.make(std::move(out), T.needs_grad(xid), [=](Tape<S>& t) {
    if (!t.needs_grad(xid)) return;
    const auto& y = t.value(yid);
    const auto& g = t.grad(yid);
    auto& dx = t.grad(xid);
    for (int c = 0; c < C; ++c) {
      auto gs = g.data.segment(c * N, N);
      auto ys = y.data.segment(c * N, N);
      const S gmean = gs.mean();
      const S gy = (gs * ys).mean();
      dx.data.segment(c * N, N) += inv.data[c] * (gs - gmean - ys * gy);
    }
  });
}

/// Nearest-neighbour 2x upsampling.
template <typename S>
Var<S> upsample2(Var<S> x) {
  const auto& xv = x.val();
  if (xv.rank() != 3) throw ShapeError("upsample2: rank-3 tensor required");
  const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  Tape<S>& T = *x.tape;
  Tensor<S> out({C, 2 * H, 2 * W});
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        const S v = xv.at(c, i, j);
        out.at(c, 2 * i, 2 * j) = v;
        out.at(c, 2 * i, 2 * j + 1) = v;
        out.at(c, 2 * i + 1, 2 * j) = v;
        out.at(c, 2 * i + 1, 2 * j + 1) = v;
      }
  const int xid = x.id;
  const int yid = static_cast<int>(T.size());
  return T.make(std::move(out), T.needs_grad(xid), [=](Tape<S>& t) {
    if (!t.needs_grad(xid)) return;
    const auto& g = t.grad(yid);
    auto& dx = t.grad(xid);
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
          dx.at(c, i, j) += g.at(c, 2 * i, 2 * j) + g.at(c, 2 * i, 2 * j + 1) +
                            g.at(c, 2 * i + 1, 2 * j) + g.at(c, 2 * i + 1, 2 * j + 1);
  });
}

/// Block average pooling with kernel = stride = k (dims must divide).
template <typename S>
Var<S> avg_pool(Var<S> x, int k) {
  const auto& xv = x.val();
  if (xv.rank() != 3 || xv.dim(1) % k || xv.dim(2) % k) throw ShapeError("avg_pool: bad dims");
  const int C = xv.dim(0), H = xv.dim(1) / k, W = xv.dim(2) / k;
  Tape<S>& T = *x.tape;
  Tensor<S> out({C, H, W});
  const S inv = S(1) / static_cast<S>(k * k);
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        S s = S(0);
        for (int di = 0; di < k; ++di)
          for (int dj = 0; dj < k; ++dj) s += xv.at(c, i * k + di, j * k + dj);
        out.at(c, i, j) = s * inv;
      }
  const int xid = x.id;
  const int yid = static_cast<int>(T.size());
  return T.make(std::move(out), T.needs_grad(xid), [=](Tape<S>& t) {
    if (!t.needs_grad(xid)) return;
    const auto& g = t.grad(yid);
    auto& dx = t.grad(xid);
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          const S gv = g.at(c, i, j) * inv;
          for (int di = 0; di < k; ++di)
            for (int dj = 0; dj < k; ++dj) dx.at(c, i * k + di, j * k + dj) += gv;
        }
  });
}

/// Global average pooling: [C,H,W] -> [C].
template <typename S>
Var<S> global_avg_pool(Var<S> x) {
  const auto& xv = x.val();
  if (xv.rank() != 3) throw ShapeError("global_avg_pool: rank-3 tensor required");
  const int C = xv.dim(0);
  const int64_t N = static_cast<int64_t>(xv.dim(1)) * xv.dim(2);
  Tape<S>& T = *x.tape;
  Tensor<S> out({C});
  for (int c = 0; c < C; ++c) out.data[c] = xv.data.segment(c * N, N).mean();
  const int xid = x.id;
  const int yid = static_cast<int>(T.size());
  return T.make(std::move(out), T.needs_grad(xid), [=](Tape<S>& t) {
    if (!t.needs_grad(xid)) return;
    const auto& g = t.grad(yid);
    auto& dx = t.grad(xid);
    for (int c = 0; c < C; ++c) dx.data.segment(c * N, N) += g.data[c] / static_cast<S>(N);
  });
}

/// Broadcast-multiply a [C,H,W] tensor by a [1,H,W] mask.
template <typename S>
Var<S> mul_mask(Var<S> x, Var<S> mask) {
  const auto& xv = x.val();
  const auto& mv = mask.val();
  if (xv.rank() != 3 || mv.rank() != 3 || mv.dim(0) != 1 || mv.dim(1) != xv.dim(1) ||
      mv.dim(2) != xv.dim(2))
    throw ShapeError("mul_mask: mask must be [1,H,W] matching x");
  const int C = xv.dim(0);
  const int64_t N = static_cast<int64_t>(xv.dim(1)) * xv.dim(2);
  Tape<S>& T = *x.tape;
  Tensor<S> out = xv;
  for (int c = 0; c < C; ++c) out.data.segment(c * N, N) *= mv.data;
  const int xid = x.id, mid = mask.id;
  const int yid = static_cast<int>(T.size());
  const bool ng = T.needs_grad(xid) || T.needs_grad(mid);
  return T.make(std::move(out), ng, [=](Tape<S>& t) {
    const auto& g = t.grad(yid);
    if (t.needs_grad(xid)) {
      auto& dx = t.grad(xid);
      const auto& m = t.value(mid);
      for (int c = 0; c < C; ++c) dx.data.segment(c * N, N) += g.data.segment(c * N, N) * m.data;
    }
    if (t.needs_grad(mid)) {
      auto& dm = t.grad(mid);
      const auto& xvv = t.value(xid);
      for (int c = 0; c < C; ++c) dm.data += g.data.segment(c * N, N) * xvv.data.segment(c * N, N);
    }
  });
}

/// x + scale[c] * noise, noise broadcast over channels. scale is per-channel.
template <typename S>
Var<S> add_scaled_noise(Var<S> x, Var<S> scale_ch, Var<S> noise) {
  const auto& xv = x.val();
  const auto& sv = scale_ch.val();
  const auto& nv = noise.val();
  const int C = xv.dim(0);
  const int64_t N = static_cast<int64_t>(xv.dim(1)) * xv.dim(2);
  if (sv.rank() != 1 || sv.dim(0) != C) throw ShapeError("add_scaled_noise: scale must be [C]");
  if (nv.rank() != 3 || nv.dim(0) != 1 || nv.dim(1) != xv.dim(1) || nv.dim(2) != xv.dim(2))
    throw ShapeError("add_scaled_noise: noise must be [1,H,W]");
  Tape<S>& T = *x.tape;
  Tensor<S> out = xv;
  for (int c = 0; c < C; ++c) out.data.segment(c * N, N) += sv.data[c] * nv.data;
  const int xid = x.id, sid = scale_ch.id, nid = noise.id;
  const int yid = static_cast<int>(T.size());
  const bool ng = T.needs_grad(xid) || T.needs_grad(sid);
  return T.make(std::move(out), ng, [=](Tape<S>& t) {
    const auto& g = t.grad(yid);
    if (t.needs_grad(xid)) t.grad(xid).data += g.data;
    if (t.needs_grad(sid)) {
      auto& ds = t.grad(sid);
      const auto& n = t.value(nid);
      for (int c = 0; c < C; ++c) ds.data[c] += (g.data.segment(c * N, N) * n.data).sum();
    }
  });
}

// operator sugar
template <typename S>
Var<S> operator+(Var<S> a, Var<S> b) {
  return add(a, b);
}
template <typename S>
Var<S> operator-(Var<S> a, Var<S> b) {
  return sub(a, b);
}
template <typename S>
Var<S> operator*(Var<S> a, Var<S> b) {
  return mul(a, b);
}

// common loss building blocks
template <typename S>
Var<S> mean_sq_diff(Var<S> a, Var<S> b) {
  return mean_all(square(sub(a, b)));
}
template <typename S>
Var<S> mean_abs_diff(Var<S> a, Var<S> b) {
  return mean_all(abs_val(sub(a, b)));
}

}  // namespace nsg

#endif
