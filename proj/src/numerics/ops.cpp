#include "sinessl/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "sinessl/errors.hpp"

namespace sinessl::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

Graph& graph_of(Var a) {
  if (!a.graph) throw ContractError("Var is not attached to a graph");
  return *a.graph;
}

Graph& graph_of(Var a, Var b) {
  if (a.graph != b.graph || !a.graph) throw ContractError("operands belong to different graphs");
  return *a.graph;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_to_string(t.shape()));
  }
}

const Tensor& val(Graph& g, std::size_t id) { return g.value(Var{&g, id}); }

// Column matrix of 3x3 patches for a block of samples: rows (c, ky, kx),
// columns (n, y, x). Every entry is written, padding included.
void im2col3x3(std::span<const double> x, std::size_t n_batch, std::size_t channels, std::size_t h, std::size_t w,
               std::vector<double>& col) {
  const std::size_t hw = h * w;
  const std::size_t ncols = n_batch * hw;
  col.resize(channels * 9 * ncols);
  for (std::size_t c = 0; c < channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* row = col.data() + ((c * 9) + ky * 3 + kx) * ncols;
        const int dy = ky - 1;
        const int dx = kx - 1;
        for (std::size_t n = 0; n < n_batch; ++n) {
          const double* src = x.data() + (n * channels + c) * hw;
          double* dst = row + n * hw;
          for (std::size_t y = 0; y < h; ++y) {
            const long yy = static_cast<long>(y) + dy;
            double* d = dst + y * w;
            if (yy < 0 || yy >= static_cast<long>(h)) {
              std::fill_n(d, w, 0.0);
              continue;
            }
            const double* s = src + static_cast<std::size_t>(yy) * w;
            if (dx == 0) {
              std::copy_n(s, w, d);
            } else if (dx < 0) {
              d[0] = 0.0;
              std::copy_n(s, w - 1, d + 1);
            } else {
              std::copy_n(s + 1, w - 1, d);
              d[w - 1] = 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im3x3(const double* col, std::size_t n_batch, std::size_t channels, std::size_t h, std::size_t w,
               std::span<double> gx) {
  const std::size_t hw = h * w;
  const std::size_t ncols = n_batch * hw;
  for (std::size_t c = 0; c < channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = col + ((c * 9) + ky * 3 + kx) * ncols;
        const int dy = ky - 1;
        const int dx = kx - 1;
        const std::size_t x_lo = dx < 0 ? 1 : 0;
        const std::size_t x_hi = dx > 0 ? w - 1 : w;
        for (std::size_t n = 0; n < n_batch; ++n) {
          double* dst = gx.data() + (n * channels + c) * hw;
          const double* src = row + n * hw;
          for (std::size_t y = 0; y < h; ++y) {
            const long yy = static_cast<long>(y) + dy;
            if (yy < 0 || yy >= static_cast<long>(h)) continue;
            double* d = dst + static_cast<std::size_t>(yy) * w;
            const double* s = src + y * w;
            for (std::size_t xo = x_lo; xo < x_hi; ++xo) d[static_cast<long>(xo) + dx] += s[xo];
          }
        }
      }
    }
  }
}

}  // namespace

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  require_same_shape("add", ta, tb);
  Tensor out(ta.shape(), std::vector<double>(ta.numel()));
  auto o = out.data();
  auto da = ta.data();
  auto db = tb.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = da[i] + db[i];
  const std::size_t ia = a.id, ib = b.id;
  return g.push(OpKind::Add, {ia, ib}, std::move(out), [ia, ib](Graph& gr, std::span<const double> go) {
    for (auto id : {ia, ib}) {
      auto gi = gr.input_grad(id);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += go[i];
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  require_same_shape("mul", ta, tb);
  Tensor out(ta.shape(), std::vector<double>(ta.numel()));
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = ta[i] * tb[i];
  const std::size_t ia = a.id, ib = b.id;
  return g.push(OpKind::Mul, {ia, ib}, std::move(out), [ia, ib](Graph& gr, std::span<const double> go) {
    const Tensor& va = val(gr, ia);
    const Tensor& vb = val(gr, ib);
    auto ga = gr.input_grad(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * vb[i];
    auto gb = gr.input_grad(ib);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * va[i];
  });
}

Var scale(Var a, double factor) {
  Graph& g = graph_of(a);
  const Tensor& ta = a.value();
  Tensor out(ta.shape(), std::vector<double>(ta.numel()));
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = ta[i] * factor;
  const std::size_t ia = a.id;
  return g.push(OpKind::Scale, {ia}, std::move(out), [ia, factor](Graph& gr, std::span<const double> go) {
    auto gi = gr.input_grad(ia);
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += go[i] * factor;
  });
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_to_string(ta.shape()) + " and " +
                         shape_to_string(tb.shape()));
  }
  const auto m = static_cast<Eigen::Index>(ta.dim(0));
  const auto k = static_cast<Eigen::Index>(ta.dim(1));
  const auto n = static_cast<Eigen::Index>(tb.dim(1));
  Tensor out({ta.dim(0), tb.dim(1)}, std::vector<double>(ta.dim(0) * tb.dim(1)));
  MatMap(out.data().data(), m, n).noalias() =
      ConstMatMap(ta.data().data(), m, k) * ConstMatMap(tb.data().data(), k, n);
  const std::size_t ia = a.id, ib = b.id;
  return g.push(OpKind::MatMul, {ia, ib}, std::move(out), [ia, ib, m, k, n](Graph& gr, std::span<const double> go) {
    ConstMatMap gmat(go.data(), m, n);
    if (auto ga = gr.input_grad(ia); !ga.empty()) {
      MatMap(ga.data(), m, k).noalias() += gmat * ConstMatMap(val(gr, ib).data().data(), k, n).transpose();
    }
    if (auto gb = gr.input_grad(ib); !gb.empty()) {
      MatMap(gb.data(), k, n).noalias() += ConstMatMap(val(gr, ia).data().data(), m, k).transpose() * gmat;
    }
  });
}

namespace {

// Samples per GEMM so that one column block stays cache resident.
std::size_t conv_chunk(std::size_t hw, std::size_t n_batch) {
  constexpr std::size_t kTargetColumns = 1024;
  return std::clamp<std::size_t>(kTargetColumns / hw, 1, n_batch);
}

}  // namespace

Var conv2d(Var x, Var w) {
  Graph& g = graph_of(x, w);
  const Tensor& tx = x.value();
  const Tensor& tw = w.value();
  require_rank("conv2d input", tx, 4);
  require_rank("conv2d kernel", tw, 4);
  if (tw.dim(2) != 3 || tw.dim(3) != 3) {
    throw DimensionError("conv2d: kernel must be 3x3, got " + shape_to_string(tw.shape()));
  }
  if (tw.dim(1) != tx.dim(1)) {
    throw DimensionError("conv2d: channel mismatch between input " + shape_to_string(tx.shape()) + " and kernel " +
                         shape_to_string(tw.shape()));
  }
  const std::size_t nb = tx.dim(0), c = tx.dim(1), h = tx.dim(2), wd = tx.dim(3), f = tw.dim(0);
  const std::size_t hw = h * wd;
  const std::size_t chunk = conv_chunk(hw, nb);
  const auto k = static_cast<Eigen::Index>(c * 9);
  const auto fi = static_cast<Eigen::Index>(f);
  ConstMatMap wmat(tw.data().data(), fi, k);

  Tensor out({nb, f, h, wd}, std::vector<double>(nb * f * hw));
  thread_local std::vector<double> col;
  thread_local RowMat res;
  for (std::size_t n0 = 0; n0 < nb; n0 += chunk) {
    const std::size_t m = std::min(chunk, nb - n0);
    const auto cols = static_cast<Eigen::Index>(m * hw);
    im2col3x3(tx.data().subspan(n0 * c * hw, m * c * hw), m, c, h, wd, col);
    if (m == 1) {
      MatMap(out.data().data() + n0 * f * hw, fi, cols).noalias() = wmat * ConstMatMap(col.data(), k, cols);
      continue;
    }
    res.noalias() = wmat * ConstMatMap(col.data(), k, cols);
    for (std::size_t n = 0; n < m; ++n) {
      for (std::size_t ff = 0; ff < f; ++ff) {
        std::copy_n(res.data() + ff * m * hw + n * hw, hw, out.data().data() + ((n0 + n) * f + ff) * hw);
      }
    }
  }

  const std::size_t ix = x.id, iw = w.id;
  return g.push(OpKind::Conv2d, {ix, iw}, std::move(out),
                [ix, iw, nb, c, h, wd, f, hw, chunk, k, fi](Graph& gr, std::span<const double> go) {
                  auto gw = gr.input_grad(iw);
                  auto gx = gr.input_grad(ix);
                  const Tensor& vx = val(gr, ix);
                  ConstMatMap wmat(val(gr, iw).data().data(), fi, k);
                  thread_local std::vector<double> col;
                  thread_local RowMat gmat, gcol;
                  for (std::size_t n0 = 0; n0 < nb; n0 += chunk) {
                    const std::size_t m = std::min(chunk, nb - n0);
                    const auto cols = static_cast<Eigen::Index>(m * hw);
                    gmat.resize(fi, cols);
                    for (std::size_t n = 0; n < m; ++n) {
                      for (std::size_t ff = 0; ff < f; ++ff) {
                        std::copy_n(go.data() + ((n0 + n) * f + ff) * hw, hw, gmat.data() + ff * m * hw + n * hw);
                      }
                    }
                    if (!gw.empty()) {
                      im2col3x3(vx.data().subspan(n0 * c * hw, m * c * hw), m, c, h, wd, col);
                      MatMap(gw.data(), fi, k).noalias() += gmat * ConstMatMap(col.data(), k, cols).transpose();
                    }
                    if (!gx.empty()) {
                      gcol.noalias() = wmat.transpose() * gmat;
                      col2im3x3(gcol.data(), m, c, h, wd, gx.subspan(n0 * c * hw, m * c * hw));
                    }
                  }
                });
}

Var channel_add(Var x, Var b) {
  Graph& g = graph_of(x, b);
  const Tensor& tx = x.value();
  const Tensor& tb = b.value();
  if (tx.rank() < 2) throw DimensionError("channel_add: input needs rank >= 2, got " + shape_to_string(tx.shape()));
  const std::size_t nb = tx.dim(0), c = tx.dim(1);
  const std::size_t inner = tx.numel() / (nb * c);
  bool per_sample = false;
  if (tb.rank() == 1 && tb.dim(0) == c) {
    per_sample = false;
  } else if (tb.rank() == 2 && tb.dim(0) == nb && tb.dim(1) == c) {
    per_sample = true;
  } else {
    throw DimensionError("channel_add: bias " + shape_to_string(tb.shape()) + " incompatible with input " +
                         shape_to_string(tx.shape()));
  }
  Tensor out = tx.reshaped(tx.shape());
  auto o = out.data();
  for (std::size_t n = 0; n < nb; ++n) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double bv = per_sample ? tb[n * c + ch] : tb[ch];
      double* p = o.data() + (n * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) p[i] += bv;
    }
  }
  const std::size_t ix = x.id, ib = b.id;
  return g.push(OpKind::ChannelAdd, {ix, ib}, std::move(out),
                [ix, ib, nb, c, inner, per_sample](Graph& gr, std::span<const double> go) {
                  if (auto gx = gr.input_grad(ix); !gx.empty()) {
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
                  }
                  if (auto gb = gr.input_grad(ib); !gb.empty()) {
                    for (std::size_t n = 0; n < nb; ++n) {
                      for (std::size_t ch = 0; ch < c; ++ch) {
                        const double* p = go.data() + (n * c + ch) * inner;
                        double s = 0.0;
                        for (std::size_t i = 0; i < inner; ++i) s += p[i];
                        gb[per_sample ? n * c + ch : ch] += s;
                      }
                    }
                  }
                });
}

Var relu(Var x) {
  Graph& g = graph_of(x);
  const Tensor& tx = x.value();
  Tensor out(tx.shape(), std::vector<double>(tx.numel()));
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = tx[i] > 0.0 ? tx[i] : 0.0;
  const std::size_t ix = x.id;
  return g.push(OpKind::Relu, {ix}, std::move(out), [ix](Graph& gr, std::span<const double> go) {
    const Tensor& vx = val(gr, ix);
    auto gx = gr.input_grad(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (vx[i] > 0.0) gx[i] += go[i];
    }
  });
}

Var avg_pool2(Var x) {
  Graph& g = graph_of(x);
  const Tensor& tx = x.value();
  require_rank("avg_pool2", tx, 4);
  const std::size_t planes = tx.dim(0) * tx.dim(1), h = tx.dim(2), w = tx.dim(3);
  if (h % 2 || w % 2) throw DimensionError("avg_pool2: spatial size must be even, got " + shape_to_string(tx.shape()));
  const std::size_t ho = h / 2, wo = w / 2;
  Tensor out({tx.dim(0), tx.dim(1), ho, wo}, 0.0);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* s = tx.data().data() + p * h * w;
    double* d = out.data().data() + p * ho * wo;
    for (std::size_t y = 0; y < ho; ++y) {
      for (std::size_t xx = 0; xx < wo; ++xx) {
        const double* s0 = s + (2 * y) * w + 2 * xx;
        d[y * wo + xx] = 0.25 * (s0[0] + s0[1] + s0[w] + s0[w + 1]);
      }
    }
  }
  const std::size_t ix = x.id;
  return g.push(OpKind::AvgPool2, {ix}, std::move(out), [ix, planes, h, w, ho, wo](Graph& gr, std::span<const double> go) {
    auto gx = gr.input_grad(ix);
    for (std::size_t p = 0; p < planes; ++p) {
      double* d = gx.data() + p * h * w;
      const double* s = go.data() + p * ho * wo;
      for (std::size_t y = 0; y < ho; ++y) {
        for (std::size_t xx = 0; xx < wo; ++xx) {
          const double v = 0.25 * s[y * wo + xx];
          double* d0 = d + (2 * y) * w + 2 * xx;
          d0[0] += v;
          d0[1] += v;
          d0[w] += v;
          d0[w + 1] += v;
        }
      }
    }
  });
}

Var global_avg_pool(Var x) {
  Graph& g = graph_of(x);
  const Tensor& tx = x.value();
  require_rank("global_avg_pool", tx, 4);
  const std::size_t nb = tx.dim(0), c = tx.dim(1), hw = tx.dim(2) * tx.dim(3);
  Tensor out({nb, c}, 0.0);
  for (std::size_t p = 0; p < nb * c; ++p) {
    const double* s = tx.data().data() + p * hw;
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += s[i];
    out[p] = acc / static_cast<double>(hw);
  }
  const std::size_t ix = x.id;
  return g.push(OpKind::GlobalAvgPool, {ix}, std::move(out), [ix, nb, c, hw](Graph& gr, std::span<const double> go) {
    auto gx = gr.input_grad(ix);
    for (std::size_t p = 0; p < nb * c; ++p) {
      const double v = go[p] / static_cast<double>(hw);
      double* d = gx.data() + p * hw;
      for (std::size_t i = 0; i < hw; ++i) d[i] += v;
    }
  });
}

Var upsample2(Var x) {
  Graph& g = graph_of(x);
  const Tensor& tx = x.value();
  require_rank("upsample2", tx, 4);
  const std::size_t planes = tx.dim(0) * tx.dim(1), h = tx.dim(2), w = tx.dim(3);
  const std::size_t ho = 2 * h, wo = 2 * w;
  Tensor out({tx.dim(0), tx.dim(1), ho, wo}, 0.0);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* s = tx.data().data() + p * h * w;
    double* d = out.data().data() + p * ho * wo;
    for (std::size_t y = 0; y < h; ++y) {
      double* r0 = d + (2 * y) * wo;
      const double* sr = s + y * w;
      for (std::size_t xx = 0; xx < w; ++xx) r0[2 * xx] = r0[2 * xx + 1] = sr[xx];
      std::copy_n(r0, wo, r0 + wo);
    }
  }
  const std::size_t ix = x.id;
  return g.push(OpKind::Upsample2, {ix}, std::move(out), [ix, planes, h, w, ho, wo](Graph& gr, std::span<const double> go) {
    auto gx = gr.input_grad(ix);
    for (std::size_t p = 0; p < planes; ++p) {
      double* d = gx.data() + p * h * w;
      const double* s = go.data() + p * ho * wo;
      for (std::size_t y = 0; y < h; ++y) {
        double* dr = d + y * w;
        const double* r0 = s + (2 * y) * wo;
        const double* r1 = r0 + wo;
        for (std::size_t xx = 0; xx < w; ++xx) dr[xx] += r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1];
      }
    }
  });
}

Var sample_norm(Var x, double eps) {
  Graph& g = graph_of(x);
  const Tensor& tx = x.value();
  if (tx.rank() < 2) throw DimensionError("sample_norm: input needs rank >= 2, got " + shape_to_string(tx.shape()));
  const std::size_t nb = tx.dim(0);
  const std::size_t inner = tx.numel() / nb;
  Tensor out(tx.shape(), std::vector<double>(tx.numel()));
  std::vector<double> inv_std(nb);
  for (std::size_t n = 0; n < nb; ++n) {
    const double* s = tx.data().data() + n * inner;
    double mean = 0.0;
    for (std::size_t i = 0; i < inner; ++i) mean += s[i];
    mean /= static_cast<double>(inner);
    double var = 0.0;
    for (std::size_t i = 0; i < inner; ++i) var += (s[i] - mean) * (s[i] - mean);
    var /= static_cast<double>(inner);
    inv_std[n] = 1.0 / std::sqrt(var + eps);
    double* d = out.data().data() + n * inner;
    for (std::size_t i = 0; i < inner; ++i) d[i] = (s[i] - mean) * inv_std[n];
  }
  const std::size_t ix = x.id;
  const std::size_t self = g.size();
  return g.push(OpKind::SampleNorm, {ix}, std::move(out),
                [ix, self, nb, inner, inv_std = std::move(inv_std)](Graph& gr, std::span<const double> go) {
                  const Tensor& y = val(gr, self);
                  auto gx = gr.input_grad(ix);
                  for (std::size_t n = 0; n < nb; ++n) {
                    const double* gy = go.data() + n * inner;
                    const double* yy = y.data().data() + n * inner;
                    double mean_g = 0.0, mean_gy = 0.0;
                    for (std::size_t i = 0; i < inner; ++i) {
                      mean_g += gy[i];
                      mean_gy += gy[i] * yy[i];
                    }
                    mean_g /= static_cast<double>(inner);
                    mean_gy /= static_cast<double>(inner);
                    double* d = gx.data() + n * inner;
                    for (std::size_t i = 0; i < inner; ++i) d[i] += inv_std[n] * (gy[i] - mean_g - yy[i] * mean_gy);
                  }
                });
}

Var concat_channels(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  if (ta.rank() < 2 || ta.rank() != tb.rank() || ta.dim(0) != tb.dim(0) ||
      !std::equal(ta.shape().begin() + 2, ta.shape().end(), tb.shape().begin() + 2)) {
    throw DimensionError("concat_channels: incompatible shapes " + shape_to_string(ta.shape()) + " and " +
                         shape_to_string(tb.shape()));
  }
  const std::size_t nb = ta.dim(0);
  const std::size_t sa = ta.numel() / nb, sb = tb.numel() / nb;
  Shape shape = ta.shape();
  shape[1] += tb.dim(1);
  Tensor out(shape, std::vector<double>(ta.numel() + tb.numel()));
  for (std::size_t n = 0; n < nb; ++n) {
    std::copy_n(ta.data().data() + n * sa, sa, out.data().data() + n * (sa + sb));
    std::copy_n(tb.data().data() + n * sb, sb, out.data().data() + n * (sa + sb) + sa);
  }
  const std::size_t ia = a.id, ib = b.id;
  return g.push(OpKind::Concat, {ia, ib}, std::move(out), [ia, ib, nb, sa, sb](Graph& gr, std::span<const double> go) {
    auto ga = gr.input_grad(ia);
    auto gb = gr.input_grad(ib);
    for (std::size_t n = 0; n < nb; ++n) {
      const double* s = go.data() + n * (sa + sb);
      if (!ga.empty()) {
        for (std::size_t i = 0; i < sa; ++i) ga[n * sa + i] += s[i];
      }
      if (!gb.empty()) {
        for (std::size_t i = 0; i < sb; ++i) gb[n * sb + i] += s[sa + i];
      }
    }
  });
}

Var reshape(Var x, Shape shape) {
  Graph& g = graph_of(x);
  Tensor out = x.value().reshaped(std::move(shape));
  const std::size_t ix = x.id;
  return g.push(OpKind::Reshape, {ix}, std::move(out), [ix](Graph& gr, std::span<const double> go) {
    auto gx = gr.input_grad(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
  });
}

Var sum(Var x) {
  Graph& g = graph_of(x);
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  const std::size_t ix = x.id;
  return g.push(OpKind::Sum, {ix}, Tensor::scalar(acc), [ix](Graph& gr, std::span<const double> go) {
    auto gx = gr.input_grad(ix);
    for (auto& v : gx) v += go[0];
  });
}

Tensor softmax(const Tensor& logits) {
  require_rank("softmax", logits, 2);
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  Tensor out(logits.shape(), std::vector<double>(logits.numel()));
  for (std::size_t r = 0; r < b; ++r) {
    const double* z = logits.data().data() + r * c;
    double* p = out.data().data() + r * c;
    const double mx = *std::max_element(z, z + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      p[j] = std::exp(z[j] - mx);
      total += p[j];
    }
    for (std::size_t j = 0; j < c; ++j) p[j] /= total;
  }
  return out;
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> targets) {
  const std::vector<double> ones(targets.size(), 1.0);
  return softmax_cross_entropy(logits, targets, ones);
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> targets, std::span<const double> weights) {
  Graph& g = graph_of(logits);
  const Tensor& tz = logits.value();
  require_rank("softmax_cross_entropy", tz, 2);
  const std::size_t b = tz.dim(0), c = tz.dim(1);
  if (c < 2) throw DimensionError("softmax_cross_entropy: need at least 2 classes, got " + shape_to_string(tz.shape()));
  if (targets.size() != b || weights.size() != b) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets and " +
                         std::to_string(weights.size()) + " weights for logits " + shape_to_string(tz.shape()));
  }
  for (auto t : targets) {
    if (t >= c) throw IndexError("softmax_cross_entropy: target " + std::to_string(t) + " outside [0, " + std::to_string(c) + ")");
  }
  Tensor probs = softmax(tz);
  double loss = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    if (weights[r] == 0.0) continue;
    const double* z = tz.data().data() + r * c;
    const double mx = *std::max_element(z, z + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(z[j] - mx);
    loss += weights[r] * (std::log(total) - (z[targets[r]] - mx));
  }
  loss /= static_cast<double>(b);

  const std::size_t iz = logits.id;
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  std::vector<double> wts(weights.begin(), weights.end());
  return g.push(OpKind::SoftmaxCrossEntropy, {iz}, Tensor::scalar(loss),
                [iz, b, c, probs = std::move(probs), tgt = std::move(tgt), wts = std::move(wts)](
                    Graph& gr, std::span<const double> go) {
                  auto gz = gr.input_grad(iz);
                  const double s = go[0] / static_cast<double>(b);
                  for (std::size_t r = 0; r < b; ++r) {
                    if (wts[r] == 0.0) continue;
                    for (std::size_t j = 0; j < c; ++j) {
                      const double onehot = j == tgt[r] ? 1.0 : 0.0;
                      gz[r * c + j] += s * wts[r] * (probs[r * c + j] - onehot);
                    }
                  }
                });
}

Var mse(Var pred, Var target) {
  Graph& g = graph_of(pred, target);
  const Tensor& tp = pred.value();
  const Tensor& tt = target.value();
  require_same_shape("mse", tp, tt);
  double acc = 0.0;
  for (std::size_t i = 0; i < tp.numel(); ++i) {
    const double d = tp[i] - tt[i];
    acc += d * d;
  }
  const double count = static_cast<double>(tp.numel());
  const std::size_t ip = pred.id, it = target.id;
  return g.push(OpKind::Mse, {ip, it}, Tensor::scalar(acc / count), [ip, it, count](Graph& gr, std::span<const double> go) {
    const Tensor& vp = val(gr, ip);
    const Tensor& vt = val(gr, it);
    const double s = 2.0 * go[0] / count;
    auto gp = gr.input_grad(ip);
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += s * (vp[i] - vt[i]);
    auto gt = gr.input_grad(it);
    for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= s * (vp[i] - vt[i]);
  });
}

}  // namespace sinessl::ops
