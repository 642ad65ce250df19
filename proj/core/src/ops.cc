#include "fednewsrec/ops.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "fednewsrec/error.h"

namespace fednewsrec::nn {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

std::string pair_string(const Tensor& a, const Tensor& b) {
  return shape_string(a.shape()) + " and " + shape_string(b.shape());
}

// y = x * W + b for one row; b may be null.
void affine_row(std::span<const double> x, const Tensor& w, const Tensor* b,
                std::span<double> y) {
  const std::size_t out = w.cols();
  for (std::size_t j = 0; j < out; ++j) y[j] = b ? (*b)[j] : 0.0;
  for (std::size_t p = 0; p < x.size(); ++p) {
    const double xp = x[p];
    if (xp == 0.0) continue;
    const auto wrow = w.row(p);
    for (std::size_t j = 0; j < out; ++j) y[j] += xp * wrow[j];
  }
}

// dW += x^T dy, dx += dy W^T for a single row.
void affine_row_backward(std::span<const double> x, const Tensor& w,
                         std::span<const double> dy, Tensor& dw, std::span<double> dx) {
  const std::size_t out = w.cols();
  for (std::size_t p = 0; p < x.size(); ++p) {
    auto dwrow = dw.row(p);
    const auto wrow = w.row(p);
    double acc = 0.0;
    for (std::size_t j = 0; j < out; ++j) {
      dwrow[j] += x[p] * dy[j];
      acc += dy[j] * wrow[j];
    }
    if (!dx.empty()) dx[p] += acc;
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.rows(),
          "matmul shape mismatch: " + pair_string(a, b));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c({m, n});
  // i-p-j order: contiguous inner loop, same per-element summation order.
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* cv = c.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = cv + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      const double* brow = bv + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += x * brow[j];
    }
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.rows() == b.rows(),
          "matmul_tn shape mismatch: " + pair_string(a, b));
  const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
  Tensor c({m, n});
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* cv = c.values().data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = bv + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double x = av[p * m + i];
      double* crow = cv + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += x * brow[j];
    }
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.cols(),
          "matmul_nt shape mismatch: " + pair_string(a, b));
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < n; ++j) c(i, j) = dot(ar, b.row(j));
  }
  (void)k;
  return c;
}

void add_inplace(Tensor& dst, const Tensor& src) {
  require(dst.shape() == src.shape(), "add shape mismatch: " + pair_string(dst, src));
  add_inplace(dst.values(), src.values());
}

void add_inplace(std::span<double> dst, std::span<const double> src, double scale) {
  require(dst.size() == src.size(), "add length mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot length mismatch: " + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

std::vector<double> softmax(std::span<const double> x) {
  require(!x.empty(), "softmax of empty input");
  const double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

Tensor softmax(const Tensor& x) {
  require(!x.empty(), "softmax of empty input");
  return Tensor(x.shape(), softmax(x.values()));
}

std::vector<double> softmax_backward(std::span<const double> y, std::span<const double> dy) {
  const double inner = dot(y, dy);
  std::vector<double> dx(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = y[i] * (dy[i] - inner);
  return dx;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// --- GRU -------------------------------------------------------------------

Tensor gru_step(const GruWeights& w, const Tensor& h_prev, const Tensor& x,
                GruStepCache* cache) {
  const std::size_t hidden = w.u_z.rows();
  require(w.w_z.rows() == x.size() && w.w_z.cols() == hidden && h_prev.size() == hidden,
          "gru_step: input " + shape_string(x.shape()) + ", state " +
              shape_string(h_prev.shape()) + ", weights " + shape_string(w.w_z.shape()));
  std::vector<double> z(hidden), r(hidden), c(hidden), tmp(hidden), rh(hidden);
  const auto xv = x.values();
  const auto hv = h_prev.values();

  affine_row(xv, w.w_z, &w.b_z, z);
  affine_row(hv, w.u_z, nullptr, tmp);
  for (std::size_t j = 0; j < hidden; ++j) z[j] = sigmoid(z[j] + tmp[j]);

  affine_row(xv, w.w_r, &w.b_r, r);
  affine_row(hv, w.u_r, nullptr, tmp);
  for (std::size_t j = 0; j < hidden; ++j) r[j] = sigmoid(r[j] + tmp[j]);

  for (std::size_t j = 0; j < hidden; ++j) rh[j] = r[j] * hv[j];
  affine_row(xv, w.w_h, &w.b_h, c);
  affine_row(rh, w.u_h, nullptr, tmp);
  for (std::size_t j = 0; j < hidden; ++j) c[j] = std::tanh(c[j] + tmp[j]);

  Tensor h({hidden});
  for (std::size_t j = 0; j < hidden; ++j) h[j] = (1.0 - z[j]) * hv[j] + z[j] * c[j];
  if (cache) {
    cache->x.assign(xv.begin(), xv.end());
    cache->h_prev.assign(hv.begin(), hv.end());
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->candidate = std::move(c);
  }
  return h;
}

std::vector<double> gru_step_backward(const GruWeights& w, const GruStepCache& cache,
                                      std::span<const double> dh, GruGrads& grads,
                                      std::span<double> dx) {
  const std::size_t hidden = cache.z.size();
  const auto& z = cache.z;
  const auto& r = cache.r;
  const auto& c = cache.candidate;
  const auto& hp = cache.h_prev;

  std::vector<double> dh_prev(hidden), dz_pre(hidden), dc_pre(hidden), dr_pre(hidden);
  std::vector<double> rh(hidden), drh(hidden, 0.0);
  for (std::size_t j = 0; j < hidden; ++j) {
    dh_prev[j] = dh[j] * (1.0 - z[j]);
    dz_pre[j] = dh[j] * (c[j] - hp[j]) * z[j] * (1.0 - z[j]);
    dc_pre[j] = dh[j] * z[j] * (1.0 - c[j] * c[j]);
    rh[j] = r[j] * hp[j];
  }

  // Candidate branch.
  affine_row_backward(cache.x, w.w_h, dc_pre, grads.w_h, dx);
  affine_row_backward(rh, w.u_h, dc_pre, grads.u_h, drh);
  add_inplace(grads.b_h.values(), dc_pre);
  for (std::size_t j = 0; j < hidden; ++j) {
    dh_prev[j] += drh[j] * r[j];
    dr_pre[j] = drh[j] * hp[j] * r[j] * (1.0 - r[j]);
  }

  // Update and reset gates.
  affine_row_backward(cache.x, w.w_z, dz_pre, grads.w_z, dx);
  affine_row_backward(hp, w.u_z, dz_pre, grads.u_z, dh_prev);
  add_inplace(grads.b_z.values(), dz_pre);

  affine_row_backward(cache.x, w.w_r, dr_pre, grads.w_r, dx);
  affine_row_backward(hp, w.u_r, dr_pre, grads.u_r, dh_prev);
  add_inplace(grads.b_r.values(), dr_pre);
  return dh_prev;
}

Tensor gru_sequence(const GruWeights& w, const Tensor& x, GruSequenceCache* cache) {
  require(x.rank() == 2, "gru_sequence expects a matrix input");
  Tensor h({w.u_z.rows()});
  if (cache) cache->steps.assign(x.rows(), {});
  for (std::size_t t = 0; t < x.rows(); ++t) {
    const auto row = x.row(t);
    const Tensor xt = Tensor::vector({row.begin(), row.end()});
    h = gru_step(w, h, xt, cache ? &cache->steps[t] : nullptr);
  }
  return h;
}

Tensor gru_sequence_backward(const GruWeights& w, const GruSequenceCache& cache,
                             std::span<const double> d_final, GruGrads& grads) {
  const std::size_t steps = cache.steps.size();
  Tensor dx({steps, w.w_z.rows()});
  std::vector<double> dh(d_final.begin(), d_final.end());
  for (std::size_t t = steps; t-- > 0;) {
    dh = gru_step_backward(w, cache.steps[t], dh, grads, dx.row(t));
  }
  return dx;
}

// --- Self-attention --------------------------------------------------------

Tensor multihead_self_attention(const AttentionWeights& w, const Tensor& x,
                                AttentionCache* cache) {
  require(x.rank() == 2 && x.rows() >= 1, "self-attention needs at least one row");
  const std::size_t width = w.heads * w.head_dim;
  require(w.query.cols() == width && w.key.cols() == width && w.value.cols() == width,
          "self-attention projection width must be heads*head_dim");
  const std::size_t len = x.rows();
  Tensor q = matmul(x, w.query);
  Tensor k = matmul(x, w.key);
  Tensor v = matmul(x, w.value);
  const double scale = 1.0 / std::sqrt(static_cast<double>(w.head_dim));

  Tensor out({len, width});
  std::vector<Tensor> probs;
  probs.reserve(w.heads);
  std::vector<double> scores(len);
  for (std::size_t h = 0; h < w.heads; ++h) {
    const std::size_t off = h * w.head_dim;
    Tensor a({len, len});
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = 0; j < len; ++j) {
        double s = 0.0;
        for (std::size_t d = 0; d < w.head_dim; ++d) s += q(i, off + d) * k(j, off + d);
        scores[j] = s * scale;
      }
      const auto p = softmax(scores);
      std::copy(p.begin(), p.end(), a.row(i).begin());
      for (std::size_t j = 0; j < len; ++j) {
        for (std::size_t d = 0; d < w.head_dim; ++d) out(i, off + d) += p[j] * v(j, off + d);
      }
    }
    probs.push_back(std::move(a));
  }
  if (cache) {
    cache->x = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
  }
  return out;
}

Tensor multihead_self_attention_backward(const AttentionWeights& w,
                                         const AttentionCache& cache, const Tensor& dout,
                                         AttentionGrads& grads) {
  const std::size_t len = cache.x.rows();
  const std::size_t width = w.heads * w.head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(w.head_dim));
  Tensor dq({len, width}), dk({len, width}), dv({len, width});
  std::vector<double> dprob(len);

  for (std::size_t h = 0; h < w.heads; ++h) {
    const std::size_t off = h * w.head_dim;
    const Tensor& a = cache.probs[h];
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = 0; j < len; ++j) {
        double s = 0.0;
        for (std::size_t d = 0; d < w.head_dim; ++d) {
          s += dout(i, off + d) * cache.v(j, off + d);
          dv(j, off + d) += a(i, j) * dout(i, off + d);
        }
        dprob[j] = s;
      }
      const auto dscore = softmax_backward(a.row(i), dprob);
      for (std::size_t j = 0; j < len; ++j) {
        const double g = dscore[j] * scale;
        if (g == 0.0) continue;
        for (std::size_t d = 0; d < w.head_dim; ++d) {
          dq(i, off + d) += g * cache.k(j, off + d);
          dk(j, off + d) += g * cache.q(i, off + d);
        }
      }
    }
  }
  add_inplace(grads.query, matmul_tn(cache.x, dq));
  add_inplace(grads.key, matmul_tn(cache.x, dk));
  add_inplace(grads.value, matmul_tn(cache.x, dv));
  Tensor dx = matmul_nt(dq, w.query);
  add_inplace(dx, matmul_nt(dk, w.key));
  add_inplace(dx, matmul_nt(dv, w.value));
  return dx;
}

// --- Additive attention pooling -------------------------------------------

Tensor additive_attention_pool(const Tensor& proj, const Tensor& query, const Tensor& x,
                               PoolCache* cache) {
  require(x.rank() == 2 && x.rows() >= 1, "attention pooling needs at least one row");
  require(proj.rows() == x.cols() && proj.cols() == query.size(),
          "attention pooling shape mismatch: input " + shape_string(x.shape()) +
              ", projection " + shape_string(proj.shape()) + ", query " +
              shape_string(query.shape()));
  const std::size_t len = x.rows(), qdim = proj.cols();
  Tensor hidden({len, qdim});
  std::vector<double> logits(len);
  for (std::size_t i = 0; i < len; ++i) {
    auto hrow = hidden.row(i);
    affine_row(x.row(i), proj, nullptr, hrow);
    for (double& v : hrow) v = std::tanh(v);
    logits[i] = dot(hrow, query.values());
  }
  auto alpha = softmax(logits);
  Tensor out({x.cols()});
  for (std::size_t i = 0; i < len; ++i) add_inplace(out.values(), x.row(i), alpha[i]);
  if (cache) {
    cache->x = x;
    cache->hidden = std::move(hidden);
    cache->alpha = std::move(alpha);
  }
  return out;
}

Tensor additive_attention_pool_backward(const Tensor& proj, const Tensor& query,
                                        const PoolCache& cache,
                                        std::span<const double> dout, Tensor& dproj,
                                        Tensor& dquery) {
  const Tensor& x = cache.x;
  const std::size_t len = x.rows(), qdim = proj.cols();
  Tensor dx(x.shape());
  std::vector<double> dalpha(len);
  for (std::size_t i = 0; i < len; ++i) {
    dalpha[i] = dot(dout, x.row(i));
    add_inplace(dx.row(i), dout, cache.alpha[i]);
  }
  const auto dlogit = softmax_backward(cache.alpha, dalpha);
  std::vector<double> dpre(qdim);
  for (std::size_t i = 0; i < len; ++i) {
    const auto hrow = cache.hidden.row(i);
    add_inplace(dquery.values(), hrow, dlogit[i]);
    for (std::size_t j = 0; j < qdim; ++j) {
      dpre[j] = dlogit[i] * query[j] * (1.0 - hrow[j] * hrow[j]);
    }
    affine_row_backward(x.row(i), proj, dpre, dproj, dx.row(i));
  }
  return dx;
}

// --- Convolution -----------------------------------------------------------

namespace {

// Writes the zero-padded window around position i into patch.
void gather_patch(const Tensor& x, std::size_t window, std::size_t i,
                  std::span<double> patch) {
  const std::size_t e = x.cols();
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);
  const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(x.rows());
  for (std::size_t o = 0; o < window; ++o) {
    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i) - half + static_cast<std::ptrdiff_t>(o);
    auto dst = patch.subspan(o * e, e);
    if (src < 0 || src >= len) {
      std::fill(dst.begin(), dst.end(), 0.0);
    } else {
      const auto row = x.row(static_cast<std::size_t>(src));
      std::copy(row.begin(), row.end(), dst.begin());
    }
  }
}

}  // namespace

Tensor conv1d(const Tensor& weight, const Tensor& bias, std::size_t window, const Tensor& x,
              ConvCache* cache) {
  require(window % 2 == 1, "conv1d window must be odd, got " + std::to_string(window));
  require(x.rank() == 2 && weight.rows() == window * x.cols() &&
              bias.size() == weight.cols(),
          "conv1d shape mismatch: input " + shape_string(x.shape()) + ", weight " +
              shape_string(weight.shape()));
  const std::size_t len = x.rows(), filters = weight.cols();
  Tensor pre({len, filters});
  std::vector<double> patch(weight.rows());
  for (std::size_t i = 0; i < len; ++i) {
    gather_patch(x, window, i, patch);
    affine_row(patch, weight, &bias, pre.row(i));
  }
  Tensor out = pre;
  for (double& v : out.values()) v = std::max(v, 0.0);
  if (cache) {
    cache->x = x;
    cache->pre = std::move(pre);
  }
  return out;
}

Tensor conv1d_backward(const Tensor& weight, std::size_t window, const ConvCache& cache,
                       const Tensor& dout, Tensor& dweight, Tensor& dbias) {
  const Tensor& x = cache.x;
  const std::size_t len = x.rows(), e = x.cols(), filters = weight.cols();
  Tensor dx(x.shape());
  std::vector<double> patch(weight.rows()), dpatch(weight.rows()), dpre(filters);
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);
  for (std::size_t i = 0; i < len; ++i) {
    bool any = false;
    for (std::size_t f = 0; f < filters; ++f) {
      dpre[f] = cache.pre(i, f) > 0.0 ? dout(i, f) : 0.0;
      any = any || dpre[f] != 0.0;
    }
    if (!any) continue;
    gather_patch(x, window, i, patch);
    std::fill(dpatch.begin(), dpatch.end(), 0.0);
    affine_row_backward(patch, weight, dpre, dweight, dpatch);
    add_inplace(dbias.values(), dpre);
    for (std::size_t o = 0; o < window; ++o) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i) - half + static_cast<std::ptrdiff_t>(o);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      add_inplace(dx.row(static_cast<std::size_t>(src)),
                  std::span<const double>(dpatch).subspan(o * e, e));
    }
  }
  return dx;
}

// --- Randomness ------------------------------------------------------------

std::vector<double> dropout_mask(std::size_t n, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  std::vector<double> mask(n, 1.0);
  if (rate == 0.0) return mask;
  const double keep = 1.0 - rate;
  for (double& m : mask) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mask;
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const auto mask = dropout_mask(x.size(), rate, rng);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return out;
}

double laplace_from_uniform(double u, double scale) {
  if (scale < 0.0) throw ConfigError("laplace scale must be >= 0");
  if (scale == 0.0) return 0.0;
  const double c = u - 0.5;
  if (c == 0.0) return 0.0;
  const double sign = c > 0.0 ? 1.0 : -1.0;
  return -scale * sign * std::log(1.0 - 2.0 * std::abs(c));
}

double laplace_sample(Rng& rng, double scale) {
  if (scale < 0.0) {
    throw ConfigError("laplace scale must be >= 0, got " + std::to_string(scale));
  }
  if (scale == 0.0) return 0.0;
  return laplace_from_uniform(rng.uniform(), scale);
}

}  // namespace fednewsrec::nn
