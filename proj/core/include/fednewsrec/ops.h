#pragma once

// Dense kernels used by the news and user encoders. Every layer has a forward
// function that can optionally fill a cache, and a backward function that
// consumes the cache, accumulates parameter gradients and returns the input
// gradient. Linear maps use the row-vector convention y = x * W.

#include <cstddef>
#include <span>
#include <vector>

#include "fednewsrec/rng.h"
#include "fednewsrec/tensor.h"

namespace fednewsrec::nn {

// c[i][j] = sum_p a[i][p] * b[p][j], accumulated in ascending p.
Tensor matmul(const Tensor& a, const Tensor& b);
// a^T * b and a * b^T, same accumulation rule.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);

void add_inplace(Tensor& dst, const Tensor& src);
void add_inplace(std::span<double> dst, std::span<const double> src, double scale = 1.0);
double dot(std::span<const double> a, std::span<const double> b);

// Numerically stable softmax over all elements of x.
Tensor softmax(const Tensor& x);
std::vector<double> softmax(std::span<const double> x);
// Given y = softmax(x) and dL/dy, returns dL/dx.
std::vector<double> softmax_backward(std::span<const double> y,
                                     std::span<const double> dy);

double sigmoid(double x);

// ---------------------------------------------------------------------------
// GRU: z = s(x Wz + h Uz + bz), r = s(x Wr + h Ur + br),
//      c = tanh(x Wh + (r*h) Uh + bh), h' = (1 - z) * h + z * c.

struct GruWeights {
  const Tensor& w_z;
  const Tensor& w_r;
  const Tensor& w_h;
  const Tensor& u_z;
  const Tensor& u_r;
  const Tensor& u_h;
  const Tensor& b_z;
  const Tensor& b_r;
  const Tensor& b_h;
};

struct GruGrads {
  Tensor& w_z;
  Tensor& w_r;
  Tensor& w_h;
  Tensor& u_z;
  Tensor& u_r;
  Tensor& u_h;
  Tensor& b_z;
  Tensor& b_r;
  Tensor& b_h;
};

struct GruStepCache {
  std::vector<double> x, h_prev, z, r, candidate;
};

Tensor gru_step(const GruWeights& w, const Tensor& h_prev, const Tensor& x,
                GruStepCache* cache = nullptr);

// Backpropagates dL/dh' through one step; accumulates into grads and
// returns dL/dh_prev. dx receives dL/dx.
std::vector<double> gru_step_backward(const GruWeights& w, const GruStepCache& cache,
                                      std::span<const double> dh, GruGrads& grads,
                                      std::span<double> dx);

struct GruSequenceCache {
  std::vector<GruStepCache> steps;
};

// Runs the cell over the rows of x (oldest first) from a zero state and
// returns the final hidden state.
Tensor gru_sequence(const GruWeights& w, const Tensor& x, GruSequenceCache* cache = nullptr);
// Returns dL/dx for the whole sequence given dL/d(final state).
Tensor gru_sequence_backward(const GruWeights& w, const GruSequenceCache& cache,
                             std::span<const double> d_final, GruGrads& grads);

// ---------------------------------------------------------------------------
// Multi-head self-attention. Projections are [in x heads*head_dim]; head h
// owns columns [h*head_dim, (h+1)*head_dim).

struct AttentionWeights {
  const Tensor& query;
  const Tensor& key;
  const Tensor& value;
  std::size_t heads;
  std::size_t head_dim;
};

struct AttentionGrads {
  Tensor& query;
  Tensor& key;
  Tensor& value;
};

struct AttentionCache {
  Tensor x, q, k, v;
  std::vector<Tensor> probs;  // one L x L matrix per head
};

Tensor multihead_self_attention(const AttentionWeights& w, const Tensor& x,
                                AttentionCache* cache = nullptr);
Tensor multihead_self_attention_backward(const AttentionWeights& w,
                                         const AttentionCache& cache,
                                         const Tensor& dout, AttentionGrads& grads);

// ---------------------------------------------------------------------------
// Additive attention pooling: a_i = tanh(x_i P), alpha = softmax(a_i . v),
// out = sum_i alpha_i x_i.

struct PoolCache {
  Tensor x;
  Tensor hidden;  // L x q, post-tanh
  std::vector<double> alpha;
};

Tensor additive_attention_pool(const Tensor& proj, const Tensor& query, const Tensor& x,
                               PoolCache* cache = nullptr);
Tensor additive_attention_pool_backward(const Tensor& proj, const Tensor& query,
                                        const PoolCache& cache,
                                        std::span<const double> dout, Tensor& dproj,
                                        Tensor& dquery);

// ---------------------------------------------------------------------------
// Same-length 1-D convolution with ReLU. weight is [window*e x filters]; the
// patch for position i concatenates rows i-(w-1)/2 .. i+(w-1)/2 with zero
// rows outside the input.

struct ConvCache {
  Tensor x;
  Tensor pre;  // pre-activation, L x filters
};

Tensor conv1d(const Tensor& weight, const Tensor& bias, std::size_t window, const Tensor& x,
              ConvCache* cache = nullptr);
Tensor conv1d_backward(const Tensor& weight, std::size_t window, const ConvCache& cache,
                       const Tensor& dout, Tensor& dweight, Tensor& dbias);

// ---------------------------------------------------------------------------

// Inverted-dropout multipliers: 0 with probability rate, else 1/(1-rate).
std::vector<double> dropout_mask(std::size_t n, double rate, Rng& rng);
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training);

// Laplace(0, scale) by inverse CDF from one uniform draw.
double laplace_from_uniform(double u, double scale);
double laplace_sample(Rng& rng, double scale);

}  // namespace fednewsrec::nn
