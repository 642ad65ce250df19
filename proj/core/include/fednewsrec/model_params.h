#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fednewsrec/hyper_params.h"
#include "fednewsrec/rng.h"
#include "fednewsrec/tensor.h"

namespace fednewsrec {

// Every non-embedding matrix of the model, in layout order.
enum class ParamId : std::size_t {
  kCnnWeight,
  kCnnBias,
  kNewsQuery,
  kNewsKey,
  kNewsValue,
  kNewsPoolProj,
  kNewsPoolQuery,
  kUserQuery,
  kUserKey,
  kUserValue,
  kUserPoolProj,
  kUserPoolQuery,
  kGruWz,
  kGruWr,
  kGruWh,
  kGruUz,
  kGruUr,
  kGruUh,
  kGruBz,
  kGruBr,
  kGruBh,
  kCombineProj,
  kCombineQuery,
  kCount,
};

inline constexpr std::size_t kNumDense = static_cast<std::size_t>(ParamId::kCount);
inline constexpr std::string_view kEmbeddingName = "word_embedding";

std::string_view param_name(ParamId id);

struct ParamSpec {
  std::string name;
  std::vector<std::size_t> shape;
  bool operator==(const ParamSpec&) const = default;
};

// Ordered (name, shape) list: the embedding first, then ParamId order.
using ParamLayout = std::vector<ParamSpec>;

ParamLayout make_layout(const HyperParams& hp);
std::size_t embedding_param_count(const ParamLayout& layout);
std::size_t dense_param_count(const ParamLayout& layout);

// The full parameter set of the news and user encoders.
class ModelParams {
 public:
  // All-zero parameters with the layout implied by hp.
  explicit ModelParams(const HyperParams& hp);

  // Glorot-uniform matrices, zero biases, U(-init_scale, init_scale) word
  // embeddings.
  static ModelParams initialize(const HyperParams& hp, Rng rng);

  const ParamLayout& layout() const { return layout_; }
  Tensor& embedding() { return embedding_; }
  const Tensor& embedding() const { return embedding_; }
  Tensor& operator[](ParamId id) { return dense_[static_cast<std::size_t>(id)]; }
  const Tensor& operator[](ParamId id) const { return dense_[static_cast<std::size_t>(id)]; }
  std::vector<Tensor>& dense() { return dense_; }
  const std::vector<Tensor>& dense() const { return dense_; }

  // Tensor at layout position i (0 = embedding).
  Tensor& at(std::size_t i) { return i == 0 ? embedding_ : dense_[i - 1]; }
  const Tensor& at(std::size_t i) const { return i == 0 ? embedding_ : dense_[i - 1]; }

  std::size_t parameter_count() const;
  bool all_finite() const;

  bool operator==(const ModelParams&) const = default;

 private:
  ParamLayout layout_;
  Tensor embedding_;
  std::vector<Tensor> dense_;
};

// A gradient with the ModelParams layout. Embedding rows are sparse: a row
// absent from embedding_rows is an exactly-zero gradient.
struct GradientSet {
  std::vector<Tensor> dense;
  std::map<std::uint32_t, std::vector<double>> embedding_rows;
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 0;
  std::size_t sample_weight = 0;

  static GradientSet zeros_like(const ModelParams& params);

  Tensor& operator[](ParamId id) { return dense[static_cast<std::size_t>(id)]; }
  const Tensor& operator[](ParamId id) const { return dense[static_cast<std::size_t>(id)]; }

  // Mutable row, created as zeros when absent.
  std::vector<double>& embedding_row(std::uint32_t row);

  bool layout_matches(const GradientSet& other) const;
  bool layout_matches(const ModelParams& params) const;

  // Dense copy of the embedding gradient.
  Tensor embedding_dense() const;

  bool operator==(const GradientSet&) const = default;
};

// params -= step * grad
void apply_update(ModelParams& params, const GradientSet& grad, double step);

}  // namespace fednewsrec
