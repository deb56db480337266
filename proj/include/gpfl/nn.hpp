#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gpfl/ops.hpp"
#include "gpfl/rng.hpp"
#include "gpfl/tensor.hpp"

namespace gpfl {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

struct FcLayer {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  Tensor forward(const Tensor& x) const { return add(matvec(weight, x), bias); }
  std::size_t in_dim() const { return weight.shape()[1]; }
  std::size_t out_dim() const { return weight.shape()[0]; }
};

struct ConvLayer {
  Tensor weight;  // [Co, Ci, kh, kw]
  Tensor bias;    // [Co]
};

enum class BackboneKind { mlp, cnn };

struct ModelSpec {
  std::size_t input_dim = 32;    // D
  std::size_t feature_dim = 16;  // K
  std::size_t categories = 8;    // U
  std::size_t hidden = 64;
  BackboneKind backbone = BackboneKind::mlp;
};

// Feature extractor plus head. The extractor applies ReLU after hidden
// layers only; the last extractor layer feeds downstream transforms raw.
struct Backbone {
  BackboneKind kind = BackboneKind::mlp;
  std::vector<ConvLayer> conv;  // cnn only; 3x3, ReLU after each
  std::vector<FcLayer> fc;      // mlp: hidden->K; cnn: flatten->K
  FcLayer head;                 // K -> U
  std::size_t input_dim = 0;
  std::size_t side = 0;  // cnn input is [1, side, side]

  Tensor extract(const Tensor& x) const;
  std::size_t feature_dim() const { return fc.back().out_dim(); }

  void collect_params(const std::string& prefix,
                      std::vector<NamedParam>& out) const;
};

Tensor head_forward(const FcLayer& head, const Tensor& f);

// Trainable (or frozen) category-embedding table. Lookups on a trainable
// table route gradient into the looked-up row only; frozen tables return
// untracked copies. `accesses` counts every read so route contracts can be
// probed in tests.
struct EmbeddingTable {
  Tensor rows;  // [U, K]
  mutable std::size_t accesses = 0;

  std::size_t categories() const { return rows.shape()[0]; }
  std::size_t dim() const { return rows.shape()[1]; }
  bool frozen() const { return rows.frozen(); }

  Tensor lookup(std::size_t u) const;
  EmbeddingTable frozen_copy() const;
};

// Glorot-uniform fan-based init for weights, zeros for biases.
FcLayer init_fc(std::size_t out, std::size_t in, Rng& rng);
ConvLayer init_conv(std::size_t co, std::size_t ci, std::size_t kh,
                    std::size_t kw, Rng& rng);
Backbone init_backbone(const ModelSpec& spec, std::uint64_t seed);
FcLayer init_head(const ModelSpec& spec, std::uint64_t seed);
// Rows drawn from N(0, 1/sqrt(K)).
EmbeddingTable init_embeddings(std::size_t categories, std::size_t dim,
                               std::uint64_t seed);

// Plain SGD: v -= eta * grad, then grad is cleared.
void sgd_step(std::span<NamedParam> params, double eta);

std::size_t argmax(std::span<const double> v);

}  // namespace gpfl
