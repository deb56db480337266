#include "gpfl/nn.hpp"

#include <cmath>

namespace gpfl {

Tensor Backbone::extract(const Tensor& x) const {
  Tensor h = x;
  if (kind == BackboneKind::cnn) {
    if (x.size() != input_dim)
      throw DimensionError("extract: input size " + std::to_string(x.size()) +
                           " != expected " + std::to_string(input_dim));
    h = reshape(h, {1, side, side});
    for (const ConvLayer& c : conv) h = relu(conv2d(h, c.weight, c.bias));
    h = reshape(h, {h.size()});
  } else if (x.shape() != Shape{input_dim}) {
    throw DimensionError("extract: input shape " + shape_to_string(x.shape()) +
                         " != [" + std::to_string(input_dim) + "]");
  }
  for (std::size_t i = 0; i < fc.size(); ++i) {
    h = fc[i].forward(h);
    if (i + 1 < fc.size()) h = relu(h);  // no activation on the last layer
  }
  return h;
}

Tensor head_forward(const FcLayer& head, const Tensor& f) {
  if (f.shape() != Shape{head.in_dim()})
    throw DimensionError("head_forward: feature shape " +
                         shape_to_string(f.shape()) + " != [" +
                         std::to_string(head.in_dim()) + "]");
  return head.forward(f);
}

void Backbone::collect_params(const std::string& prefix,
                              std::vector<NamedParam>& out) const {
  for (std::size_t i = 0; i < conv.size(); ++i) {
    out.push_back({prefix + ".conv" + std::to_string(i) + ".w",
                   conv[i].weight});
    out.push_back({prefix + ".conv" + std::to_string(i) + ".b", conv[i].bias});
  }
  for (std::size_t i = 0; i < fc.size(); ++i) {
    out.push_back({prefix + ".fc" + std::to_string(i) + ".w", fc[i].weight});
    out.push_back({prefix + ".fc" + std::to_string(i) + ".b", fc[i].bias});
  }
}

Tensor EmbeddingTable::lookup(std::size_t u) const {
  if (u >= categories())
    throw IndexError("embedding lookup: id " + std::to_string(u) +
                     " out of range [0," + std::to_string(categories()) + ")");
  ++accesses;
  if (frozen()) {
    const std::size_t k = dim();
    std::vector<double> row(rows.values().begin() + u * k,
                            rows.values().begin() + (u + 1) * k);
    return Tensor::from({k}, std::move(row));
  }
  return table_row(rows, u);
}

EmbeddingTable EmbeddingTable::frozen_copy() const {
  EmbeddingTable t;
  t.rows = rows.detached();
  t.rows.freeze();
  return t;
}

FcLayer init_fc(std::size_t out, std::size_t in, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> w(out * in);
  for (auto& v : w) v = rng.uniform(-s, s);
  return {Tensor::from({out, in}, std::move(w), true),
          Tensor::zeros({out}, true)};
}

ConvLayer init_conv(std::size_t co, std::size_t ci, std::size_t kh,
                    std::size_t kw, Rng& rng) {
  const double fan_in = static_cast<double>(ci * kh * kw);
  const double fan_out = static_cast<double>(co * kh * kw);
  const double s = std::sqrt(6.0 / (fan_in + fan_out));
  std::vector<double> w(co * ci * kh * kw);
  for (auto& v : w) v = rng.uniform(-s, s);
  return {Tensor::from({co, ci, kh, kw}, std::move(w), true),
          Tensor::zeros({co}, true)};
}

Backbone init_backbone(const ModelSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  Backbone b;
  b.kind = spec.backbone;
  b.input_dim = spec.input_dim;
  if (spec.backbone == BackboneKind::cnn) {
    std::size_t side = static_cast<std::size_t>(
        std::llround(std::sqrt(static_cast<double>(spec.input_dim))));
    if (side * side != spec.input_dim || side < 5)
      throw ConfigError("cnn backbone requires input_dim to be a square >= 25, "
                        "got " + std::to_string(spec.input_dim));
    b.side = side;
    b.conv.push_back(init_conv(4, 1, 3, 3, rng));
    b.conv.push_back(init_conv(8, 4, 3, 3, rng));
    std::size_t flat = 8 * (side - 4) * (side - 4);
    b.fc.push_back(init_fc(spec.feature_dim, flat, rng));
  } else {
    b.fc.push_back(init_fc(spec.hidden, spec.input_dim, rng));
    b.fc.push_back(init_fc(spec.feature_dim, spec.hidden, rng));
  }
  return b;
}

FcLayer init_head(const ModelSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  return init_fc(spec.categories, spec.feature_dim, rng);
}

EmbeddingTable init_embeddings(std::size_t categories, std::size_t dim,
                               std::uint64_t seed) {
  Rng rng(seed);
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  std::vector<double> rows(categories * dim);
  for (auto& v : rows) v = rng.normal(0.0, s);
  EmbeddingTable t;
  t.rows = Tensor::from({categories, dim}, std::move(rows), true);
  return t;
}

void sgd_step(std::span<NamedParam> params, double eta) {
  for (NamedParam& p : params) {
    auto vals = p.tensor.values_mut();
    auto g = p.tensor.grad();
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] -= eta * g[i];
    p.tensor.zero_grad();
  }
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace gpfl
