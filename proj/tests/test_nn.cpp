#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "gpfl/nn.hpp"
#include "testutil.hpp"

using namespace gpfl;
using testutil::finite_diff;
using testutil::grad_of;
using testutil::max_rel_err;
using testutil::values_of;

namespace {

Backbone tiny_mlp(std::uint64_t seed, std::size_t d = 3, std::size_t h = 4,
                  std::size_t k = 2, std::size_t u = 3) {
  ModelSpec spec{d, k, u, h, BackboneKind::mlp};
  Backbone b = init_backbone(spec, seed);
  b.head = init_head(spec, seed + 1);
  return b;
}

}  // namespace

TEST_CASE("zero extractor maps everything to zero") {
  Backbone b = tiny_mlp(1);
  for (FcLayer& fc : b.fc) {
    auto w = fc.weight.values_mut();
    std::fill(w.begin(), w.end(), 0.0);
    auto bias = fc.bias.values_mut();
    std::fill(bias.begin(), bias.end(), 0.0);
  }
  Tensor f = b.extract(Tensor::from({3}, {0.3, -2.0, 5.0}));
  CHECK(values_of(f) == std::vector<double>{0, 0});
}

TEST_CASE("single identity FC extractor applies no activation on the last "
          "layer") {
  Backbone b;
  b.kind = BackboneKind::mlp;
  b.input_dim = 2;
  b.fc.push_back({Tensor::from({2, 2}, {1, 0, 0, 1}, true),
                  Tensor::zeros({2}, true)});
  Tensor f = b.extract(Tensor::from({2}, {1, 2}));
  CHECK(values_of(f) == std::vector<double>{1, 2});
  // a negative component survives: no ReLU after the final extractor layer
  Tensor g = b.extract(Tensor::from({2}, {-1, 2}));
  CHECK(values_of(g) == std::vector<double>{-1, 2});
}

TEST_CASE("extractor rejects wrong input shape") {
  Backbone b = tiny_mlp(2);
  CHECK_THROWS_AS(b.extract(Tensor::from({4}, {1, 2, 3, 4})), DimensionError);
}

TEST_CASE("extractor gradient w.r.t. first-layer weight vs finite diffs") {
  Backbone b = tiny_mlp(3);
  std::vector<double> x{0.5, -1.0, 2.0};
  sum(b.extract(Tensor::from({3}, x))).backward();

  std::vector<double> w0 = values_of(b.fc[0].weight);
  auto loss = [&](const std::vector<double>& v) {
    Backbone c = tiny_mlp(3);
    auto cw = c.fc[0].weight.values_mut();
    std::copy(v.begin(), v.end(), cw.begin());
    return sum(c.extract(Tensor::from({3}, x))).item();
  };
  CHECK(max_rel_err(grad_of(b.fc[0].weight), finite_diff(loss, w0)) < 1e-4);
}

TEST_CASE("head_forward identity and bias-only cases") {
  FcLayer ident{Tensor::from({2, 2}, {1, 0, 0, 1}, true),
                Tensor::zeros({2}, true)};
  Tensor f = Tensor::from({2}, {1, 2});
  CHECK(values_of(head_forward(ident, f)) == std::vector<double>{1, 2});

  FcLayer bias_only{Tensor::zeros({2, 2}, true),
                    Tensor::from({2}, {5, 6}, true)};
  CHECK(values_of(head_forward(bias_only, f)) == std::vector<double>{5, 6});

  CHECK_THROWS_AS(head_forward(ident, Tensor::from({3}, {1, 2, 3})),
                  DimensionError);
}

TEST_CASE("head_forward equals matmul + add composition") {
  Rng rng(9);
  std::vector<double> wv(3 * 2), bv(3), fv(2);
  for (auto& v : wv) v = rng.uniform(-1, 1);
  for (auto& v : bv) v = rng.uniform(-1, 1);
  for (auto& v : fv) v = rng.uniform(-1, 1);
  FcLayer head{Tensor::from({3, 2}, wv, true), Tensor::from({3}, bv, true)};
  Tensor f = Tensor::from({2}, fv);

  Tensor via_head = head_forward(head, f);
  Tensor via_matmul = add(
      reshape(matmul(Tensor::from({3, 2}, wv), Tensor::from({2, 1}, fv)), {3}),
      Tensor::from({3}, bv));
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(via_head.values()[i] ==
          doctest::Approx(via_matmul.values()[i]).epsilon(1e-15));
}

TEST_CASE("embedding lookup returns rows; gradient is row-sparse") {
  EmbeddingTable t;
  t.rows = Tensor::from({2, 2}, {1, 0, 0, 1}, true);
  Tensor row1 = t.lookup(1);
  CHECK(values_of(row1) == std::vector<double>{0, 1});
  CHECK_THROWS_AS(t.lookup(2), IndexError);

  sum(t.lookup(0)).backward();
  CHECK(grad_of(t.rows) == std::vector<double>{1, 1, 0, 0});
}

TEST_CASE("frozen table lookups carry no gradient") {
  EmbeddingTable t;
  t.rows = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  EmbeddingTable frozen = t.frozen_copy();
  CHECK(frozen.frozen());
  Tensor row = frozen.lookup(0);
  CHECK_FALSE(row.tracked());
  Tensor x = Tensor::from({2}, {1, 1}, true);
  sum(hadamard(row, x)).backward();
  CHECK(grad_of(frozen.rows) == std::vector<double>{0, 0, 0, 0});
}

TEST_CASE("embedding gradient is exactly zero on rows never looked up") {
  EmbeddingTable t = init_embeddings(6, 4, 77);
  Tensor a = t.lookup(2), b = t.lookup(4);
  sum(add(a, b)).backward();
  auto g = t.rows.grad();
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t i = 0; i < 4; ++i) {
      if (r == 2 || r == 4)
        CHECK(g[r * 4 + i] == 1.0);
      else
        CHECK(g[r * 4 + i] == 0.0);
    }
}

TEST_CASE("init is deterministic per seed and differs across seeds") {
  ModelSpec spec{5, 3, 4, 6, BackboneKind::mlp};
  Backbone a = init_backbone(spec, 42), b = init_backbone(spec, 42);
  CHECK(values_of(a.fc[0].weight) == values_of(b.fc[0].weight));
  CHECK(values_of(a.fc[1].weight) == values_of(b.fc[1].weight));

  Backbone c = init_backbone(spec, 0), d = init_backbone(spec, 1);
  CHECK(values_of(c.fc[0].weight) != values_of(d.fc[0].weight));
}

TEST_CASE("embedding row norms average near one for K=4") {
  EmbeddingTable t = init_embeddings(1000, 4, 13);
  double mean_norm = 0.0;
  auto rows = t.rows.values();
  for (std::size_t r = 0; r < 1000; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += rows[r * 4 + i] * rows[r * 4 + i];
    mean_norm += std::sqrt(s);
  }
  mean_norm /= 1000.0;
  CHECK(mean_norm > 0.7);
  CHECK(mean_norm < 1.3);
}

TEST_CASE("extract+head equals explicit matmul/relu/matmul to 1e-12") {
  Backbone b = tiny_mlp(55);
  std::vector<double> x{0.2, -0.7, 1.1};
  Tensor via_model =
      head_forward(b.head, b.extract(Tensor::from({3}, x)));

  Tensor h = add(reshape(matmul(Tensor::from({4, 3},
                                             values_of(b.fc[0].weight)),
                                Tensor::from({3, 1}, x)),
                         {4}),
                 b.fc[0].bias.detached());
  Tensor f = add(reshape(matmul(Tensor::from({2, 4},
                                             values_of(b.fc[1].weight)),
                                reshape(relu(h), {4, 1})),
                         {2}),
                 b.fc[1].bias.detached());
  Tensor logits = add(reshape(matmul(Tensor::from({3, 2},
                                                  values_of(b.head.weight)),
                                     reshape(f, {2, 1})),
                              {3}),
                      b.head.bias.detached());
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(std::fabs(via_model.values()[i] - logits.values()[i]) < 1e-12);
}

TEST_CASE("cnn backbone produces K features and checks input shape") {
  ModelSpec spec{36, 5, 4, 8, BackboneKind::cnn};
  Backbone b = init_backbone(spec, 3);
  Tensor f = b.extract(Tensor::from({36}, std::vector<double>(36, 0.1)));
  CHECK(f.shape() == Shape{5});
  ModelSpec bad{35, 5, 4, 8, BackboneKind::cnn};
  CHECK_THROWS_AS(init_backbone(bad, 3), ConfigError);
}

TEST_CASE("sgd_step applies v -= eta*grad and clears the gradient") {
  Tensor w = Tensor::from({2}, {1.0, 2.0}, true);
  sum(hadamard(w, Tensor::from({2}, {3.0, 4.0}))).backward();
  std::vector<NamedParam> params{{"w", w}};
  sgd_step(params, 0.5);
  CHECK(values_of(w) == std::vector<double>{1.0 - 1.5, 2.0 - 2.0});
  CHECK(grad_of(w) == std::vector<double>{0, 0});
}
