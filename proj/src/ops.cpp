#include "gpfl/ops.hpp"

#include <algorithm>
#include <cmath>

#include "gpfl/kernels.hpp"

namespace gpfl {

namespace {

using detail::Access;
using detail::Node;
using NodePtr = std::shared_ptr<Node>;

bool any_tracked(std::initializer_list<const Tensor*> ts) {
  for (const Tensor* t : ts)
    if (t->tracked()) return true;
  return false;
}

// Registers `out` as a consumer of every tracked input.
void link(const NodePtr& out, std::initializer_list<const Tensor*> inputs,
          std::function<void(Node&)> backprop) {
  for (const Tensor* t : inputs) {
    const NodePtr& n = Access::node(*t);
    if (n->tracked) out->parents.push_back(n);
  }
  out->backprop = std::move(backprop);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
    throw DimensionError("matmul: incompatible shapes " +
                         shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  auto out = Access::make({m, n}, any_tracked({&a, &b}));
  kernels::matmul(a.values().data(), b.values().data(), out->value.data(), m,
                  k, n);
  if (out->tracked) {
    NodePtr an = Access::node(a), bn = Access::node(b);
    link(out, {&a, &b}, [an, bn, m, k, n](Node& self) {
      if (an->tracked)
        kernels::matmul_nt_acc(self.grad.data(), bn->value.data(),
                               an->ensure_grad().data(), m, k, n);
      if (bn->tracked)
        kernels::matmul_tn_acc(an->value.data(), self.grad.data(),
                               bn->ensure_grad().data(), m, k, n);
    });
  }
  return Access::wrap(std::move(out));
}

Tensor matvec(const Tensor& w, const Tensor& x) {
  if (w.rank() != 2 || x.rank() != 1 || w.shape()[1] != x.shape()[0])
    throw DimensionError("matvec: incompatible shapes " +
                         shape_to_string(w.shape()) + " vs " +
                         shape_to_string(x.shape()));
  const std::size_t m = w.shape()[0], k = w.shape()[1];
  auto out = Access::make({m}, any_tracked({&w, &x}));
  kernels::matvec(w.values().data(), x.values().data(), out->value.data(), m,
                  k);
  if (out->tracked) {
    NodePtr wn = Access::node(w), xn = Access::node(x);
    link(out, {&w, &x}, [wn, xn, m, k](Node& self) {
      if (wn->tracked)
        kernels::outer_acc(self.grad.data(), xn->value.data(),
                           wn->ensure_grad().data(), m, k);
      if (xn->tracked)
        kernels::matvec_t_acc(wn->value.data(), self.grad.data(),
                              xn->ensure_grad().data(), m, k);
    });
  }
  return Access::wrap(std::move(out));
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto out = Access::make(a.shape(), any_tracked({&a, &b}));
  for (std::size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = a.values()[i] + b.values()[i];
  if (out->tracked) {
    NodePtr an = Access::node(a), bn = Access::node(b);
    link(out, {&a, &b}, [an, bn](Node& self) {
      if (an->tracked) {
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
      if (bn->tracked) {
        auto& g = bn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
    });
  }
  return Access::wrap(std::move(out));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto out = Access::make(a.shape(), any_tracked({&a, &b}));
  for (std::size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = a.values()[i] - b.values()[i];
  if (out->tracked) {
    NodePtr an = Access::node(a), bn = Access::node(b);
    link(out, {&a, &b}, [an, bn](Node& self) {
      if (an->tracked) {
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
      if (bn->tracked) {
        auto& g = bn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
      }
    });
  }
  return Access::wrap(std::move(out));
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  auto out = Access::make(a.shape(), any_tracked({&a, &b}));
  for (std::size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = a.values()[i] * b.values()[i];
  if (out->tracked) {
    NodePtr an = Access::node(a), bn = Access::node(b);
    link(out, {&a, &b}, [an, bn](Node& self) {
      if (an->tracked) {
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
          g[i] += self.grad[i] * bn->value[i];
      }
      if (bn->tracked) {
        auto& g = bn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
          g[i] += self.grad[i] * an->value[i];
      }
    });
  }
  return Access::wrap(std::move(out));
}

Tensor scale(const Tensor& a, double c) {
  auto out = Access::make(a.shape(), a.tracked());
  for (std::size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = c * a.values()[i];
  if (out->tracked) {
    NodePtr an = Access::node(a);
    link(out, {&a}, [an, c](Node& self) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * self.grad[i];
    });
  }
  return Access::wrap(std::move(out));
}

Tensor relu(const Tensor& a) {
  auto out = Access::make(a.shape(), a.tracked());
  for (std::size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  if (out->tracked) {
    NodePtr an = Access::node(a);
    link(out, {&a}, [an](Node& self) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (an->value[i] > 0.0) g[i] += self.grad[i];
    });
  }
  return Access::wrap(std::move(out));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size())
    throw DimensionError("reshape: cannot view " +
                         shape_to_string(a.shape()) + " as " +
                         shape_to_string(shape));
  auto out = Access::make(std::move(shape), a.tracked());
  out->value = std::vector<double>(a.values().begin(), a.values().end());
  if (out->tracked) {
    NodePtr an = Access::node(a);
    link(out, {&a}, [an](Node& self) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
  }
  return Access::wrap(std::move(out));
}

Tensor sum(const Tensor& a) {
  auto out = Access::make({}, a.tracked());
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  out->value[0] = acc;
  if (out->tracked) {
    NodePtr an = Access::node(a);
    link(out, {&a}, [an](Node& self) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
    });
  }
  return Access::wrap(std::move(out));
}

Tensor stack_scalars(std::span<const Tensor> scalars) {
  if (scalars.empty()) throw EmptyInputError("stack_scalars: empty input");
  bool tracked = false;
  for (const Tensor& s : scalars) {
    if (s.size() != 1)
      throw DimensionError("stack_scalars: non-scalar element of shape " +
                           shape_to_string(s.shape()));
    tracked = tracked || s.tracked();
  }
  auto out = Access::make({scalars.size()}, tracked);
  for (std::size_t i = 0; i < scalars.size(); ++i)
    out->value[i] = scalars[i].values()[0];
  if (tracked) {
    std::vector<NodePtr> ns;
    ns.reserve(scalars.size());
    for (const Tensor& s : scalars) {
      ns.push_back(Access::node(s));
      if (ns.back()->tracked) out->parents.push_back(ns.back());
    }
    out->backprop = [ns](Node& self) {
      for (std::size_t i = 0; i < ns.size(); ++i)
        if (ns[i]->tracked) ns[i]->ensure_grad()[0] += self.grad[i];
    };
  }
  return Access::wrap(std::move(out));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  if (x.rank() != 1) throw DimensionError("layer_norm: rank-1 input required");
  const std::size_t k = x.shape()[0];
  if (k == 0) throw EmptyInputError("layer_norm: empty input");
  require_same_shape(x, gain, "layer_norm");
  require_same_shape(x, bias, "layer_norm");

  double mean = 0.0;
  for (double v : x.values()) mean += v;
  mean /= static_cast<double>(k);
  double var = 0.0;
  for (double v : x.values()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(k);
  const double inv_std = 1.0 / std::sqrt(var + eps);

  auto xhat = std::make_shared<std::vector<double>>(k);
  for (std::size_t i = 0; i < k; ++i)
    (*xhat)[i] = (x.values()[i] - mean) * inv_std;

  auto out = Access::make({k}, any_tracked({&x, &gain, &bias}));
  for (std::size_t i = 0; i < k; ++i)
    out->value[i] = (*xhat)[i] * gain.values()[i] + bias.values()[i];
  if (out->tracked) {
    NodePtr xn = Access::node(x), gn = Access::node(gain),
            bn = Access::node(bias);
    link(out, {&x, &gain, &bias}, [xn, gn, bn, xhat, inv_std, k](Node& self) {
      if (gn->tracked) {
        auto& g = gn->ensure_grad();
        for (std::size_t i = 0; i < k; ++i)
          g[i] += self.grad[i] * (*xhat)[i];
      }
      if (bn->tracked) {
        auto& g = bn->ensure_grad();
        for (std::size_t i = 0; i < k; ++i) g[i] += self.grad[i];
      }
      if (xn->tracked) {
        // dxhat = g ⊙ gain; dx = inv_std (dxhat - mean(dxhat)
        //                                  - xhat · mean(dxhat ⊙ xhat))
        std::vector<double> dxhat(k);
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
          dxhat[i] = self.grad[i] * gn->value[i];
          m1 += dxhat[i];
          m2 += dxhat[i] * (*xhat)[i];
        }
        m1 /= static_cast<double>(k);
        m2 /= static_cast<double>(k);
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < k; ++i)
          g[i] += inv_std * (dxhat[i] - m1 - (*xhat)[i] * m2);
      }
    });
  }
  return Access::wrap(std::move(out));
}

Tensor cosine_sim(const Tensor& f, const Tensor& v) {
  require_same_shape(f, v, "cosine_sim");
  const double nf = std::sqrt(dot(f.values(), f.values()));
  const double nv = std::sqrt(dot(v.values(), v.values()));
  if (nf < 1e-12 || nv < 1e-12)
    throw DegenerateVectorError("cosine_sim: vector norm below 1e-12");
  const double d = dot(f.values(), v.values());
  const double c = d / (nf * nv);

  auto out = Access::make({}, any_tracked({&f, &v}));
  out->value[0] = c;
  if (out->tracked) {
    NodePtr fn = Access::node(f), vn = Access::node(v);
    link(out, {&f, &v}, [fn, vn, nf, nv, c](Node& self) {
      const double g = self.grad[0];
      if (fn->tracked) {
        auto& gf = fn->ensure_grad();
        for (std::size_t i = 0; i < gf.size(); ++i)
          gf[i] += g * (vn->value[i] / (nf * nv) -
                        c * fn->value[i] / (nf * nf));
      }
      if (vn->tracked) {
        auto& gv = vn->ensure_grad();
        for (std::size_t i = 0; i < gv.size(); ++i)
          gv[i] += g * (fn->value[i] / (nf * nv) -
                        c * vn->value[i] / (nv * nv));
      }
    });
  }
  return Access::wrap(std::move(out));
}

Tensor softmax_cross_entropy(const Tensor& logits, std::size_t label) {
  if (logits.rank() != 1)
    throw DimensionError("softmax_cross_entropy: rank-1 logits required");
  const std::size_t u = logits.shape()[0];
  if (label >= u)
    throw IndexError("softmax_cross_entropy: label " + std::to_string(label) +
                     " out of range [0," + std::to_string(u) + ")");

  const double mx = *std::max_element(logits.values().begin(),
                                      logits.values().end());
  auto p = std::make_shared<std::vector<double>>(u);
  double z = 0.0;
  for (std::size_t i = 0; i < u; ++i) {
    (*p)[i] = std::exp(logits.values()[i] - mx);
    z += (*p)[i];
  }
  for (auto& e : *p) e /= z;

  auto out = Access::make({}, logits.tracked());
  out->value[0] = -(logits.values()[label] - mx - std::log(z));
  if (out->tracked) {
    NodePtr ln = Access::node(logits);
    link(out, {&logits}, [ln, p, label](Node& self) {
      auto& g = ln->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        double onehot = (i == label) ? 1.0 : 0.0;
        g[i] += self.grad[0] * ((*p)[i] - onehot);
      }
    });
  }
  return Access::wrap(std::move(out));
}

Tensor l2_distance(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "l2_distance");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a.values()[i] - b.values()[i];
    acc += d * d;
  }
  const double dist = std::sqrt(acc);

  auto out = Access::make({}, any_tracked({&a, &b}));
  out->value[0] = dist;
  if (out->tracked) {
    NodePtr an = Access::node(a), bn = Access::node(b);
    link(out, {&a, &b}, [an, bn, dist](Node& self) {
      if (dist == 0.0) return;  // zero subgradient at coincident points
      const double g = self.grad[0] / dist;
      for (std::size_t i = 0; i < an->value.size(); ++i) {
        const double d = (an->value[i] - bn->value[i]) * g;
        if (an->tracked) an->ensure_grad()[i] += d;
        if (bn->tracked) bn->ensure_grad()[i] -= d;
      }
    });
  }
  return Access::wrap(std::move(out));
}

Tensor l2_norm(std::span<const Tensor> ts) {
  if (ts.empty()) throw EmptyInputError("l2_norm: empty tensor list");
  double acc = 0.0;
  bool tracked = false;
  for (const Tensor& t : ts) {
    acc += dot(t.values(), t.values());
    tracked = tracked || t.tracked();
  }
  const double norm = std::sqrt(acc);

  auto out = Access::make({}, tracked);
  out->value[0] = norm;
  if (tracked) {
    std::vector<NodePtr> ns;
    for (const Tensor& t : ts) {
      ns.push_back(Access::node(t));
      if (ns.back()->tracked) out->parents.push_back(ns.back());
    }
    out->backprop = [ns, norm](Node& self) {
      if (norm == 0.0) return;
      const double g = self.grad[0] / norm;
      for (const NodePtr& n : ns) {
        if (!n->tracked) continue;
        auto& gr = n->ensure_grad();
        for (std::size_t i = 0; i < gr.size(); ++i) gr[i] += g * n->value[i];
      }
    };
  }
  return Access::wrap(std::move(out));
}

Tensor sum_sq(std::span<const Tensor> ts) {
  if (ts.empty()) throw EmptyInputError("sum_sq: empty tensor list");
  double acc = 0.0;
  bool tracked = false;
  for (const Tensor& t : ts) {
    acc += dot(t.values(), t.values());
    tracked = tracked || t.tracked();
  }
  auto out = Access::make({}, tracked);
  out->value[0] = acc;
  if (tracked) {
    std::vector<NodePtr> ns;
    for (const Tensor& t : ts) {
      ns.push_back(Access::node(t));
      if (ns.back()->tracked) out->parents.push_back(ns.back());
    }
    out->backprop = [ns](Node& self) {
      const double g = self.grad[0];
      for (const NodePtr& n : ns) {
        if (!n->tracked) continue;
        auto& gr = n->ensure_grad();
        for (std::size_t i = 0; i < gr.size(); ++i)
          gr[i] += 2.0 * g * n->value[i];
      }
    };
  }
  return Access::wrap(std::move(out));
}

Tensor sum_sq_diff(std::span<const Tensor> ts,
                   std::span<const std::vector<double>> refs) {
  if (ts.size() != refs.size())
    throw DimensionError("sum_sq_diff: tensor/reference count mismatch");
  double acc = 0.0;
  bool tracked = false;
  for (std::size_t j = 0; j < ts.size(); ++j) {
    if (ts[j].size() != refs[j].size())
      throw DimensionError("sum_sq_diff: size mismatch at entry " +
                           std::to_string(j));
    for (std::size_t i = 0; i < refs[j].size(); ++i) {
      double d = ts[j].values()[i] - refs[j][i];
      acc += d * d;
    }
    tracked = tracked || ts[j].tracked();
  }
  auto out = Access::make({}, tracked);
  out->value[0] = acc;
  if (tracked) {
    std::vector<NodePtr> ns;
    std::vector<std::vector<double>> rs(refs.begin(), refs.end());
    for (const Tensor& t : ts) {
      ns.push_back(Access::node(t));
      if (ns.back()->tracked) out->parents.push_back(ns.back());
    }
    out->backprop = [ns, rs](Node& self) {
      const double g = self.grad[0];
      for (std::size_t j = 0; j < ns.size(); ++j) {
        if (!ns[j]->tracked) continue;
        auto& gr = ns[j]->ensure_grad();
        for (std::size_t i = 0; i < gr.size(); ++i)
          gr[i] += 2.0 * g * (ns[j]->value[i] - rs[j][i]);
      }
    };
  }
  return Access::wrap(std::move(out));
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.rank() != 3 || weight.rank() != 4 || bias.rank() != 1)
    throw DimensionError("conv2d: expected input [Ci,H,W], weight "
                         "[Co,Ci,kh,kw], bias [Co]");
  const std::size_t ci = input.shape()[0], h = input.shape()[1],
                    w = input.shape()[2];
  const std::size_t co = weight.shape()[0], kh = weight.shape()[2],
                    kw = weight.shape()[3];
  if (weight.shape()[1] != ci || bias.shape()[0] != co || kh > h || kw > w)
    throw DimensionError("conv2d: incompatible shapes " +
                         shape_to_string(input.shape()) + ", " +
                         shape_to_string(weight.shape()));
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;

  auto out = Access::make({co, oh, ow}, any_tracked({&input, &weight, &bias}));
  const double* in = input.values().data();
  const double* wt = weight.values().data();
  for (std::size_t o = 0; o < co; ++o) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = bias.values()[o];
        for (std::size_t c = 0; c < ci; ++c)
          for (std::size_t p = 0; p < kh; ++p)
            for (std::size_t q = 0; q < kw; ++q)
              acc += in[(c * h + y + p) * w + x + q] *
                     wt[((o * ci + c) * kh + p) * kw + q];
        out->value[(o * oh + y) * ow + x] = acc;
      }
    }
  }
  if (out->tracked) {
    NodePtr xn = Access::node(input), wn = Access::node(weight),
            bn = Access::node(bias);
    link(out, {&input, &weight, &bias},
         [xn, wn, bn, ci, h, w, co, kh, kw, oh, ow](Node& self) {
           for (std::size_t o = 0; o < co; ++o) {
             for (std::size_t y = 0; y < oh; ++y) {
               for (std::size_t x = 0; x < ow; ++x) {
                 const double g = self.grad[(o * oh + y) * ow + x];
                 if (bn->tracked) bn->ensure_grad()[o] += g;
                 for (std::size_t c = 0; c < ci; ++c) {
                   for (std::size_t p = 0; p < kh; ++p) {
                     for (std::size_t q = 0; q < kw; ++q) {
                       const std::size_t ii = (c * h + y + p) * w + x + q;
                       const std::size_t wi = ((o * ci + c) * kh + p) * kw + q;
                       if (wn->tracked)
                         wn->ensure_grad()[wi] += g * xn->value[ii];
                       if (xn->tracked)
                         xn->ensure_grad()[ii] += g * wn->value[wi];
                     }
                   }
                 }
               }
             }
           }
         });
  }
  return Access::wrap(std::move(out));
}

Tensor table_row(const Tensor& rows, std::size_t u) {
  if (rows.rank() != 2)
    throw DimensionError("table_row: rank-2 table required");
  const std::size_t n = rows.shape()[0], k = rows.shape()[1];
  if (u >= n)
    throw IndexError("table_row: row " + std::to_string(u) +
                     " out of range [0," + std::to_string(n) + ")");
  auto out = Access::make({k}, rows.tracked());
  std::copy_n(rows.values().data() + u * k, k, out->value.data());
  if (out->tracked) {
    NodePtr rn = Access::node(rows);
    link(out, {&rows}, [rn, u, k](Node& self) {
      auto& g = rn->ensure_grad();
      for (std::size_t i = 0; i < k; ++i) g[u * k + i] += self.grad[i];
    });
  }
  return Access::wrap(std::move(out));
}

}  // namespace gpfl
