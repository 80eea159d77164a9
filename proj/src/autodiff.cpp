#include "xsent/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace xsent {

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  std::size_t n = 1;
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
    n *= d;
  }
  data_.assign(n, fill);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  std::size_t n = 1;
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
    n *= d;
  }
  if (n != data_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " needs " + std::to_string(n) +
                         " values, got " + std::to_string(data_.size()));
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ')';
  return out.str();
}

Var Var::parameter(Tensor value) {
  auto n = std::make_shared<detail::Node>();
  n->grad = Tensor(value.shape());
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

Var Var::constant(Tensor value) {
  auto n = std::make_shared<detail::Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

void Var::zero_grad() {
  if (node_->requires_grad) node_->grad = Tensor(node_->value.shape());
}

Var make_var(Tensor value, std::vector<Var> parents, std::function<void(detail::Node&)> backward) {
  auto n = std::make_shared<detail::Node>();
  n->value = std::move(value);
  n->requires_grad = std::any_of(parents.begin(), parents.end(),
                                 [](const Var& p) { return p.requires_grad(); });
  if (n->requires_grad) {
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

namespace {

void require_rank(const Var& v, std::size_t rank, const char* op) {
  if (v.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected a rank-" + std::to_string(rank) +
                         " tensor, got shape " + shape_string(v.shape()));
  }
}

void accumulate(detail::Node& target, const Tensor& delta) {
  double* g = target.grad.data();
  const double* d = delta.data();
  for (std::size_t i = 0; i < delta.numel(); ++i) g[i] += d[i];
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.value().rows();
  const std::size_t k = a.value().cols();
  const std::size_t n = b.value().cols();
  if (b.value().rows() != k) {
    throw DimensionError("matmul: shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " are not aligned");
  }
  Tensor out({m, n});
  const double* av = a.value().data();
  const double* bv = b.value().data();
  double* ov = out.data();
  // Row-major i-k-j order; zero entries of the left operand are skipped,
  // which makes hashed bag-of-words inputs cheap.
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      const double* brow = bv + p * n;
      double* orow = ov + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return make_var(std::move(out), {a, b}, [an, bn, m, k, n](detail::Node& self) {
    const double* g = self.grad.data();
    if (an->requires_grad) {
      const double* bv = bn->value.data();
      double* ga = an->grad.data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += s;
        }
      }
    }
    if (bn->requires_grad) {
      const double* av = an->value.data();
      double* gb = bn->grad.data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double x = av[i * k + p];
          if (x == 0.0) continue;
          double* grow = gb + p * n;
          const double* gin = g + i * n;
          for (std::size_t j = 0; j < n; ++j) grow[j] += x * gin[j];
        }
      }
    }
  });
}

Var add_bias(const Var& x, const Var& bias) {
  require_rank(x, 2, "add_bias");
  require_rank(bias, 1, "add_bias");
  const std::size_t m = x.value().rows();
  const std::size_t n = x.value().cols();
  if (bias.value().numel() != n) {
    throw DimensionError("add_bias: input " + shape_string(x.shape()) + " and bias " +
                         shape_string(bias.shape()) + " disagree");
  }
  Tensor out = x.value();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) += bias.value()[j];
  }
  auto xn = x.node();
  auto bn = bias.node();
  return make_var(std::move(out), {x, bias}, [xn, bn, m, n](detail::Node& self) {
    if (xn->requires_grad) accumulate(*xn, self.grad);
    if (bn->requires_grad) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) bn->grad[j] += self.grad.at(i, j);
      }
    }
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  auto xn = x.node();
  return make_var(std::move(out), {x}, [xn](detail::Node& self) {
    const double* in = xn->value.data();
    const double* g = self.grad.data();
    double* gx = xn->grad.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      if (in[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var dropout(const Var& x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw RuntimeError("dropout: p must lie in [0, 1), got " + std::to_string(p));
  if (mode == Mode::Eval || p == 0.0) return x;
  const double scale = 1.0 / (1.0 - p);
  Tensor mask(x.shape());
  for (auto& m : mask.values()) m = uniform01(rng) >= p ? scale : 0.0;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
  auto xn = x.node();
  return make_var(std::move(out), {x}, [xn, mask = std::move(mask)](detail::Node& self) {
    for (std::size_t i = 0; i < mask.numel(); ++i) xn->grad[i] += self.grad[i] * mask[i];
  });
}

Var scale_gradient(const Var& x, double factor) {
  auto xn = x.node();
  return make_var(x.value(), {x}, [xn, factor](detail::Node& self) {
    for (std::size_t i = 0; i < self.grad.numel(); ++i) xn->grad[i] += factor * self.grad[i];
  });
}

Var softmax_cross_entropy(const Var& logits, std::span<const std::size_t> labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const std::size_t b = logits.value().rows();
  const std::size_t c = logits.value().cols();
  if (labels.size() != b) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits of shape " + shape_string(logits.shape()));
  }
  Tensor probs({b, c});
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] >= c) {
      throw RuntimeError("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                         " out of range for " + std::to_string(c) + " classes");
    }
    double mx = logits.value().at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits.value().at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp(logits.value().at(i, j) - mx);
      probs.at(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < c; ++j) probs.at(i, j) /= sum;
    total += (mx + std::log(sum)) - logits.value().at(i, labels[i]);
  }
  std::vector<std::size_t> y(labels.begin(), labels.end());
  auto ln = logits.node();
  return make_var(Tensor::scalar(total / static_cast<double>(b)), {logits},
                  [ln, probs = std::move(probs), y = std::move(y), b, c](detail::Node& self) {
                    const double upstream = self.grad[0];
                    const double inv_b = 1.0 / static_cast<double>(b);
                    for (std::size_t i = 0; i < b; ++i) {
                      for (std::size_t j = 0; j < c; ++j) {
                        const double onehot = j == y[i] ? 1.0 : 0.0;
                        ln->grad.at(i, j) += ((probs.at(i, j) - onehot) * inv_b) * upstream;
                      }
                    }
                  });
}

Var scale_and_sum(const std::vector<std::pair<double, Var>>& terms) {
  if (terms.empty()) throw RuntimeError("scale_and_sum: no terms");
  double total = 0.0;
  std::vector<Var> parents;
  std::vector<double> coefficients;
  for (const auto& [coef, v] : terms) {
    if (v.value().numel() != 1) {
      throw DimensionError("scale_and_sum: term of shape " + shape_string(v.shape()) + " is not scalar");
    }
    total += coef * v.value()[0];
    parents.push_back(v);
    coefficients.push_back(coef);
  }
  std::vector<std::shared_ptr<detail::Node>> nodes;
  for (auto& p : parents) nodes.push_back(p.node());
  return make_var(Tensor::scalar(total), parents,
                  [nodes = std::move(nodes), coefficients = std::move(coefficients)](detail::Node& self) {
                    for (std::size_t k = 0; k < nodes.size(); ++k) {
                      if (nodes[k]->requires_grad) nodes[k]->grad[0] += coefficients[k] * self.grad[0];
                    }
                  });
}

Var mean(const Var& x) {
  const std::size_t n = x.value().numel();
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  auto xn = x.node();
  return make_var(Tensor::scalar(s / static_cast<double>(n)), {x}, [xn, n](detail::Node& self) {
    const double g = self.grad[0] / static_cast<double>(n);
    for (auto& v : xn->grad.values()) v += g;
  });
}

void backward(const Var& root) {
  if (!root.defined() || root.value().numel() != 1) {
    throw RuntimeError("backward: root must be a scalar, got shape " +
                       (root.defined() ? shape_string(root.shape()) : std::string("(undefined)")));
  }
  auto start = root.node();
  if (!start->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{start.get(), 0}};
  visited.insert(start.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) {
    if (!node->is_leaf()) node->grad = Tensor(node->value.shape());
    else if (node->grad.numel() != node->value.numel()) node->grad = Tensor(node->value.shape());
  }
  start->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf() && (*it)->backward) (*it)->backward(**it);
  }
}

}  // namespace xsent
