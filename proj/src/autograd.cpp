// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#include "bpfl/autograd.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "bpfl/errors.hpp"
#include "bpfl/ops.hpp"

namespace bpfl {

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw UsageError("value() on an unbound Var");
  return tape_->value(id_);
}

Tape& Var::tape() const {
  if (tape_ == nullptr) throw UsageError("tape() on an unbound Var");
  return *tape_;
}

Var Tape::constant(Tensor value) {
  value.require_finite("constant");
  nodes_.push_back(Node{std::move(value), {}, false, {}, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const ParamSet& params, std::string_view name) {
  const Tensor& value = params.at(name);
  const bool trainable = grad_enabled_ && params.trainable(name);
  nodes_.push_back(Node{value, {}, trainable, {}, {}, trainable ? std::string(name) : std::string()});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward, std::string_view op) {
  value.require_finite(op.empty() ? std::string("op output") : std::string(op));
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (v.tape_ != this) throw UsageError(fmt::format("{}: input recorded on a different tape", op));
    node.inputs.push_back(v.id_);
    node.requires_grad = node.requires_grad || nodes_[v.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Var& loss) {
  if (nodes_.empty()) throw UsageError("backward called before any forward pass");
  if (loss.tape_ != this || loss.id_ >= nodes_.size()) throw UsageError("backward: loss is not on this tape");
  if (consumed_) throw UsageError("backward already called on this tape");
  Node& root = nodes_[loss.id_];
  if (root.value.size() != 1) {
    throw UsageError(fmt::format("backward needs a scalar loss, got shape {}", to_string(root.value.shape())));
  }
  consumed_ = true;
  Gradients grads;
  if (!root.requires_grad) return grads;

  root.grad = Tensor(root.value.shape(), 1.0);
  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || node.grad.empty() || !node.backward) continue;
    in_values.clear();
    in_grads.clear();
    for (std::size_t id : node.inputs) {
      Node& in = nodes_[id];
      in_values.push_back(&in.value);
      if (in.requires_grad) {
        if (in.grad.empty()) in.grad = Tensor(in.value.shape(), 0.0);
        in_grads.push_back(&in.grad);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    node.backward(node.value, node.grad, in_values, in_grads);
  }

  // Parameters read more than once accumulate into a single entry.
  for (std::size_t i = 0; i <= loss.id_; ++i) {
    Node& node = nodes_[i];
    if (node.param_name.empty()) continue;
    Tensor g = node.grad.empty() ? Tensor(node.value.shape(), 0.0) : node.grad;
    if (grads.contains(node.param_name)) {
      Tensor& acc = grads.at(node.param_name);
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
    } else {
      grads.add(node.param_name, std::move(g));
    }
  }
  for (const auto& e : grads) e.value.require_finite(fmt::format("gradient of {}", e.name));
  return grads;
}

namespace {

Tape& common_tape(std::initializer_list<const Var*> vars, std::string_view op) {
  Tape* t = nullptr;
  for (const Var* v : vars) {
    if (!v->valid()) throw UsageError(fmt::format("{}: unbound input", op));
    if (t == nullptr) t = &v->tape();
    if (&v->tape() != t) throw UsageError(fmt::format("{}: inputs live on different tapes", op));
  }
  return *t;
}

}  // namespace

Var dense(const Var& x, const Var& weight, const Var& bias) {
  Tape& tape = common_tape({&x, &weight, &bias}, "dense");
  Tensor y = dense_forward(x.value(), weight.value(), bias.value());
  auto backward = [](const Tensor&, const Tensor& gy, std::span<const Tensor* const> in,
                     std::span<Tensor* const> gin) {
    const Tensor& xv = *in[0];
    const Tensor& w = *in[1];
    const std::size_t batch = xv.rows();
    const std::size_t n_in = w.rows();
    const std::size_t n_out = w.cols();
    if (Tensor* gx = gin[0]) {
      for (std::size_t r = 0; r < batch; ++r) {
        const double* gyr = gy.raw() + r * n_out;
        double* gxr = gx->raw() + r * n_in;
        for (std::size_t k = 0; k < n_in; ++k) {
          const double* wk = w.raw() + k * n_out;
          double s = 0.0;
          for (std::size_t j = 0; j < n_out; ++j) s += gyr[j] * wk[j];
          gxr[k] += s;
        }
      }
    }
    if (Tensor* gw = gin[1]) {
      for (std::size_t r = 0; r < batch; ++r) {
        const double* gyr = gy.raw() + r * n_out;
        const double* xr = xv.raw() + r * n_in;
        for (std::size_t k = 0; k < n_in; ++k) {
          double* gwk = gw->raw() + k * n_out;
          const double xk = xr[k];
          for (std::size_t j = 0; j < n_out; ++j) gwk[j] += xk * gyr[j];
        }
      }
    }
    if (Tensor* gb = gin[2]) {
      for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t j = 0; j < n_out; ++j) (*gb)[j] += gy[r * n_out + j];
      }
    }
  };
  return tape.record(std::move(y), {x, weight, bias}, backward, "dense");
}

Var relu(const Var& x) {
  Tape& tape = common_tape({&x}, "relu");
  auto backward = [](const Tensor&, const Tensor& gy, std::span<const Tensor* const> in,
                     std::span<Tensor* const> gin) {
    const Tensor& xv = *in[0];
    Tensor& gx = *gin[0];
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += gy[i];
    }
  };
  return tape.record(bpfl::relu(x.value()), {x}, backward, "relu");
}

Var softmax(const Var& z) {
  Tape& tape = common_tape({&z}, "softmax");
  auto backward = [](const Tensor& s, const Tensor& gy, std::span<const Tensor* const>,
                     std::span<Tensor* const> gin) {
    Tensor& gz = *gin[0];
    const std::size_t c = s.cols();
    for (std::size_t base = 0; base < s.size(); base += c) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += gy[base + j] * s[base + j];
      for (std::size_t j = 0; j < c; ++j) gz[base + j] += s[base + j] * (gy[base + j] - dot);
    }
  };
  return tape.record(bpfl::softmax(z.value()), {z}, backward, "softmax");
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  Tape& tape = common_tape({&logits}, "cross_entropy");
  const double loss = cross_entropy_loss(logits.value(), labels);
  std::vector<int> owned(labels.begin(), labels.end());
  auto backward = [owned = std::move(owned)](const Tensor&, const Tensor& gy, std::span<const Tensor* const> in,
                                             std::span<Tensor* const> gin) {
    const Tensor probs = bpfl::softmax(*in[0]);
    Tensor& gz = *gin[0];
    const std::size_t c = probs.cols();
    const double factor = gy[0] / static_cast<double>(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
      for (std::size_t j = 0; j < c; ++j) {
        const double onehot = static_cast<int>(j) == owned[r] ? 1.0 : 0.0;
        gz[r * c + j] += factor * (probs[r * c + j] - onehot);
      }
    }
  };
  return tape.record(Tensor::scalar(loss), {logits}, backward, "cross_entropy");
}

Var dice_loss(const Var& pred, const Tensor& target, double eps) {
  Tape& tape = common_tape({&pred}, "dice_loss");
  const double loss = bpfl::dice_loss(pred.value(), target, eps);
  auto backward = [target, eps](const Tensor&, const Tensor& gy, std::span<const Tensor* const> in,
                                std::span<Tensor* const> gin) {
    const Tensor& p = *in[0];
    Tensor& gp = *gin[0];
    const std::size_t batch = p.rank() >= 2 ? p.rows() : 1;
    const std::size_t n = p.size() / batch;
    for (std::size_t r = 0; r < batch; ++r) {
      double inter = 0.0;
      double total = eps;
      for (std::size_t j = 0; j < n; ++j) {
        inter += p[r * n + j] * target[r * n + j];
        total += p[r * n + j] + target[r * n + j];
      }
      const double numer = 2.0 * inter + eps;
      for (std::size_t j = 0; j < n; ++j) {
        const double d = -(2.0 * target[r * n + j] * total - numer) / (total * total);
        gp[r * n + j] += gy[0] * d / static_cast<double>(batch);
      }
    }
  };
  return tape.record(Tensor::scalar(loss), {pred}, backward, "dice_loss");
}

Var pairwise_softmax(const Var& g, const Var& l) {
  Tape& tape = common_tape({&g, &l}, "pairwise_softmax");
  require_same_shape(g.value(), l.value(), "pairwise_softmax");
  Tensor a(g.value().shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double gv = g.value()[i];
    const double lv = l.value()[i];
    const double m = std::max(gv, lv);
    const double eg = std::exp(gv - m);
    const double el = std::exp(lv - m);
    a[i] = eg / (eg + el);
  }
  auto backward = [](const Tensor& out, const Tensor& gy, std::span<const Tensor* const>,
                     std::span<Tensor* const> gin) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double d = gy[i] * out[i] * (1.0 - out[i]);
      if (gin[0] != nullptr) (*gin[0])[i] += d;
      if (gin[1] != nullptr) (*gin[1])[i] -= d;
    }
  };
  return tape.record(std::move(a), {g, l}, backward, "pairwise_softmax");
}

Var add(const Var& a, const Var& b) {
  Tape& tape = common_tape({&a, &b}, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  auto backward = [](const Tensor&, const Tensor& gy, std::span<const Tensor* const>,
                     std::span<Tensor* const> gin) {
    for (Tensor* g : gin) {
      if (g == nullptr) continue;
      for (std::size_t i = 0; i < gy.size(); ++i) (*g)[i] += gy[i];
    }
  };
  return tape.record(std::move(y), {a, b}, backward, "add");
}

Var mul(const Var& a, const Var& b) {
  Tape& tape = common_tape({&a, &b}, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  auto backward = [](const Tensor&, const Tensor& gy, std::span<const Tensor* const> in,
                     std::span<Tensor* const> gin) {
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (gin[0] != nullptr) (*gin[0])[i] += gy[i] * (*in[1])[i];
      if (gin[1] != nullptr) (*gin[1])[i] += gy[i] * (*in[0])[i];
    }
  };
  return tape.record(std::move(y), {a, b}, backward, "mul");
}

Var scale(const Var& a, double factor) {
  Tape& tape = common_tape({&a}, "scale");
  Tensor y = a.value();
  for (double& v : y.data()) v *= factor;
  auto backward = [factor](const Tensor&, const Tensor& gy, std::span<const Tensor* const>,
                           std::span<Tensor* const> gin) {
    for (std::size_t i = 0; i < gy.size(); ++i) (*gin[0])[i] += factor * gy[i];
  };
  return tape.record(std::move(y), {a}, backward, "scale");
}

Var sum(const Var& a) {
  Tape& tape = common_tape({&a}, "sum");
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  auto backward = [](const Tensor&, const Tensor& gy, std::span<const Tensor* const>,
                     std::span<Tensor* const> gin) {
    for (double& g : gin[0]->data()) g += gy[0];
  };
  return tape.record(Tensor::scalar(s), {a}, backward, "sum");
}

Var weighted_sum(std::span<const std::pair<double, Var>> terms) {
  if (terms.empty()) throw UsageError("weighted_sum of no terms");
  Tape& tape = terms.front().second.tape();
  double s = 0.0;
  std::vector<Var> inputs;
  std::vector<double> weights;
  for (const auto& [w, v] : terms) {
    if (&v.tape() != &tape) throw UsageError("weighted_sum: inputs live on different tapes");
    s += w * v.value().item();
    inputs.push_back(v);
    weights.push_back(w);
  }
  auto backward = [weights = std::move(weights)](const Tensor&, const Tensor& gy, std::span<const Tensor* const>,
                                                 std::span<Tensor* const> gin) {
    for (std::size_t k = 0; k < gin.size(); ++k) {
      if (gin[k] != nullptr) (*gin[k])[0] += weights[k] * gy[0];
    }
  };
  return tape.record(Tensor::scalar(s), std::move(inputs), backward, "weighted_sum");
}

}  // namespace bpfl
