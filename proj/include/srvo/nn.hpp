#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "srvo/params.hpp"
#include "srvo/tensor.hpp"

namespace srvo {

enum class Act { IDENTITY, RELU, TANH };

// Pre-activation clipping bound inside LSTM gates.
inline constexpr double kGateClip = 50.0;

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline void apply_act(Tensor& t, Act act) {
  switch (act) {
    case Act::IDENTITY:
      break;
    case Act::RELU:
      for (double& v : t.data) v = v > 0.0 ? v : 0.0;
      break;
    case Act::TANH:
      for (double& v : t.data) v = std::tanh(v);
      break;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward-only kernels (inference path). The tape below performs the exact
// same arithmetic in the same order, so both paths agree bitwise.
// ---------------------------------------------------------------------------

inline Tensor fast_matvec_add(const Tensor& w, const Tensor& b, const Tensor& x) {
  if (w.shape.size() != 2 || w.cols() != x.numel() || b.numel() != w.rows())
    throw StructuralError("dense shape mismatch");
  Tensor y({w.rows()});
  for (int64_t i = 0; i < w.rows(); ++i) {
    double acc = 0.0;
    const double* wr = &w.data[static_cast<size_t>(i * w.cols())];
    for (int64_t j = 0; j < w.cols(); ++j) acc += wr[j] * x.data[static_cast<size_t>(j)];
    y.data[static_cast<size_t>(i)] = acc + b.data[static_cast<size_t>(i)];
  }
  return y;
}

// activation(Wx + b)
inline Tensor fast_dense(const Tensor& w, const Tensor& b, const Tensor& x, Act act) {
  Tensor y = fast_matvec_add(w, b, x);
  detail::apply_act(y, act);
  check_finite(y, "dense");
  return y;
}

inline Tensor fast_concat(const std::vector<const Tensor*>& xs) {
  int64_t n = 0;
  for (const Tensor* t : xs) n += t->numel();
  Tensor y({n});
  int64_t off = 0;
  for (const Tensor* t : xs) {
    for (int64_t i = 0; i < t->numel(); ++i) y.data[static_cast<size_t>(off + i)] = t->data[static_cast<size_t>(i)];
    off += t->numel();
  }
  return y;
}

struct LstmState {
  Tensor h;
  Tensor c;
  static LstmState zeros(int64_t units) { return {Tensor({units}), Tensor({units})}; }
};

// Single LSTM cell step. Gate order in the stacked weight is [i, f, o, g];
// pre-activations are clipped to +/-kGateClip.
inline LstmState fast_lstm_cell(const Tensor& w, const Tensor& b, const Tensor& x,
                                const LstmState& state) {
  const int64_t u = state.h.numel();
  if (w.rows() != 4 * u || w.cols() != x.numel() + u || b.numel() != 4 * u ||
      state.c.numel() != u)
    throw StructuralError("lstm shape mismatch");
  Tensor z = fast_concat({&x, &state.h});
  Tensor pre = fast_matvec_add(w, b, z);
  LstmState out{Tensor({u}), Tensor({u})};
  for (int64_t k = 0; k < u; ++k) {
    auto gate = [&](int64_t block) {
      double v = pre.data[static_cast<size_t>(block * u + k)];
      if (v > kGateClip) v = kGateClip;
      if (v < -kGateClip) v = -kGateClip;
      return v;
    };
    const double i = detail::sigmoid(gate(0));
    const double f = detail::sigmoid(gate(1));
    const double o = detail::sigmoid(gate(2));
    const double g = std::tanh(gate(3));
    const double c_new = f * state.c.data[static_cast<size_t>(k)] + i * g;
    out.c.data[static_cast<size_t>(k)] = c_new;
    out.h.data[static_cast<size_t>(k)] = o * std::tanh(c_new);
  }
  check_finite(out.h, "lstm_cell");
  return out;
}

// Numerically stable softmax cross entropy; returns (loss, d loss / d logits).
inline std::pair<double, Tensor> softmax_cross_entropy(const Tensor& logits, int64_t label) {
  if (label < 0 || label >= logits.numel()) throw StructuralError("cross-entropy label out of range");
  double m = logits.data[0];
  for (double v : logits.data) m = v > m ? v : m;
  double z = 0.0;
  for (double v : logits.data) z += std::exp(v - m);
  const double loss = std::log(z) - (logits.data[static_cast<size_t>(label)] - m);
  Tensor grad({logits.numel()});
  for (int64_t i = 0; i < logits.numel(); ++i)
    grad.data[static_cast<size_t>(i)] = std::exp(logits.data[static_cast<size_t>(i)] - m) / z;
  grad.data[static_cast<size_t>(label)] -= 1.0;
  return {loss, grad};
}

// ---------------------------------------------------------------------------
// Reverse-mode tape. One tape records one forward pass (a whole unrolled
// episode during training); backward() walks it in reverse and accumulates
// exact gradients for every parameter leaf, which is BPTT when the graph
// spans timesteps.
// ---------------------------------------------------------------------------

class Tape {
  enum class Op {
    INPUT,
    PARAM,
    MATVEC,
    ADD,
    RELU,
    TANH,
    SIGMOID,
    CLIP,
    MUL,
    CONCAT,
    SLICE,
    SCALE,
    SQ_DIFF_SUM,
    SOFTMAX_XENT,
  };

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    std::vector<int> ins;  // CONCAT only
    int64_t off = 0;       // SLICE
    double cval = 0.0;     // SCALE factor / CLIP bound
    int64_t label = -1;    // SOFTMAX_XENT
    std::string pname;     // PARAM
    Tensor val;
    Tensor aux;  // SQ_DIFF_SUM target / SOFTMAX_XENT probabilities
  };

 public:
  explicit Tape(const ParamStore& params) : params_(&params) {}

  int input(Tensor v) {
    Node n;
    n.op = Op::INPUT;
    n.val = std::move(v);
    return push(std::move(n));
  }

  // Parameter leaves are deduplicated so gradients accumulate across every
  // use of a weight within the episode.
  int param(const std::string& name) {
    auto it = param_ids_.find(name);
    if (it != param_ids_.end()) return it->second;
    Node n;
    n.op = Op::PARAM;
    n.pname = name;
    n.val = params_->at(name);
    int id = push(std::move(n));
    param_ids_.emplace(name, id);
    return id;
  }

  int matvec(int w, int x) {
    const Tensor& W = nodes_[w].val;
    const Tensor& X = nodes_[x].val;
    if (W.shape.size() != 2 || W.cols() != X.numel()) throw StructuralError("matvec shape mismatch");
    Node n;
    n.op = Op::MATVEC;
    n.a = w;
    n.b = x;
    n.val = Tensor({W.rows()});
    for (int64_t i = 0; i < W.rows(); ++i) {
      double acc = 0.0;
      const double* wr = &W.data[static_cast<size_t>(i * W.cols())];
      for (int64_t j = 0; j < W.cols(); ++j) acc += wr[j] * X.data[static_cast<size_t>(j)];
      n.val.data[static_cast<size_t>(i)] = acc;
    }
    return push(std::move(n));
  }

  int add(int a, int b) {
    const Tensor& A = nodes_[a].val;
    const Tensor& B = nodes_[b].val;
    if (!A.same_shape(B)) throw StructuralError("add shape mismatch");
    Node n;
    n.op = Op::ADD;
    n.a = a;
    n.b = b;
    n.val = A;
    for (size_t i = 0; i < n.val.data.size(); ++i) n.val.data[i] += B.data[i];
    return push(std::move(n));
  }

  int relu(int x) {
    Node n;
    n.op = Op::RELU;
    n.a = x;
    n.val = nodes_[x].val;
    for (double& v : n.val.data) v = v > 0.0 ? v : 0.0;
    return push(std::move(n));
  }

  int tanh_(int x) {
    Node n;
    n.op = Op::TANH;
    n.a = x;
    n.val = nodes_[x].val;
    for (double& v : n.val.data) v = std::tanh(v);
    return push(std::move(n));
  }

  int sigmoid(int x) {
    Node n;
    n.op = Op::SIGMOID;
    n.a = x;
    n.val = nodes_[x].val;
    for (double& v : n.val.data) v = detail::sigmoid(v);
    return push(std::move(n));
  }

  int clip(int x, double bound) {
    Node n;
    n.op = Op::CLIP;
    n.a = x;
    n.cval = bound;
    n.val = nodes_[x].val;
    for (double& v : n.val.data) {
      if (v > bound) v = bound;
      if (v < -bound) v = -bound;
    }
    return push(std::move(n));
  }

  int mul(int a, int b) {
    const Tensor& A = nodes_[a].val;
    const Tensor& B = nodes_[b].val;
    if (!A.same_shape(B)) throw StructuralError("mul shape mismatch");
    Node n;
    n.op = Op::MUL;
    n.a = a;
    n.b = b;
    n.val = A;
    for (size_t i = 0; i < n.val.data.size(); ++i) n.val.data[i] *= B.data[i];
    return push(std::move(n));
  }

  int concat(std::vector<int> xs) {
    Node n;
    n.op = Op::CONCAT;
    n.ins = std::move(xs);
    int64_t total = 0;
    for (int id : n.ins) total += nodes_[id].val.numel();
    n.val = Tensor({total});
    int64_t off = 0;
    for (int id : n.ins) {
      const Tensor& t = nodes_[id].val;
      for (int64_t i = 0; i < t.numel(); ++i)
        n.val.data[static_cast<size_t>(off + i)] = t.data[static_cast<size_t>(i)];
      off += t.numel();
    }
    return push(std::move(n));
  }

  int slice(int x, int64_t off, int64_t len) {
    const Tensor& X = nodes_[x].val;
    if (off < 0 || off + len > X.numel()) throw StructuralError("slice out of range");
    Node n;
    n.op = Op::SLICE;
    n.a = x;
    n.off = off;
    n.val = Tensor({len});
    for (int64_t i = 0; i < len; ++i)
      n.val.data[static_cast<size_t>(i)] = X.data[static_cast<size_t>(off + i)];
    return push(std::move(n));
  }

  int scale(int x, double c) {
    Node n;
    n.op = Op::SCALE;
    n.a = x;
    n.cval = c;
    n.val = nodes_[x].val;
    for (double& v : n.val.data) v *= c;
    return push(std::move(n));
  }

  // Scalar sum of squared differences against a constant target.
  int sq_diff_sum(int x, Tensor target) {
    const Tensor& X = nodes_[x].val;
    if (!X.same_shape(target)) throw StructuralError("sq_diff_sum shape mismatch");
    Node n;
    n.op = Op::SQ_DIFF_SUM;
    n.a = x;
    n.aux = std::move(target);
    double acc = 0.0;
    for (size_t i = 0; i < X.data.size(); ++i) {
      const double d = X.data[i] - n.aux.data[i];
      acc += d * d;
    }
    n.val = scalar(acc);
    return push(std::move(n));
  }

  int softmax_xent(int logits, int64_t label) {
    auto [loss, grad] = softmax_cross_entropy(nodes_[logits].val, label);
    Node n;
    n.op = Op::SOFTMAX_XENT;
    n.a = logits;
    n.label = label;
    n.aux = std::move(grad);  // softmax - onehot, reused in backward
    n.val = scalar(loss);
    return push(std::move(n));
  }

  // activation(Wx + b) as a subgraph.
  int dense(int w, int b, int x, Act act) {
    int y = add(matvec(w, x), b);
    switch (act) {
      case Act::IDENTITY:
        return y;
      case Act::RELU:
        return relu(y);
      case Act::TANH:
        return tanh_(y);
    }
    return y;
  }

  struct LstmIds {
    int h;
    int c;
  };

  // c' = f (.) c + i (.) g ; h' = o (.) tanh(c'); gate order [i, f, o, g].
  LstmIds lstm_cell(int w, int b, int x, int h, int c) {
    const int64_t u = nodes_[h].val.numel();
    int z = concat({x, h});
    int pre = add(matvec(w, z), b);
    int gi = sigmoid(clip(slice(pre, 0 * u, u), kGateClip));
    int gf = sigmoid(clip(slice(pre, 1 * u, u), kGateClip));
    int go = sigmoid(clip(slice(pre, 2 * u, u), kGateClip));
    int gg = tanh_(clip(slice(pre, 3 * u, u), kGateClip));
    int c_new = add(mul(gf, c), mul(gi, gg));
    int h_new = mul(go, tanh_(c_new));
    return {h_new, c_new};
  }

  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].val; }

  size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar loss node. Returns gradients keyed by
  // parameter name; per-node gradients stay retrievable via grad().
  GradMap backward(int loss_id) {
    const Node& loss = nodes_[static_cast<size_t>(loss_id)];
    if (loss.val.numel() != 1) throw StructuralError("backward expects a scalar loss");
    if (!std::isfinite(loss.val.data[0])) throw NumericError("loss is non-finite");
    grads_.assign(nodes_.size(), Tensor());
    grads_[static_cast<size_t>(loss_id)] = scalar(1.0);
    for (int i = loss_id; i >= 0; --i) {
      if (grads_[static_cast<size_t>(i)].data.empty()) continue;
      propagate(i);
    }
    GradMap out;
    for (const auto& [name, id] : param_ids_) {
      const Tensor& g = grads_[static_cast<size_t>(id)];
      out[name] = g.data.empty() ? Tensor(nodes_[static_cast<size_t>(id)].val.shape) : g;
    }
    return out;
  }

  const Tensor& grad(int id) const {
    const Tensor& g = grads_[static_cast<size_t>(id)];
    if (g.data.empty()) {
      static const Tensor empty;
      return empty;
    }
    return g;
  }

 private:
  int push(Node n) {
    check_finite(n.val, "tape op");
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  Tensor& grad_buf(int id) {
    Tensor& g = grads_[static_cast<size_t>(id)];
    if (g.data.empty()) g = Tensor(nodes_[static_cast<size_t>(id)].val.shape);
    return g;
  }

  void propagate(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    const Tensor& gy = grads_[static_cast<size_t>(id)];
    switch (n.op) {
      case Op::INPUT:
      case Op::PARAM:
        return;
      case Op::MATVEC: {
        const Tensor& W = nodes_[static_cast<size_t>(n.a)].val;
        const Tensor& X = nodes_[static_cast<size_t>(n.b)].val;
        Tensor& gw = grad_buf(n.a);
        Tensor& gx = grad_buf(n.b);
        for (int64_t i = 0; i < W.rows(); ++i) {
          const double gyi = gy.data[static_cast<size_t>(i)];
          if (gyi == 0.0) continue;
          double* gwr = &gw.data[static_cast<size_t>(i * W.cols())];
          const double* wr = &W.data[static_cast<size_t>(i * W.cols())];
          for (int64_t j = 0; j < W.cols(); ++j) {
            gwr[j] += gyi * X.data[static_cast<size_t>(j)];
            gx.data[static_cast<size_t>(j)] += gyi * wr[j];
          }
        }
        return;
      }
      case Op::ADD: {
        Tensor& ga = grad_buf(n.a);
        Tensor& gb = grad_buf(n.b);
        for (size_t i = 0; i < gy.data.size(); ++i) {
          ga.data[i] += gy.data[i];
          gb.data[i] += gy.data[i];
        }
        return;
      }
      case Op::RELU: {
        const Tensor& X = nodes_[static_cast<size_t>(n.a)].val;
        Tensor& gx = grad_buf(n.a);
        for (size_t i = 0; i < gy.data.size(); ++i)
          if (X.data[i] > 0.0) gx.data[i] += gy.data[i];
        return;
      }
      case Op::TANH: {
        Tensor& gx = grad_buf(n.a);
        for (size_t i = 0; i < gy.data.size(); ++i)
          gx.data[i] += gy.data[i] * (1.0 - n.val.data[i] * n.val.data[i]);
        return;
      }
      case Op::SIGMOID: {
        Tensor& gx = grad_buf(n.a);
        for (size_t i = 0; i < gy.data.size(); ++i)
          gx.data[i] += gy.data[i] * n.val.data[i] * (1.0 - n.val.data[i]);
        return;
      }
      case Op::CLIP: {
        const Tensor& X = nodes_[static_cast<size_t>(n.a)].val;
        Tensor& gx = grad_buf(n.a);
        for (size_t i = 0; i < gy.data.size(); ++i)
          if (X.data[i] > -n.cval && X.data[i] < n.cval) gx.data[i] += gy.data[i];
        return;
      }
      case Op::MUL: {
        const Tensor& A = nodes_[static_cast<size_t>(n.a)].val;
        const Tensor& B = nodes_[static_cast<size_t>(n.b)].val;
        Tensor& ga = grad_buf(n.a);
        Tensor& gb = grad_buf(n.b);
        for (size_t i = 0; i < gy.data.size(); ++i) {
          ga.data[i] += gy.data[i] * B.data[i];
          gb.data[i] += gy.data[i] * A.data[i];
        }
        return;
      }
      case Op::CONCAT: {
        int64_t off = 0;
        for (int id_in : n.ins) {
          Tensor& g = grad_buf(id_in);
          for (int64_t i = 0; i < g.numel(); ++i)
            g.data[static_cast<size_t>(i)] += gy.data[static_cast<size_t>(off + i)];
          off += g.numel();
        }
        return;
      }
      case Op::SLICE: {
        Tensor& gx = grad_buf(n.a);
        for (int64_t i = 0; i < n.val.numel(); ++i)
          gx.data[static_cast<size_t>(n.off + i)] += gy.data[static_cast<size_t>(i)];
        return;
      }
      case Op::SCALE: {
        Tensor& gx = grad_buf(n.a);
        for (size_t i = 0; i < gy.data.size(); ++i) gx.data[i] += gy.data[i] * n.cval;
        return;
      }
      case Op::SQ_DIFF_SUM: {
        const Tensor& X = nodes_[static_cast<size_t>(n.a)].val;
        Tensor& gx = grad_buf(n.a);
        const double g0 = gy.data[0];
        for (size_t i = 0; i < X.data.size(); ++i)
          gx.data[i] += g0 * 2.0 * (X.data[i] - n.aux.data[i]);
        return;
      }
      case Op::SOFTMAX_XENT: {
        Tensor& gx = grad_buf(n.a);
        const double g0 = gy.data[0];
        for (size_t i = 0; i < n.aux.data.size(); ++i) gx.data[i] += g0 * n.aux.data[i];
        return;
      }
    }
  }

  const ParamStore* params_;
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::unordered_map<std::string, int> param_ids_;
};

}  // namespace srvo
