#pragma once

#include <cmath>
#include <map>
#include <string>

#include "srvo/rng.hpp"
#include "srvo/tensor.hpp"

namespace srvo {

using GradMap = std::map<std::string, Tensor>;

// Named parameter tensors. std::map keeps iteration order lexicographic,
// which fixes every reduction and serialization order in the library.
class ParamStore {
 public:
  void add(const std::string& name, Tensor t) {
    if (tensors_.count(name)) throw StructuralError("duplicate parameter name: " + name);
    tensors_.emplace(name, std::move(t));
  }

  bool has(const std::string& name) const { return tensors_.count(name) != 0; }

  const Tensor& at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw StructuralError("unknown parameter: " + name);
    return it->second;
  }

  // Mutable access keeps the shape frozen; only values may change.
  Tensor& mutable_at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw StructuralError("unknown parameter: " + name);
    return it->second;
  }

  const std::map<std::string, Tensor>& all() const { return tensors_; }
  std::map<std::string, Tensor>& all_mutable() { return tensors_; }

  int64_t total_params() const {
    int64_t n = 0;
    for (const auto& [k, v] : tensors_) n += v.numel();
    return n;
  }

 private:
  std::map<std::string, Tensor> tensors_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay = 1.0;        // multiplicative lr decay factor
  int64_t decay_steps = 1000;  // applied every decay_steps optimizer steps
};

struct AdamState {
  AdamConfig cfg;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  int64_t t = 0;  // completed steps

  double effective_lr() const {
    return cfg.lr * std::pow(cfg.decay, static_cast<double>(t / cfg.decay_steps));
  }
};

// Standard Adam update with bias correction. Only parameters present in
// `grads` are touched; moments are created on first use.
inline void adam_step(ParamStore& params, const GradMap& grads, AdamState& opt) {
  const double lr = opt.effective_lr();
  const int64_t t_new = opt.t + 1;
  const double bc1 = 1.0 - std::pow(opt.cfg.beta1, static_cast<double>(t_new));
  const double bc2 = 1.0 - std::pow(opt.cfg.beta2, static_cast<double>(t_new));
  for (const auto& [name, g] : grads) {
    Tensor& p = params.mutable_at(name);
    if (!p.same_shape(g)) throw StructuralError("gradient shape mismatch for " + name);
    if (!g.all_finite()) throw NumericError("non-finite gradient for " + name);
    auto [mit, minserted] = opt.m.try_emplace(name, Tensor(p.shape));
    auto [vit, vinserted] = opt.v.try_emplace(name, Tensor(p.shape));
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (size_t i = 0; i < p.data.size(); ++i) {
      m.data[i] = opt.cfg.beta1 * m.data[i] + (1.0 - opt.cfg.beta1) * g.data[i];
      v.data[i] = opt.cfg.beta2 * v.data[i] + (1.0 - opt.cfg.beta2) * g.data[i] * g.data[i];
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + opt.cfg.eps);
    }
  }
  opt.t = t_new;
}

// Uniform(-s, s) with s = 1/sqrt(fan_in).
inline Tensor init_dense_weight(int64_t out_dim, int64_t in_dim, Rng& rng) {
  Tensor w({out_dim, in_dim});
  const double s = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (double& x : w.data) x = rng.uniform(-s, s);
  return w;
}

}  // namespace srvo
