#pragma once

#include "stec/graph.hpp"
#include "stec/tensor.hpp"

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace stec::model {

struct ParamFlags {
  bool learnable = true;
  bool no_weight_decay = false;   // batch-norm scales/offsets and biases
  bool exclude_from_lars = false;  // same set, per the optimizer contract
};

// Named map of dense tensors: learnable parameters, batch-norm running
// stats, an optional EMA shadow, and optimizer momentum buffers. Sorted
// iteration keeps every reduction and serialization order-deterministic.
// Mutation happens only in the optimizer / EMA path (single writer).
class ParamStore {
 public:
  void add(const std::string& name, grad::Tensor t, ParamFlags flags = {}) {
    if (entries_.count(name))
      throw std::invalid_argument("ParamStore: duplicate name " + name);
    entries_[name] = Entry{std::move(t), flags};
  }

  bool has(const std::string& name) const { return entries_.count(name) > 0; }

  grad::Tensor& tensor(const std::string& name) { return at(name).tensor; }
  const grad::Tensor& tensor(const std::string& name) const {
    return at(name).tensor;
  }
  const ParamFlags& flags(const std::string& name) const {
    return at(name).flags;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
  }

  std::vector<std::string> learnable_names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_)
      if (v.flags.learnable) out.push_back(k);
    return out;
  }

  // ---- EMA shadow ----
  bool has_shadow() const { return !shadow_.empty(); }
  void init_shadow() {
    shadow_.clear();
    for (const auto& [k, v] : entries_) shadow_[k] = v.tensor;
  }
  grad::Tensor& shadow(const std::string& name) {
    auto it = shadow_.find(name);
    if (it == shadow_.end())
      throw std::logic_error("ParamStore: no EMA shadow for " + name);
    return it->second;
  }
  const grad::Tensor& shadow(const std::string& name) const {
    auto it = shadow_.find(name);
    if (it == shadow_.end())
      throw std::logic_error("ParamStore: no EMA shadow for " + name);
    return it->second;
  }
  const std::map<std::string, grad::Tensor>& shadow_map() const { return shadow_; }
  std::map<std::string, grad::Tensor>& shadow_map() { return shadow_; }

  // ---- optimizer state ----
  grad::Tensor& momentum(const std::string& name) {
    auto it = momentum_.find(name);
    if (it == momentum_.end()) {
      momentum_[name] = grad::Tensor::zeros(at(name).tensor.shape);
      it = momentum_.find(name);
    }
    return it->second;
  }
  const std::map<std::string, grad::Tensor>& momentum_map() const {
    return momentum_;
  }
  std::map<std::string, grad::Tensor>& momentum_map() { return momentum_; }

  // sum of squared weights over parameters carrying weight decay
  double reg_loss() const {
    double acc = 0.0;
    for (const auto& [k, v] : entries_)
      if (v.flags.learnable && !v.flags.no_weight_decay)
        acc += v.tensor.data.square().sum();
    return acc;
  }

  // Graph leaf for a stored tensor (or its EMA shadow). Requests for a
  // name already present in the graph return the existing node, so a
  // parameter used in several places accumulates one gradient.
  grad::NodeId leaf(grad::Graph& g, const std::string& name,
                    bool use_shadow = false) const {
    const std::string key = use_shadow ? "ema/" + name : name;
    const grad::NodeId existing = g.find(key);
    if (existing >= 0) return existing;
    grad::Tensor t = use_shadow ? shadow(name) : tensor(name);
    t.requires_grad = !use_shadow && at(name).flags.learnable;
    return g.leaf(std::move(t), key);
  }

 private:
  struct Entry {
    grad::Tensor tensor;
    ParamFlags flags;
  };
  Entry& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end())
      throw std::logic_error("ParamStore: unknown name " + name);
    return it->second;
  }
  const Entry& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end())
      throw std::logic_error("ParamStore: unknown name " + name);
    return it->second;
  }

  std::map<std::string, Entry> entries_;
  std::map<std::string, grad::Tensor> shadow_;
  std::map<std::string, grad::Tensor> momentum_;
};

// shadow <- decay*shadow + (1-decay)*online, elementwise over every entry
void ema_update(ParamStore& store, double decay);

// BYOL-style schedule: 1 - (1-tau0) * (cos(pi*t/T)+1)/2
double ema_decay_at(long step, long total_steps, double tau0);

}  // namespace stec::model
