#pragma once

#include <map>
#include <string>
#include <vector>

#include "geod/tensor.hpp"

namespace geod {

// Named trainable leaves. Iteration order is lexicographic by name, which
// makes optimizer sweeps and checkpoint bytes deterministic.
class ParameterStore {
 public:
  Tensor create(const std::string& name, Tensor init);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const;
  std::vector<std::string> names() const;
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;
  size_t size() const { return params_.size(); }

  // Replaces values in place (shape-checked); used by checkpoint loading.
  void set_values(const std::string& name, const std::vector<double>& values);

  const std::map<std::string, Tensor>& all() const { return params_; }

 private:
  std::map<std::string, Tensor> params_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction. Only parameters matching one of the
// name prefixes are touched; everything else stays bitwise identical, which
// is what keeps generator/discriminator updates strictly separated.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(ParameterStore& params, const GradMap& grads,
            const std::vector<std::string>& prefixes = {});

  const AdamConfig& config() const { return cfg_; }

 private:
  struct State {
    std::vector<double> m, v;
    int64_t t = 0;
  };
  AdamConfig cfg_;
  std::map<std::string, State> state_;
};

// Checkpoint file: magic "GEOD1\n", one line of JSON (a list of
// {name, shape, dtype, byte_offset}), then a raw little-endian payload.
// Tensors are float32; a trailing uint8 entry named "__meta__" carries the
// UTF-8 bytes of the run's resolved config JSON so checkpoints are
// self-describing.
void save_checkpoint(const std::string& path, const ParameterStore& params,
                     const std::string& meta_json);

// Loads parameters into `params` (creating or overwriting by name) and
// returns the meta JSON string ("" if absent).
std::string load_checkpoint(const std::string& path, ParameterStore& params);

}  // namespace geod
