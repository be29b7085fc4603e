#pragma once

#include "smsat/nn/tensor.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace smsat::nn {

struct ParamRef {
  std::string name;
  Tensor tensor;
};

// Non-trainable state (batchnorm running stats).
struct BufferRef {
  std::string name;
  Array* data;
};

class Module {
 public:
  virtual ~Module() = default;
  virtual std::vector<ParamRef> parameters() const = 0;
  virtual std::vector<BufferRef> buffers() { return {}; }

  Index parameter_count() const;
  void zero_grad() const;
};

// ----- initialization -----
/// U(-sqrt(6/fan_in), sqrt(6/fan_in)); variance 2/fan_in.
Tensor kaiming_uniform(Shape shape, Index fan_in, CounterRng& rng);
Tensor uniform_init(Shape shape, double bound, CounterRng& rng);

// ----- optimizer -----
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<ParamRef> params, AdamConfig cfg);
  /// Applies one bias-corrected update from the current grads, then clears them.
  void step();
  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<ParamRef> params_;
  AdamConfig cfg_;
  std::vector<Array> m_, v_;
  long t_ = 0;
};

// ----- checkpoints -----
struct NamedArray {
  std::string name;
  Shape shape;
  Array data;
};

struct Checkpoint {
  nlohmann::json header;
  std::vector<NamedArray> tensors;

  const NamedArray* find(const std::string& name) const;
};

/// Layout: "SMSATCK1", u64 header length, JSON header, u64 tensor count, then
/// per tensor u32 name length, name, u8 dtype (1 = f64), u32 ndim, u64 dims,
/// little-endian payload.
void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& file);

/// Parameters followed by buffers.
Checkpoint snapshot(Module& m, nlohmann::json header);
/// Copies matching tensors into `m`; throws on a missing name or shape mismatch.
void restore(Module& m, const Checkpoint& ck);

// ----- gradient checking -----
struct GradCheckResult {
  double max_rel_error = 0.0;
  Index checked = 0;
  std::string worst;  // "<input>[<coord>]"
};

/// Compares backward() against central differences of `f` over the given
/// leaves. Non-scalar outputs are reduced with fixed random weights. At most
/// `max_coords` coordinates per input are probed (all when <= 0).
GradCheckResult grad_check(const std::function<Tensor()>& f, const std::vector<ParamRef>& inputs, double h = 1e-5,
                           Index max_coords = 0, std::uint64_t seed = 7);

}  // namespace smsat::nn
