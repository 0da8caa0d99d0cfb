#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "regunet/matrix.hpp"

namespace rgn {

inline constexpr std::size_t kNoParam = static_cast<std::size_t>(-1);

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;    // same shape as value, zeroed between optimizer steps
  Matrix adam_m;  // first/second moment estimates, allocated by the optimizer
  Matrix adam_v;
};

// Named trainable tensors. Insertion order is the canonical order: it fixes
// initialization draws, checkpoint layout, and optimizer iteration, so a
// given (model config, seed) always produces identical bytes.
class ParamStore {
public:
  std::size_t add(const std::string& name, Matrix init);
  std::size_t find(const std::string& name) const;  // InputError if absent
  bool contains(const std::string& name) const;

  Param& at(std::size_t id) { return params_[id]; }
  const Param& at(std::size_t id) const { return params_[id]; }
  std::size_t count() const { return params_.size(); }

  void zero_grads();
  std::size_t total_elements() const;
  std::vector<std::string> names() const;

  std::uint64_t adam_step = 0;

private:
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
};

// One Adam step over every parameter with bias correction:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   theta -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_step(ParamStore& store, double lr, const AdamConfig& cfg = {});

// Checkpoint container format: little-endian; magic "RGCK", version uint32,
// tensor count uint32, then per tensor: name length uint32, UTF-8 name,
// rows uint32, cols uint32, rows*cols float64 values.
void write_rgck(const std::string& path,
                const std::vector<std::pair<std::string, const Matrix*>>&
                    tensors);
std::vector<std::pair<std::string, Matrix>> read_rgck(const std::string& path);

// Serializes parameter values in store order, then Adam moments under
// "<name>.adam_m" / "<name>.adam_v", a "meta.adam_step" scalar, then extras.
void save_checkpoint(
    const std::string& path, const ParamStore& store,
    const std::vector<std::pair<std::string, const Matrix*>>& extras);

// Loads values (and moments when present) into an already-registered store;
// shape or name mismatches are input errors. Returns the non-parameter
// tensors (extras) for the caller to interpret.
std::vector<std::pair<std::string, Matrix>> load_checkpoint(
    const std::string& path, ParamStore& store);

}  // namespace rgn
