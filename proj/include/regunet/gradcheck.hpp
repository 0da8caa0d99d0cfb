#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "regunet/params.hpp"

namespace rgn {

struct FdEntry {
  std::string param;
  std::size_t index = 0;  // flat element index within the parameter
  double ad = 0.0;
  double fd = 0.0;
  double rel_err = 0.0;
};

struct FdReport {
  std::vector<FdEntry> entries;
  double max_rel_err = 0.0;
  std::size_t worst = 0;  // index into entries
  std::size_t checked = 0;
};

// Validates reverse-mode gradients against central finite differences.
// `grads` must run one forward/backward pass that leaves d(loss)/d(theta)
// in the store's grad buffers; `loss` must evaluate the same loss at the
// current parameter values without touching gradients. Every stride-th
// element of every parameter is perturbed by +/-h. Relative error uses
// |ad - fd| / max(|ad|, |fd|, denom_floor), which stays meaningful when a
// component is near zero.
FdReport finite_difference_check(ParamStore& store,
                                 const std::function<void()>& grads,
                                 const std::function<double()>& loss,
                                 double h = 1e-6, double denom_floor = 1e-3,
                                 std::size_t stride = 1);

// Adds symmetric uniform noise to every parameter element. Freshly built
// models sit exactly on relu kinks and zero-variance layer-norm rows (zero
// biases meet the all-zero first-step node features), where the loss is not
// differentiable and finite differences see one-sided cliffs; checks must
// run from a generic point instead.
void perturb_parameters(ParamStore& store, std::uint64_t seed,
                        double amplitude);

}  // namespace rgn
