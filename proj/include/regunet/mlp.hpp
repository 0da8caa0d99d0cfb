#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "regunet/autodiff.hpp"
#include "regunet/params.hpp"
#include "regunet/rng.hpp"

namespace rgn {

struct MlpSpec {
  std::size_t in_dim = 0;
  std::size_t hidden = 0;
  std::size_t out_dim = 0;
  std::size_t layers = 4;  // affine maps; ReLU between, none after the last
  bool output_layer_norm = false;
};

// Parameter ids of one registered MLP.
struct MlpParams {
  MlpSpec spec;
  std::vector<std::size_t> W;
  std::vector<std::size_t> b;
  std::size_t ln_gamma = kNoParam;
  std::size_t ln_beta = kNoParam;
};

// Registers weights under "<prefix>.W1".."<prefix>.b1".. (and
// "<prefix>.ln.gamma"/".ln.beta" when the output is normalized).
// Weights are Glorot-uniform, limit sqrt(6 / (fan_in + fan_out)), drawn
// row-major from `rng`; biases zero; gamma 1, beta 0.
MlpParams register_mlp(ParamStore& store, const std::string& prefix,
                       const MlpSpec& spec, Rng& rng);

Ref mlp_forward(Tape& tape, const MlpParams& mlp, Ref input);

// Same network, but the first affine map is evaluated as a sum of projected
// input blocks (see LinPart); the blocks' widths must add up to spec.in_dim.
Ref mlp_forward_parts(Tape& tape, const MlpParams& mlp,
                      std::vector<LinPart> parts, std::size_t out_rows);

}  // namespace rgn
