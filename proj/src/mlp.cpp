#include "regunet/mlp.hpp"

#include <cmath>

#include "regunet/errors.hpp"

namespace rgn {

namespace {

Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Matrix w(fan_in, fan_out);
  const double limit =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < w.size(); ++i)
    w.data()[i] = rng.symmetric(limit);
  return w;
}

}  // namespace

MlpParams register_mlp(ParamStore& store, const std::string& prefix,
                       const MlpSpec& spec, Rng& rng) {
  if (spec.layers == 0) throw ConfigError("mlp: layer count must be >= 1");
  if (spec.in_dim == 0 || spec.out_dim == 0 ||
      (spec.layers > 1 && spec.hidden == 0))
    throw ConfigError("mlp: zero width in " + prefix);
  MlpParams p;
  p.spec = spec;
  for (std::size_t l = 0; l < spec.layers; ++l) {
    const std::size_t in = l == 0 ? spec.in_dim : spec.hidden;
    const std::size_t out = l + 1 == spec.layers ? spec.out_dim : spec.hidden;
    const std::string k = std::to_string(l + 1);
    p.W.push_back(store.add(prefix + ".W" + k, glorot_uniform(in, out, rng)));
    p.b.push_back(store.add(prefix + ".b" + k, Matrix(1, out)));
  }
  if (spec.output_layer_norm) {
    Matrix gamma(1, spec.out_dim);
    for (std::size_t j = 0; j < spec.out_dim; ++j) gamma.data()[j] = 1.0;
    p.ln_gamma = store.add(prefix + ".ln.gamma", std::move(gamma));
    p.ln_beta = store.add(prefix + ".ln.beta", Matrix(1, spec.out_dim));
  }
  return p;
}

namespace {

Ref mlp_tail(Tape& tape, const MlpParams& mlp, Ref h) {
  for (std::size_t l = 1; l < mlp.W.size(); ++l) {
    h = tape.relu(h);
    h = tape.linear(h, mlp.W[l], mlp.b[l]);
  }
  if (mlp.ln_gamma != kNoParam)
    h = tape.layer_norm(h, mlp.ln_gamma, mlp.ln_beta);
  return h;
}

}  // namespace

Ref mlp_forward(Tape& tape, const MlpParams& mlp, Ref input) {
  Ref h = tape.linear(input, mlp.W[0], mlp.b[0]);
  return mlp_tail(tape, mlp, h);
}

Ref mlp_forward_parts(Tape& tape, const MlpParams& mlp,
                      std::vector<LinPart> parts, std::size_t out_rows) {
  Ref h = tape.linear_parts(std::move(parts), mlp.W[0], mlp.b[0], out_rows);
  return mlp_tail(tape, mlp, h);
}

}  // namespace rgn
