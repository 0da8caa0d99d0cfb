#include "regunet/params.hpp"

#include <cmath>

#include "regunet/binio.hpp"
#include "regunet/errors.hpp"

namespace rgn {

std::size_t ParamStore::add(const std::string& name, Matrix init) {
  if (index_.count(name)) throw InputError("duplicate parameter: " + name);
  const std::size_t id = params_.size();
  Param p;
  p.name = name;
  p.grad = Matrix(init.rows(), init.cols());
  p.value = std::move(init);
  params_.push_back(std::move(p));
  index_[name] = id;
  return id;
}

std::size_t ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InputError("unknown parameter: " + name);
  return it->second;
}

bool ParamStore::contains(const std::string& name) const {
  return index_.count(name) != 0;
}

void ParamStore::zero_grads() {
  for (auto& p : params_) p.grad.set_zero();
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.name);
  return out;
}

void adam_step(ParamStore& store, double lr, const AdamConfig& cfg) {
  store.adam_step += 1;
  const double t = static_cast<double>(store.adam_step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t id = 0; id < store.count(); ++id) {
    Param& p = store.at(id);
    if (p.adam_m.empty()) {
      p.adam_m = Matrix(p.value.rows(), p.value.cols());
      p.adam_v = Matrix(p.value.rows(), p.value.cols());
    }
    double* th = p.value.data();
    double* g = p.grad.data();
    double* m = p.adam_m.data();
    double* v = p.adam_v.data();
    const std::size_t n = p.value.size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      th[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

namespace {
constexpr char kMagic[4] = {'R', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void write_rgck(
    const std::string& path,
    const std::vector<std::pair<std::string, const Matrix*>>& tensors) {
  BinWriter w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, mat] : tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(mat->rows()));
    w.u32(static_cast<std::uint32_t>(mat->cols()));
    w.f64_array(mat->data(), mat->size());
  }
  w.commit(path);
}

std::vector<std::pair<std::string, Matrix>> read_rgck(
    const std::string& path) {
  BinReader r(path);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad checkpoint magic", 0);
  const std::uint32_t version = r.u32("version");
  if (version != kVersion)
    throw FormatError("unsupported checkpoint version " +
                          std::to_string(version),
                      4);
  const std::uint32_t count = r.u32("tensor count");
  std::vector<std::pair<std::string, Matrix>> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32("name length");
    std::string name(len, '\0');
    r.bytes(name.data(), len, "name");
    const std::uint32_t rows = r.u32("rows");
    const std::uint32_t cols = r.u32("cols");
    Matrix m(rows, cols);
    r.f64_array(m.data(), m.size(), name.c_str());
    out.emplace_back(std::move(name), std::move(m));
  }
  r.expect_end("tensor table");
  return out;
}

void save_checkpoint(
    const std::string& path, const ParamStore& store,
    const std::vector<std::pair<std::string, const Matrix*>>& extras) {
  std::vector<std::pair<std::string, const Matrix*>> tensors;
  Matrix step(1, 1);
  step(0, 0) = static_cast<double>(store.adam_step);
  for (std::size_t id = 0; id < store.count(); ++id)
    tensors.emplace_back(store.at(id).name, &store.at(id).value);
  for (std::size_t id = 0; id < store.count(); ++id) {
    const Param& p = store.at(id);
    if (p.adam_m.empty()) continue;
    tensors.emplace_back(p.name + ".adam_m", &p.adam_m);
    tensors.emplace_back(p.name + ".adam_v", &p.adam_v);
  }
  tensors.emplace_back("meta.adam_step", &step);
  for (const auto& e : extras) tensors.push_back(e);
  write_rgck(path, tensors);
}

std::vector<std::pair<std::string, Matrix>> load_checkpoint(
    const std::string& path, ParamStore& store) {
  auto tensors = read_rgck(path);
  std::vector<std::pair<std::string, Matrix>> extras;
  std::vector<bool> seen(store.count(), false);
  for (auto& [name, mat] : tensors) {
    if (name == "meta.adam_step") {
      store.adam_step = static_cast<std::uint64_t>(mat(0, 0));
      continue;
    }
    auto strip = [&](const std::string& suffix, Matrix Param::* field) {
      const std::string base = name.substr(0, name.size() - suffix.size());
      if (!store.contains(base)) return false;
      Param& p = store.at(store.find(base));
      if (!p.value.same_shape(mat))
        throw InputError("checkpoint tensor shape mismatch: " + name);
      p.*field = std::move(mat);
      return true;
    };
    if (name.size() > 7 && name.ends_with(".adam_m")) {
      if (strip(".adam_m", &Param::adam_m)) continue;
    }
    if (name.size() > 7 && name.ends_with(".adam_v")) {
      if (strip(".adam_v", &Param::adam_v)) continue;
    }
    if (store.contains(name)) {
      Param& p = store.at(store.find(name));
      if (!p.value.same_shape(mat))
        throw InputError("checkpoint tensor shape mismatch: " + name);
      p.value = std::move(mat);
      seen[store.find(name)] = true;
    } else {
      extras.emplace_back(std::move(name), std::move(mat));
    }
  }
  for (std::size_t id = 0; id < store.count(); ++id)
    if (!seen[id])
      throw InputError("checkpoint missing parameter: " + store.at(id).name);
  return extras;
}

}  // namespace rgn
