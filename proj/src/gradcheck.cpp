#include "regunet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "regunet/errors.hpp"
#include "regunet/rng.hpp"

namespace rgn {

FdReport finite_difference_check(ParamStore& store,
                                 const std::function<void()>& grads,
                                 const std::function<double()>& loss,
                                 double h, double denom_floor,
                                 std::size_t stride) {
  if (stride == 0) throw ConfigError("finite_difference_check: stride 0");
  store.zero_grads();
  grads();
  std::vector<Matrix> analytic;
  analytic.reserve(store.count());
  for (std::size_t p = 0; p < store.count(); ++p)
    analytic.push_back(store.at(p).grad);

  FdReport report;
  for (std::size_t p = 0; p < store.count(); ++p) {
    Param& param = store.at(p);
    for (std::size_t i = 0; i < param.value.size(); i += stride) {
      const double saved = param.value.data()[i];
      param.value.data()[i] = saved + h;
      const double fp = loss();
      param.value.data()[i] = saved - h;
      const double fm = loss();
      param.value.data()[i] = saved;
      FdEntry e;
      e.param = param.name;
      e.index = i;
      e.ad = analytic[p].data()[i];
      e.fd = (fp - fm) / (2.0 * h);
      e.rel_err = std::abs(e.ad - e.fd) /
                  std::max({std::abs(e.ad), std::abs(e.fd), denom_floor});
      if (e.rel_err > report.max_rel_err) {
        report.max_rel_err = e.rel_err;
        report.worst = report.entries.size();
      }
      report.entries.push_back(std::move(e));
      ++report.checked;
    }
  }
  return report;
}

void perturb_parameters(ParamStore& store, std::uint64_t seed,
                        double amplitude) {
  Rng rng(seed);
  for (std::size_t p = 0; p < store.count(); ++p) {
    Matrix& value = store.at(p).value;
    for (std::size_t i = 0; i < value.size(); ++i)
      value.data()[i] += rng.symmetric(amplitude);
  }
}

}  // namespace rgn
