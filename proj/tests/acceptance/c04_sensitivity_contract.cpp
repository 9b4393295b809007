#include <cmath>
#include <cstdio>
#include <string>

#include "acceptance.hpp"
#include "hintlab/common.hpp"
#include "hintlab/effects.hpp"

namespace {

using namespace hintlab;
using namespace hintlab::effects;

// At (0,0) the sensitivity interval is the plain 95% CI to 1e-9, and the
// width never decreases in either parameter over a 10x10 grid.
bool run(std::string& detail) {
  Rng rng(404);
  double worst_zero = 0.0;
  int violations = 0;
  for (int rep = 0; rep < 20; ++rep) {
    EffectEstimate fit;
    fit.estimate = rng.normal(0.0, 0.5);
    fit.std_error = 0.01 + rng.uniform() * 0.2;
    fit.ci_lo = fit.estimate - 1.96 * fit.std_error;
    fit.ci_hi = fit.estimate + 1.96 * fit.std_error;

    auto z = sensitivity_interval(fit, 0.0, 0.0);
    worst_zero = std::max({worst_zero, std::abs(z.first - fit.ci_lo),
                           std::abs(z.second - fit.ci_hi)});

    double rho[10], tz[10];
    for (int i = 0; i < 10; ++i) {
      rho[i] = 0.099 * i;  // 0 .. 0.891
      tz[i] = 0.5 * i;     // 0 .. 4.5
    }
    double width[10][10];
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j) {
        auto iv = sensitivity_interval(fit, rho[i], tz[j]);
        width[i][j] = iv.second - iv.first;
      }
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j) {
        if (i + 1 < 10 && width[i + 1][j] < width[i][j]) ++violations;
        if (j + 1 < 10 && width[i][j + 1] < width[i][j]) ++violations;
      }
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "max gap at (0,0)=%.3e, monotonicity violations=%d",
                worst_zero, violations);
  detail = buf;
  return worst_zero < 1e-9 && violations == 0;
}

acceptance::Register reg(4, "sensitivity interval contract", run);

}  // namespace
