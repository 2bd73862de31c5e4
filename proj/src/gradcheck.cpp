#include "clude/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace clude {
namespace {

double evaluate(const LossFn& f) {
  Graph g;
  return f(g).value()[0];
}

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

}  // namespace

double finite_diff_check(const ScalarFn& f, const NdArray& point, double step) {
  NdArray analytic;
  {
    Graph g;
    Var x = g.variable(point);
    Var y = f(g, x);
    g.backward(y);
    analytic = g.grad(x);
  }
  NdArray probe = point;
  auto at = [&](const NdArray& p) {
    Graph g;
    return f(g, g.constant(p)).value()[0];
  };
  double worst = 0.0;
  for (Index i = 0; i < point.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = at(probe);
    probe[i] = orig - step;
    const double down = at(probe);
    probe[i] = orig;
    worst = std::max(worst, rel_error(analytic[i], (up - down) / (2.0 * step)));
  }
  return worst;
}

GradCheckReport check_parameter_gradients(const LossFn& f, std::span<Parameter* const> params, double step,
                                          Index max_coords, std::uint64_t seed, double corrupt) {
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    g.backward(f(g));
  }
  std::mt19937_64 rng(seed);
  GradCheckReport report;
  for (Parameter* p : params) {
    const NdArray analytic = p->grad();
    std::vector<Index> coords(static_cast<std::size_t>(p->value().size()));
    std::iota(coords.begin(), coords.end(), Index{0});
    if (max_coords > 0 && static_cast<Index>(coords.size()) > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(max_coords));
    }
    for (Index i : coords) {
      double& v = p->value()[i];
      const double orig = v;
      v = orig + step;
      const double up = evaluate(f);
      v = orig - step;
      const double down = evaluate(f);
      v = orig;
      const double err = rel_error(analytic[i] + corrupt, (up - down) / (2.0 * step));
      ++report.checked;
      if (err >= report.max_rel_error) {
        report.max_rel_error = err;
        report.worst = p->name() + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace clude
