#include "acmg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "acmg/error.hpp"

namespace acmg::ad {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const LossFn& loss) {
  Tape tape(false);
  Var out = loss(tape);
  if (out.rows() != 1 || out.cols() != 1) {
    throw ShapeError("gradcheck: loss must be 1x1, got " + out.value().shape_str());
  }
  const double v = out.value()[0];
  if (!std::isfinite(v)) {
    const auto where = tape.first_non_finite();
    throw NonFiniteError("gradcheck: non-finite loss; first non-finite intermediate: " +
                         where.value_or("none recorded"));
  }
  return v;
}

}  // namespace

GradcheckReport gradcheck(const LossFn& loss, const std::vector<Parameter*>& params, double step,
                          double tol, const GradientHook& hook) {
  if (!(step >= 1e-6 && step <= 1e-4)) {
    throw std::invalid_argument("gradcheck: step must lie in [1e-6, 1e-4]");
  }
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var out = loss(tape);
    if (!std::isfinite(out.value()[0])) {
      throw NonFiniteError("gradcheck: non-finite loss; first non-finite intermediate: " +
                           tape.first_non_finite().value_or("none recorded"));
    }
    tape.backward(out);
  }
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);
  if (hook) hook(analytic);

  GradcheckReport report;
  report.tol = tol;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    GradcheckEntry e;
    e.name = p.name;
    e.count = p.value.size();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double orig = p.value[k];
      p.value[k] = orig + step;
      const double up = evaluate(loss);
      p.value[k] = orig - step;
      const double down = evaluate(loss);
      p.value[k] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(analytic[pi][k], numeric);
      if (err > e.max_rel_error || k == 0) {
        e.max_rel_error = err;
        e.worst_index = k;
        e.worst_analytic = analytic[pi][k];
        e.worst_numeric = numeric;
      }
    }
    e.passed = e.max_rel_error <= tol;
    report.max_rel_error = std::max(report.max_rel_error, e.max_rel_error);
    report.passed = report.passed && e.passed;
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace acmg::ad
