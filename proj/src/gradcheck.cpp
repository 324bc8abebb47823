#include "rga/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rga/rng.hpp"

namespace rga {

bool CheckReport::pass() const {
  return std::all_of(params.begin(), params.end(), [](const ParamCheck& p) { return p.pass; });
}

double CheckReport::worst_rel_err() const {
  double w = 0.0;
  for (const auto& p : params) w = std::max(w, p.max_rel_err);
  return w;
}

namespace {

double evaluate(const LossFn& fn, ParameterSet<double>& params) {
  Graph<double> g;
  g.set_recording(false);
  return g.value(fn(g, params)).item();
}

std::vector<std::size_t> pick_elements(std::size_t n, std::size_t limit, Rng rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (limit == 0 || limit >= n) return idx;
  // Partial Fisher-Yates, then sorted for a stable report order.
  for (std::size_t i = 0; i < limit; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

CheckReport grad_check(const LossFn& fn, ParameterSet<double>& params, const GradCheckOptions& options) {
  const double base = evaluate(fn, params);
  const double again = evaluate(fn, params);
  if (std::memcmp(&base, &again, sizeof(double)) != 0) {
    throw std::runtime_error("grad_check: loss function is not deterministic");
  }

  params.zero_grad();
  {
    Graph<double> g;
    g.backward(fn(g, params));
  }

  const Rng rng = Rng(options.seed).split(Stream::kGradCheck);
  CheckReport report;
  for (auto& [name, entry] : params) {
    if (!entry.trainable) continue;
    ParamCheck pc;
    pc.name = name;
    const auto elements = pick_elements(entry.value.size(), options.max_elements_per_param, rng.split(name));
    for (std::size_t i : elements) {
      double& x = entry.value[i];
      const double saved = x;
      x = saved + options.step;
      const double fp = evaluate(fn, params);
      x = saved - options.step;
      const double fm = evaluate(fn, params);
      x = saved;
      const double numeric = (fp - fm) / (2.0 * options.step);
      const double analytic = entry.grad[i] * options.corrupt_scale;
      const double abs_err = std::abs(analytic - numeric);
      const double denom = std::max(std::abs(analytic), std::abs(numeric));
      const double rel_err = denom > 0.0 ? abs_err / denom : 0.0;
      pc.max_abs_err = std::max(pc.max_abs_err, abs_err);
      if (abs_err > options.abs_tol) {
        pc.max_rel_err = std::max(pc.max_rel_err, rel_err);
        if (rel_err > options.rel_tol) pc.pass = false;
      }
      ++pc.checked;
    }
    report.params.push_back(std::move(pc));
  }
  params.zero_grad();
  return report;
}

std::string format_report(const CheckReport& report) {
  std::ostringstream os;
  char buf[64];
  for (const auto& p : report.params) {
    std::snprintf(buf, sizeof(buf), "%.3e", p.max_rel_err);
    os << p.name << " max_rel_err=" << buf << (p.pass ? " PASS" : " FAIL") << '\n';
  }
  return os.str();
}

}  // namespace rga
