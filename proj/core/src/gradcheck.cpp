#include "pdt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "pdt/rng.hpp"

namespace pdt {

std::string GradCheckReport::to_string() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "max_rel_err=%.3e at %s[%lld] (analytic=%.9g numeric=%.9g, "
                "%lld coords, %lld refined, %lld skipped)",
                max_rel_err, worst_input.c_str(),
                static_cast<long long>(worst_coord), worst_analytic,
                worst_numeric, static_cast<long long>(coords_checked),
                static_cast<long long>(coords_refined),
                static_cast<long long>(coords_skipped));
  return buf;
}

template <class T>
GradCheckReport gradient_check(
    const std::function<TensorT<T>(Tape<T>*)>& loss_fn,
    const std::vector<std::pair<std::string, TensorT<T>>>& inputs,
    const GradCheckOptions& options) {
  if (inputs.empty()) {
    throw std::invalid_argument("gradient_check: no inputs given");
  }

  // Analytic pass: one recorded forward, one backward.
  std::vector<TensorT<T>> handles;
  handles.reserve(inputs.size());
  for (const auto& [name, t] : inputs) {
    (void)name;
    TensorT<T> h = t;  // shared-storage handle
    h.set_requires_grad(true);
    h.zero_grad();
    handles.push_back(h);
  }
  Tape<T> tape;
  TensorT<T> loss = loss_fn(&tape);
  if (loss.numel() != 1) {
    throw std::invalid_argument("gradient_check: loss_fn must return a scalar");
  }
  tape.backward(loss);

  std::vector<std::vector<T>> analytic;
  analytic.reserve(handles.size());
  for (auto& h : handles) {
    std::vector<T> g(static_cast<std::size_t>(h.numel()), T(0));
    if (h.has_grad()) {
      std::copy(h.grad(), h.grad() + h.numel(), g.begin());
    }
    analytic.push_back(std::move(g));
  }

  // Numeric pass: central differences on a coordinate subsample.
  Rng rng(options.seed);
  GradCheckReport report;
  for (std::size_t t = 0; t < handles.size(); ++t) {
    TensorT<T>& h = handles[t];
    const std::int64_t n = h.numel();

    struct Estimate {
      double numeric;
      bool validated;  // some step pair agreed (or refinement unavailable)
      bool descended;  // at least one pair disagreed before validating
    };
    // Validated central difference: descend while successive quotients
    // disagree (see GradCheckOptions). The floor sits an order of magnitude
    // above the classic sqrt(machine eps) optimum, keeping cancellation
    // noise on the quotient well under agree_rel; at float precision the
    // default step is already below it, so no descent happens there.
    const double min_step =
        5.0 * std::sqrt(double(std::numeric_limits<T>::epsilon()));
    const auto measure = [&](T* slot, const T original) -> Estimate {
      const auto quotient = [&](double step) {
        *slot = original + T(step);
        const double plus = double(loss_fn(nullptr).item());
        *slot = original - T(step);
        const double minus = double(loss_fn(nullptr).item());
        *slot = original;
        return (plus - minus) / (2.0 * step);
      };
      double step = options.eps;
      double numeric = quotient(step);
      bool validated =
          options.refine_levels <= 0 || step / 10.0 < min_step;
      bool descended = false;
      for (int level = 0; level < options.refine_levels; ++level) {
        const double finer_step = step / 10.0;
        if (finer_step < min_step) break;
        const double finer = quotient(finer_step);
        const bool agree =
            std::fabs(numeric - finer) <=
            options.agree_rel * std::max(std::fabs(finer), options.rel_floor);
        numeric = finer;
        step = finer_step;
        validated = agree;
        if (agree) break;
        descended = true;
      }
      return {numeric, validated, descended};
    };

    const auto apply = [&](std::int64_t coord, double a, double numeric,
                           double rel) {
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_input = inputs[t].first;
        report.worst_coord = coord;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    };

    // Sample until max_coords coordinates carry a validated estimate, with a
    // bounded budget of replacement draws for skipped ones. Small tensors
    // are enumerated exhaustively instead.
    const std::int64_t limit = std::min<std::int64_t>(n, options.max_coords);
    const std::int64_t budget =
        n <= options.max_coords ? n : 4 * std::int64_t(options.max_coords);
    struct Unvalidated {
      std::int64_t coord;
      double analytic_value, numeric, rel;
    };
    std::vector<Unvalidated> unvalidated;
    std::vector<std::int64_t> visited;
    std::int64_t checked_here = 0;
    std::int64_t sequential = 0;
    while (checked_here < limit &&
           std::int64_t(visited.size()) < std::min(budget, n)) {
      std::int64_t c;
      if (n <= options.max_coords) {
        c = sequential++;
      } else {
        do {
          c = static_cast<std::int64_t>(rng.next_below(std::uint64_t(n)));
        } while (std::find(visited.begin(), visited.end(), c) !=
                 visited.end());
      }
      visited.push_back(c);
      T* slot = h.data() + c;
      const Estimate est = measure(slot, *slot);
      const double a = double(analytic[t][static_cast<std::size_t>(c)]);
      const double denom =
          std::max({std::fabs(a), std::fabs(est.numeric), options.rel_floor});
      const double rel = std::fabs(a - est.numeric) / denom;
      if (!est.validated) {
        unvalidated.push_back({c, a, est.numeric, rel});
        continue;
      }
      if (est.descended) ++report.coords_refined;
      ++checked_here;
      apply(c, a, est.numeric, rel);
    }
    if (checked_here == 0) {
      // Nothing validated for this input: compare the finest (unvalidated)
      // estimates rather than letting the input pass with no evidence.
      for (const auto& u : unvalidated) {
        apply(u.coord, u.analytic_value, u.numeric, u.rel);
      }
    } else {
      report.coords_skipped += std::int64_t(unvalidated.size());
    }
  }
  return report;
}

template GradCheckReport gradient_check<float>(
    const std::function<TensorT<float>(Tape<float>*)>&,
    const std::vector<std::pair<std::string, TensorT<float>>>&,
    const GradCheckOptions&);
template GradCheckReport gradient_check<double>(
    const std::function<TensorT<double>(Tape<double>*)>&,
    const std::vector<std::pair<std::string, TensorT<double>>>&,
    const GradCheckOptions&);

}  // namespace pdt
