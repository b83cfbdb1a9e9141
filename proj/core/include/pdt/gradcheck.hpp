#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pdt/tape.hpp"
#include "pdt/tensor.hpp"

namespace pdt {

struct GradCheckOptions {
  double eps = 1e-4;        // initial central-difference step
  int max_coords = 24;      // per input; larger tensors are subsampled
  double rel_floor = 1e-3;  // denominator floor for the relative error
  std::uint64_t seed = 17;  // coordinate subsampling stream
  // Self-validating step refinement. A fixed-step quotient estimates nothing
  // where the function is not smooth across [x-eps, x+eps]: in networks with
  // kinked activations, a perturbation that flips any downstream
  // preactivation sign biases the quotient by a piece of the slope jump. So
  // each quotient is validated against the one at a 10x smaller step; if the
  // two disagree beyond agree_rel (relative), the step descends — at most
  // refine_levels times and never past the precision's roundoff floor.
  // A coordinate whose finest pair still disagrees sits too close to a kink
  // for any usable step; it is skipped and (for subsampled inputs) another
  // coordinate is drawn, since it carries no evidence about the analytic
  // gradient either way. A genuinely wrong analytic gradient is never
  // masked: successive quotients of a smooth function agree with each other
  // immediately and converge to the true derivative, not to the analytic
  // claim. 0 disables refinement (raw fixed-step behavior, nothing skipped).
  int refine_levels = 3;
  double agree_rel = 1e-4;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_input;
  std::int64_t worst_coord = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::int64_t coords_checked = 0;
  // Coordinates whose first quotient pair disagreed (a kink inside the
  // initial interval, or heavy curvature) and that descended further.
  std::int64_t coords_refined = 0;
  // Coordinates abandoned because even the finest step pair disagreed: the
  // difference quotient never stabilized, so no numeric estimate exists
  // there. They do not enter max_rel_err unless an input validates nowhere,
  // in which case its finest (unvalidated) estimates are compared after all
  // rather than passing vacuously.
  std::int64_t coords_skipped = 0;

  bool pass(double tol) const { return max_rel_err <= tol; }
  std::string to_string() const;
};

// Compares reverse-mode gradients against central finite differences.
//
// `loss_fn` must rebuild the forward computation from the *current* values
// of the given inputs and return a scalar loss: with a tape it is recorded
// and differentiated once, and with a null tape it is re-evaluated after
// each coordinate perturbation. For every sampled coordinate i of every
// input x the harness compares analytic dL/dx_i against the central
// difference (L(x_i + eps) - L(x_i - eps)) / (2 eps) — with the step
// refined per coordinate where the quotient fails its own consistency
// test, see GradCheckOptions — using the relative error
// |a - n| / max(|a|, |n|, rel_floor).
//
// Run in double precision for meaningful tolerances (~1e-6 achievable);
// float evaluations drown in rounding noise around 1e-2. Forward functions
// containing train-mode batch normalization may mutate running statistics
// across re-evaluations; that state does not feed back into the loss, so
// the check is unaffected.
template <class T>
GradCheckReport gradient_check(
    const std::function<TensorT<T>(Tape<T>*)>& loss_fn,
    const std::vector<std::pair<std::string, TensorT<T>>>& inputs,
    const GradCheckOptions& options = {});

extern template GradCheckReport gradient_check<float>(
    const std::function<TensorT<float>(Tape<float>*)>&,
    const std::vector<std::pair<std::string, TensorT<float>>>&,
    const GradCheckOptions&);
extern template GradCheckReport gradient_check<double>(
    const std::function<TensorT<double>(Tape<double>*)>&,
    const std::vector<std::pair<std::string, TensorT<double>>>&,
    const GradCheckOptions&);

}  // namespace pdt
