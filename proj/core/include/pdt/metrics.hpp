#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pdt/networks.hpp"
#include "pdt/tensor.hpp"
#include "pdt/training.hpp"

namespace pdt {

// Structural-similarity parameters. The metric contract names SSIM without
// fixing constants, so these are pinned once here and echoed in every
// report; changing them silently would make reported numbers incomparable.
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr double kSsimRange = 1.0;  // dynamic range of [0,1] pixels

// Root mean square error between two same-shape [C,H,W] images valued in
// [-1,1], computed on [0,1]-mapped pixels; result lies in [0,1].
double rmse(const Tensor& a, const Tensor& b);

// Channel-averaged SSIM between two [3,H,W] images valued in [-1,1]: per
// channel, the mean of the SSIM map over all valid (fully inside) windows
// of a kSsimWindow-wide Gaussian, then the mean over the three channels.
// Requires H and W >= kSsimWindow. Result lies in [-1,1]; identical inputs
// give exactly 1.
double color_ssim(const Tensor& a, const Tensor& b);

struct ImageMetrics {
  std::string product_id;
  double rmse = 0.0;
  double c_ssim = 0.0;
};

struct MetricReport {
  std::string mode;   // how the evaluated images were produced
  std::string split;  // which pairs were evaluated
  std::vector<ImageMetrics> images;
  double mean_rmse = 0.0;
  double mean_c_ssim = 0.0;

  // One tab-separated line per image plus a '#'-prefixed summary block that
  // records the means and the SSIM parameters.
  std::string to_text() const;
};

// Maps an [N,3,H,W] batch of sources to an [N,3,H,W] batch of generated
// targets (inference-mode application of some converter).
using GenerateFn = std::function<Tensor(const Tensor& source_batch)>;

// Scores every (source, ground-truth) pair of the split with both metrics.
// `generate` is applied to chunks of sources; per-image results do not
// depend on the chunking because inference is per-item deterministic.
MetricReport evaluate_generated(const GenerateFn& generate,
                                const LoadedSplit& data,
                                const std::string& mode_label);

// Convenience wrapper: inference-mode application of `converter`.
MetricReport evaluate_converter(Converter<float>& converter,
                                const LoadedSplit& data,
                                const std::string& mode_label);

// Association scores of one source against a list of candidate targets,
// in candidate order.
using PairScoreFn = std::function<std::vector<double>(
    const Tensor& source, const std::vector<Tensor>& targets)>;

// Returns the product id whose photo the scorer ranks highest for this
// source; equal scores resolve to the lowest product id. `ids` and
// `targets` run parallel and must be nonempty.
std::string dd_retrieve_scored(const PairScoreFn& score, const Tensor& source,
                               const std::vector<std::string>& ids,
                               const std::vector<Tensor>& targets);

// Same ranking with scores from the association discriminator applied in
// inference mode.
std::string dd_retrieve(Network<float>& disc, const Tensor& source,
                        const std::vector<std::string>& ids,
                        const std::vector<Tensor>& targets);

// Fraction of the split's pairs whose own product wins retrieval when every
// product photo in `data` is a candidate (chance level 1/#products).
double retrieval_accuracy_scored(const PairScoreFn& score,
                                 const LoadedSplit& data);
double retrieval_accuracy(Network<float>& disc, const LoadedSplit& data);

}  // namespace pdt
