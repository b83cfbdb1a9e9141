#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pdt/dataset.hpp"
#include "pdt/networks.hpp"
#include "pdt/optim.hpp"
#include "pdt/rng.hpp"
#include "pdt/tensor.hpp"

namespace pdt {

// The four training configurations under comparison: converter with the
// real/fake adversary only, converter with plain regression, and the full
// dual-discriminator setup with and without negative pairs.
enum class TrainingMode { C_RF, C_MSE, C_RF_DD, C_RF_DD_NONEG };

// Stable lowercase identifier: "rf", "mse", "rf_dd", "rf_dd_noneg".
const char* training_mode_name(TrainingMode mode);
// Inverse of training_mode_name; throws std::invalid_argument otherwise.
TrainingMode parse_training_mode(const std::string& name);

struct TrainingConfig {
  TrainingMode mode = TrainingMode::C_RF_DD;
  int batch_size = 128;
  float lr = 2e-4f;
  int lr_drop_epoch = 25;     // epochs beyond this one use lr_after_drop
  float lr_after_drop = 2e-5f;
  int total_epochs = 30;
  float momentum = 0.5f;
  std::uint64_t seed = 0;
  double width = 1.0;
  // Adaptive-moment optimizer instead of classical momentum; the momentum
  // value doubles as its first-moment decay.
  bool use_adam = false;
  // Generator objective that maximizes log D instead of minimizing
  // -log(1 - D); mitigates early saturation. Off by default.
  bool non_saturating = false;

  // Throws std::invalid_argument on violated bounds.
  void validate() const;
};

// Which image stands in for the target on one training item: the ground
// truth, the converter's own output, or an unrelated product's target.
enum class TargetTag { Gt, Gen, Neg };

const char* target_tag_name(TargetTag tag);

// Draws the per-item tag: uniform over {gt, gen, neg} in the full mode,
// uniform over {gt, gen} without negatives, and always gen in the rf/mse
// modes, where no pairwise selection applies.
TargetTag select_target(Rng& rng, TrainingMode mode);

// Learning rate for a 1-based epoch index.
float lr_schedule(int epoch, const TrainingConfig& config);

// One training item: everything run_batch needs. `negative` is defined only
// when the mode samples negatives.
struct BatchItem {
  Tensor source;    // [3,64,64]
  Tensor target;    // ground-truth product image
  Tensor negative;  // an unrelated product image, or undefined
  TargetTag tag = TargetTag::Gen;
};

// Mean losses of one optimization step. Inapplicable entries (e.g. the
// discriminators under mse) are reported as NaN and skipped in logs.
struct StepLosses {
  double rf = 0.0;    // real/fake discriminator objective
  double da = 0.0;    // association discriminator objective
  double conv = 0.0;  // converter objective (or plain MSE in mse mode)
};

// One log record per optimization step, serialized as a JSON line.
struct LossReport {
  int epoch = 0;
  int step = 0;
  StepLosses losses;
  float lr = 0.0f;

  std::string to_json() const;
};

using ReportSink = std::function<void(const LossReport&)>;

// All mutable state of a training run: the four networks, their optimizers,
// and the named random streams. (seed, config, dataset) fully determine
// every subsequent value.
struct TrainingState {
  TrainingConfig config;
  Converter<float> converter;
  Network<float> disc_rf;
  Network<float> disc_da;
  std::unique_ptr<Optimizer<float>> opt_conv;
  std::unique_ptr<Optimizer<float>> opt_rf;
  std::unique_ptr<Optimizer<float>> opt_da;
  Rng select_rng;    // stream "train/select"
  Rng negative_rng;  // stream "train/negative"
  Rng shuffle_rng;   // stream "train/shuffle"
  int epochs_done = 0;
};

TrainingState make_training_state(const TrainingConfig& config);

// A split's images preprocessed and held in memory (built for desk-scale
// corpora). Targets are cached for every product so they can serve as
// negatives and as the retrieval pool.
struct LoadedSplit {
  PairedDataset ds;
  Split split = Split::Train;
  std::vector<std::pair<int, int>> pairs;  // (group index, source index)
  std::vector<Tensor> sources;             // parallel to pairs
  std::vector<Tensor> targets;             // parallel to ds.groups
};

LoadedSplit load_split_images(const PairedDataset& ds, Split split);

// Builds the items for one batch: draws per-item tags and, when the mode
// uses them, fresh negatives.
std::vector<BatchItem> assemble_batch(TrainingState& st,
                                      const LoadedSplit& data,
                                      const std::vector<int>& pair_indices);

// One optimization step on one batch, in update order: real/fake
// discriminator, association discriminator, then the converter against the
// frozen discriminators. The converter's output is computed once with the
// current parameters and shared by all three updates. Throws
// std::runtime_error naming the step if a loss turns non-finite.
StepLosses run_batch(TrainingState& st, const std::vector<BatchItem>& items,
                     float lr);

// One pass over the training pairs: shuffles, walks full batches (an
// incomplete tail batch is dropped), and reports each step to `sink`.
void train_epoch(TrainingState& st, const LoadedSplit& data, int epoch,
                 const ReportSink& sink);

// Runs the remaining epochs of the schedule. `on_epoch_end` fires after
// each epoch (checkpointing hook).
void train(TrainingState& st, const LoadedSplit& data, const ReportSink& sink,
           const std::function<void(int)>& on_epoch_end = {});

}  // namespace pdt
