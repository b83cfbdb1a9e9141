#include "pdt/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "pdt/ops.hpp"

namespace pdt {

const char* training_mode_name(TrainingMode mode) {
  switch (mode) {
    case TrainingMode::C_RF: return "rf";
    case TrainingMode::C_MSE: return "mse";
    case TrainingMode::C_RF_DD: return "rf_dd";
    case TrainingMode::C_RF_DD_NONEG: return "rf_dd_noneg";
  }
  return "?";
}

TrainingMode parse_training_mode(const std::string& name) {
  if (name == "rf") return TrainingMode::C_RF;
  if (name == "mse") return TrainingMode::C_MSE;
  if (name == "rf_dd") return TrainingMode::C_RF_DD;
  if (name == "rf_dd_noneg") return TrainingMode::C_RF_DD_NONEG;
  throw std::invalid_argument("unknown training mode '" + name +
                              "' (expected rf, mse, rf_dd or rf_dd_noneg)");
}

const char* target_tag_name(TargetTag tag) {
  switch (tag) {
    case TargetTag::Gt: return "gt";
    case TargetTag::Gen: return "gen";
    case TargetTag::Neg: return "neg";
  }
  return "?";
}

void TrainingConfig::validate() const {
  if (batch_size < 1)
    throw std::invalid_argument("batch_size must be at least 1");
  if (!(lr > 0.0f) || !std::isfinite(lr))
    throw std::invalid_argument("lr must be positive");
  if (!(lr_after_drop > 0.0f) || lr_after_drop > lr)
    throw std::invalid_argument("lr_after_drop must satisfy 0 < value <= lr");
  if (total_epochs < 1)
    throw std::invalid_argument("total_epochs must be at least 1");
  if (lr_drop_epoch < 0)
    throw std::invalid_argument("lr_drop_epoch must be non-negative");
  if (!(momentum >= 0.0f) || momentum >= 1.0f)
    throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(width > 0.0))
    throw std::invalid_argument("width multiplier must be positive");
}

TargetTag select_target(Rng& rng, TrainingMode mode) {
  switch (mode) {
    case TrainingMode::C_RF:
    case TrainingMode::C_MSE:
      return TargetTag::Gen;  // no pairwise selection in these modes
    case TrainingMode::C_RF_DD:
      switch (rng.next_below(3)) {
        case 0: return TargetTag::Gt;
        case 1: return TargetTag::Gen;
        default: return TargetTag::Neg;
      }
    case TrainingMode::C_RF_DD_NONEG:
      return rng.next_below(2) == 0 ? TargetTag::Gt : TargetTag::Gen;
  }
  throw std::logic_error("unreachable training mode");
}

float lr_schedule(int epoch, const TrainingConfig& config) {
  if (epoch < 1 || epoch > config.total_epochs)
    throw std::invalid_argument("epoch " + std::to_string(epoch) +
                                " outside schedule of " +
                                std::to_string(config.total_epochs));
  return epoch <= config.lr_drop_epoch ? config.lr : config.lr_after_drop;
}

namespace {

void append_number(std::string* out, double v) {
  if (!std::isfinite(v)) {
    *out += "null";
    return;
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  *out += buf;
}

}  // namespace

std::string LossReport::to_json() const {
  std::string s = "{\"epoch\":" + std::to_string(epoch) +
                  ",\"step\":" + std::to_string(step) + ",\"loss_rf\":";
  append_number(&s, losses.rf);
  s += ",\"loss_da\":";
  append_number(&s, losses.da);
  s += ",\"loss_conv\":";
  append_number(&s, losses.conv);
  s += ",\"lr\":";
  append_number(&s, double(lr));
  s += "}";
  return s;
}

TrainingState make_training_state(const TrainingConfig& config) {
  config.validate();
  TrainingState st;
  st.config = config;
  st.converter = make_converter<float>(config.width, config.seed);
  st.disc_rf =
      make_network<float>(NetworkKind::DiscRealFake, config.width, config.seed);
  st.disc_da =
      make_network<float>(NetworkKind::DiscDomain, config.width, config.seed);

  auto make_opt = [&config](std::vector<std::pair<std::string, Tensor>> params) {
    std::unique_ptr<Optimizer<float>> opt;
    if (config.use_adam)
      opt = std::make_unique<Adam<float>>(config.momentum);
    else
      opt = std::make_unique<SgdMomentum<float>>(config.momentum);
    opt->add_parameters(params);
    return opt;
  };
  auto conv_params = st.converter.encoder.learnable_parameters();
  auto dec_params = st.converter.decoder.learnable_parameters();
  conv_params.insert(conv_params.end(), dec_params.begin(), dec_params.end());
  st.opt_conv = make_opt(std::move(conv_params));
  st.opt_rf = make_opt(st.disc_rf.learnable_parameters());
  st.opt_da = make_opt(st.disc_da.learnable_parameters());

  st.select_rng = Rng::stream(config.seed, "train/select");
  st.negative_rng = Rng::stream(config.seed, "train/negative");
  st.shuffle_rng = Rng::stream(config.seed, "train/shuffle");
  return st;
}

LoadedSplit load_split_images(const PairedDataset& ds, Split split) {
  LoadedSplit out;
  out.ds = ds;
  out.split = split;
  out.targets.reserve(ds.groups.size());
  for (const ProductGroup& g : ds.groups)
    out.targets.push_back(load_image_tensor(g.target_path));
  for (int gi : ds.group_indices(split)) {
    const ProductGroup& g = ds.groups[std::size_t(gi)];
    for (int si = 0; si < int(g.source_paths.size()); ++si) {
      out.pairs.emplace_back(gi, si);
      out.sources.push_back(
          load_image_tensor(g.source_paths[std::size_t(si)]));
    }
  }
  return out;
}

std::vector<BatchItem> assemble_batch(TrainingState& st,
                                      const LoadedSplit& data,
                                      const std::vector<int>& pair_indices) {
  std::vector<BatchItem> items;
  items.reserve(pair_indices.size());
  for (int pi : pair_indices) {
    if (pi < 0 || pi >= int(data.pairs.size()))
      throw std::out_of_range("pair index " + std::to_string(pi) +
                              " outside the loaded split");
    const auto [gi, si] = data.pairs[std::size_t(pi)];
    (void)si;
    BatchItem item;
    item.source = data.sources[std::size_t(pi)];
    item.target = data.targets[std::size_t(gi)];
    item.tag = select_target(st.select_rng, st.config.mode);
    if (st.config.mode == TrainingMode::C_RF_DD) {
      // Fresh negative per item per batch, independent of the tag draw.
      const ProductGroup& neg = sample_negative_group(
          data.ds, data.ds.groups[std::size_t(gi)].product_id,
          st.negative_rng);
      const auto ni = &neg - data.ds.groups.data();
      item.negative = data.targets[std::size_t(ni)];
    }
    items.push_back(std::move(item));
  }
  return items;
}

namespace {

double finite_or_throw(double v, const char* step) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string("non-finite loss in the ") + step);
  return v;
}

}  // namespace

StepLosses run_batch(TrainingState& st, const std::vector<BatchItem>& items,
                     float lr) {
  const TrainingMode mode = st.config.mode;
  const int n = int(items.size());
  if (n == 0) throw std::invalid_argument("run_batch: empty batch");
  const float nanv = std::nanf("");
  StepLosses out{nanv, nanv, nanv};

  std::vector<Tensor> source_rows;
  source_rows.reserve(std::size_t(n));
  for (const BatchItem& item : items) source_rows.push_back(item.source);
  Tensor sources = stack_items(source_rows);

  if (mode == TrainingMode::C_MSE) {
    // Plain regression: converter update only.
    std::vector<Tensor> gt_rows;
    gt_rows.reserve(std::size_t(n));
    for (const BatchItem& item : items) gt_rows.push_back(item.target);
    Tape<float> tape;
    Tensor generated = convert(st.converter, sources, Mode::Train, &tape);
    Tensor loss = mse_loss(generated, stack_items(gt_rows), &tape);
    out.conv = finite_or_throw(loss.item(), "converter update");
    tape.backward(loss);
    st.opt_conv->ensure_grads();
    st.opt_conv->step(lr);
    st.opt_conv->zero_grad();
    return out;
  }

  const bool domain = mode == TrainingMode::C_RF_DD ||
                      mode == TrainingMode::C_RF_DD_NONEG;

  // The converter output is computed once with the current parameters; its
  // values (detached) feed both discriminator updates, and the recorded
  // graph drives the converter update afterwards.
  Tape<float> conv_tape;
  Tensor generated = convert(st.converter, sources, Mode::Train, &conv_tape);
  Tensor generated_const = generated.clone();

  // Selected target per item: the real/fake label is 1 for real photographs
  // (ground truth and negatives alike), the association label is 1 only for
  // the genuine pair.
  std::vector<Tensor> selected_rows(static_cast<std::size_t>(n));
  std::vector<bool> use_generated(std::size_t(n), false);
  std::vector<float> t_rf(std::size_t(n), 0.0f), t_da(std::size_t(n), 0.0f);
  for (int i = 0; i < n; ++i) {
    switch (items[std::size_t(i)].tag) {
      case TargetTag::Gt:
        selected_rows[std::size_t(i)] = items[std::size_t(i)].target;
        t_rf[std::size_t(i)] = 1.0f;
        t_da[std::size_t(i)] = 1.0f;
        break;
      case TargetTag::Neg:
        if (!items[std::size_t(i)].negative.defined())
          throw std::invalid_argument(
              "batch item selected a negative but none was sampled");
        selected_rows[std::size_t(i)] = items[std::size_t(i)].negative;
        t_rf[std::size_t(i)] = 1.0f;
        break;
      case TargetTag::Gen:
        selected_rows[std::size_t(i)] = slice_item(generated_const, i);
        use_generated[std::size_t(i)] = true;
        break;
    }
  }
  Tensor selected_const = stack_items(selected_rows);
  Tensor rf_labels = Tensor::from({n}, t_rf);
  Tensor da_labels = Tensor::from({n}, t_da);

  // (1) Real/fake discriminator over the selected targets.
  {
    Tape<float> tape;
    Tensor p =
        discriminate_real_fake(st.disc_rf, selected_const, Mode::Train, &tape);
    Tensor loss =
        mean_all(binary_cross_entropy(p, rf_labels, &tape), &tape);
    out.rf = finite_or_throw(loss.item(), "real/fake discriminator update");
    tape.backward(loss);
    st.opt_rf->ensure_grads();
    st.opt_rf->step(lr);
    st.opt_rf->zero_grad();
  }

  // (2) Association discriminator over (source, selected target) pairs.
  if (domain) {
    Tape<float> tape;
    Tensor p = discriminate_domain(st.disc_da, sources, selected_const,
                                   Mode::Train, &tape);
    Tensor loss =
        mean_all(binary_cross_entropy(p, da_labels, &tape), &tape);
    out.da =
        finite_or_throw(loss.item(), "association discriminator update");
    tape.backward(loss);
    st.opt_da->ensure_grads();
    st.opt_da->step(lr);
    st.opt_da->zero_grad();
  }

  // (3) Converter against the frozen, just-updated discriminators.
  // Gradients flow only through the generated rows of the selected batch.
  {
    st.disc_rf.set_requires_grad(false);
    if (domain) st.disc_da.set_requires_grad(false);

    std::vector<float> t_rf_c = t_rf, t_da_c = t_da;
    if (st.config.non_saturating) {
      // Generated rows pose as real / genuine and the sign flips below.
      for (int i = 0; i < n; ++i)
        if (use_generated[std::size_t(i)]) {
          t_rf_c[std::size_t(i)] = 1.0f;
          t_da_c[std::size_t(i)] = 1.0f;
        }
    }
    const float half = st.config.non_saturating ? 0.5f : -0.5f;

    Tensor composed =
        compose_batch(generated, selected_rows, use_generated, &conv_tape);
    Tensor p_r = discriminate_real_fake(st.disc_rf, composed, Mode::Train,
                                        &conv_tape);
    Tensor term_r = mean_all(
        binary_cross_entropy(p_r, Tensor::from({n}, t_rf_c), &conv_tape),
        &conv_tape);
    Tensor objective;
    if (domain) {
      Tensor p_a = discriminate_domain(st.disc_da, sources, composed,
                                       Mode::Train, &conv_tape);
      Tensor term_a = mean_all(
          binary_cross_entropy(p_a, Tensor::from({n}, t_da_c), &conv_tape),
          &conv_tape);
      objective = add(scale(term_r, half, &conv_tape),
                      scale(term_a, half, &conv_tape), &conv_tape);
    } else {
      objective = scale(term_r, half, &conv_tape);
    }
    out.conv = finite_or_throw(objective.item(), "converter update");
    conv_tape.backward(objective);
    st.opt_conv->ensure_grads();
    st.opt_conv->step(lr);
    st.opt_conv->zero_grad();

    st.disc_rf.set_requires_grad(true);
    if (domain) st.disc_da.set_requires_grad(true);
  }
  return out;
}

void train_epoch(TrainingState& st, const LoadedSplit& data, int epoch,
                 const ReportSink& sink) {
  st.config.validate();
  const int n = int(data.pairs.size());
  if (n == 0)
    throw std::invalid_argument("train_epoch: the training split is empty");
  const float lr = lr_schedule(epoch, st.config);

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(order[std::size_t(i)],
              order[std::size_t(
                  st.shuffle_rng.next_below(std::uint64_t(i) + 1))]);

  const int B = st.config.batch_size;
  int step = 0;
  for (int start = 0; start + B <= n; start += B) {
    std::vector<int> batch(order.begin() + start, order.begin() + start + B);
    std::vector<BatchItem> items = assemble_batch(st, data, batch);
    StepLosses losses;
    try {
      losses = run_batch(st, items, lr);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(std::string(e.what()) + " (epoch " +
                               std::to_string(epoch) + ", step " +
                               std::to_string(step + 1) + ")");
    }
    ++step;
    if (sink) sink(LossReport{epoch, step, losses, lr});
  }
}

void train(TrainingState& st, const LoadedSplit& data, const ReportSink& sink,
           const std::function<void(int)>& on_epoch_end) {
  for (int epoch = st.epochs_done + 1; epoch <= st.config.total_epochs;
       ++epoch) {
    train_epoch(st, data, epoch, sink);
    st.epochs_done = epoch;
    if (on_epoch_end) on_epoch_end(epoch);
  }
}

}  // namespace pdt
