#include "pdt/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "pdt/common.hpp"
#include "pdt/ops.hpp"

namespace pdt {

namespace {

void require_image_pair(const Tensor& a, const Tensor& b, const char* who) {
  if (!a.defined() || !b.defined())
    throw std::invalid_argument(std::string(who) + ": undefined image");
  if (a.shape().size() != 3)
    throw std::invalid_argument(std::string(who) +
                                ": expected a [C,H,W] image");
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

// Normalized Gaussian taps for one window axis.
const std::vector<double>& gaussian_taps() {
  static const std::vector<double> taps = [] {
    std::vector<double> t(kSsimWindow);
    const double c = (kSsimWindow - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
      t[std::size_t(i)] =
          std::exp(-(i - c) * (i - c) / (2.0 * kSsimSigma * kSsimSigma));
      sum += t[std::size_t(i)];
    }
    for (double& v : t) v /= sum;
    return t;
  }();
  return taps;
}

}  // namespace

double rmse(const Tensor& a, const Tensor& b) {
  require_image_pair(a, b, "rmse");
  const float* ap = a.data();
  const float* bp = b.data();
  const std::int64_t n = a.numel();
  double sum = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    // Both images map to [0,1] as (v+1)/2, so the difference halves.
    const double d = (double(ap[i]) - double(bp[i])) / 2.0;
    sum += d * d;
  }
  return std::sqrt(sum / double(n));
}

double color_ssim(const Tensor& a, const Tensor& b) {
  require_image_pair(a, b, "color_ssim");
  const int channels = int(a.shape()[0]);
  const int height = int(a.shape()[1]);
  const int width = int(a.shape()[2]);
  if (channels != 3)
    throw std::invalid_argument("color_ssim: expected a 3-channel image");
  if (height < kSsimWindow || width < kSsimWindow)
    throw std::invalid_argument(
        "color_ssim: image smaller than the " + std::to_string(kSsimWindow) +
        "x" + std::to_string(kSsimWindow) + " window");

  const std::vector<double>& taps = gaussian_taps();
  const double c1 = (kSsimK1 * kSsimRange) * (kSsimK1 * kSsimRange);
  const double c2 = (kSsimK2 * kSsimRange) * (kSsimK2 * kSsimRange);
  const int out_h = height - kSsimWindow + 1;
  const int out_w = width - kSsimWindow + 1;

  // Per channel: five windowed moments via the separable Gaussian, then the
  // similarity map over valid windows only.
  const std::size_t plane = std::size_t(height) * std::size_t(width);
  std::vector<double> xa(plane), xb(plane);
  std::vector<double> row_a(std::size_t(height) * std::size_t(out_w));
  std::vector<double> row_b(row_a.size()), row_aa(row_a.size()),
      row_bb(row_a.size()), row_ab(row_a.size());

  double channel_sum = 0.0;
  for (int ch = 0; ch < channels; ++ch) {
    const float* ap = a.data() + std::size_t(ch) * plane;
    const float* bp = b.data() + std::size_t(ch) * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      xa[i] = (double(ap[i]) + 1.0) / 2.0;
      xb[i] = (double(bp[i]) + 1.0) / 2.0;
    }

    // Horizontal pass over every row, then vertical pass over columns.
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < out_w; ++x) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        const std::size_t base = std::size_t(y) * std::size_t(width) +
                                 std::size_t(x);
        for (int k = 0; k < kSsimWindow; ++k) {
          const double va = xa[base + std::size_t(k)];
          const double vb = xb[base + std::size_t(k)];
          const double w = taps[std::size_t(k)];
          sa += w * va;
          sb += w * vb;
          saa += w * va * va;
          sbb += w * vb * vb;
          sab += w * va * vb;
        }
        const std::size_t o = std::size_t(y) * std::size_t(out_w) +
                              std::size_t(x);
        row_a[o] = sa;
        row_b[o] = sb;
        row_aa[o] = saa;
        row_bb[o] = sbb;
        row_ab[o] = sab;
      }
    }

    double map_sum = 0.0;
    for (int y = 0; y < out_h; ++y) {
      for (int x = 0; x < out_w; ++x) {
        double mu_a = 0, mu_b = 0, raw_aa = 0, raw_bb = 0, raw_ab = 0;
        const std::size_t base = std::size_t(y) * std::size_t(out_w) +
                                 std::size_t(x);
        for (int k = 0; k < kSsimWindow; ++k) {
          const std::size_t o = base + std::size_t(k) * std::size_t(out_w);
          const double w = taps[std::size_t(k)];
          mu_a += w * row_a[o];
          mu_b += w * row_b[o];
          raw_aa += w * row_aa[o];
          raw_bb += w * row_bb[o];
          raw_ab += w * row_ab[o];
        }
        const double var_a = raw_aa - mu_a * mu_a;
        const double var_b = raw_bb - mu_b * mu_b;
        const double cov = raw_ab - mu_a * mu_b;
        map_sum += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                   ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      }
    }
    channel_sum += map_sum / (double(out_h) * double(out_w));
  }
  return channel_sum / double(channels);
}

std::string MetricReport::to_text() const {
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  std::string s = "# idx\tproduct\trmse\tc_ssim\n";
  for (std::size_t i = 0; i < images.size(); ++i)
    s += std::to_string(i) + "\t" + images[i].product_id + "\t" +
         num(images[i].rmse) + "\t" + num(images[i].c_ssim) + "\n";
  s += "# images\t" + std::to_string(images.size()) + "\n";
  s += "# mode\t" + mode + "\n";
  s += "# split\t" + split + "\n";
  s += "# mean_rmse\t" + num(mean_rmse) + "\n";
  s += "# mean_c_ssim\t" + num(mean_c_ssim) + "\n";
  s += "# ssim_params\twindow=" + std::to_string(kSsimWindow) +
       "\tsigma=" + num(kSsimSigma) + "\tk1=" + num(kSsimK1) +
       "\tk2=" + num(kSsimK2) + "\trange=" + num(kSsimRange) + "\n";
  return s;
}

MetricReport evaluate_generated(const GenerateFn& generate,
                                const LoadedSplit& data,
                                const std::string& mode_label) {
  if (data.pairs.empty())
    throw std::invalid_argument("evaluate: the split holds no pairs");
  MetricReport rep;
  rep.mode = mode_label;
  rep.split = split_name(data.split);

  const int n = int(data.pairs.size());
  const int chunk = 16;
  double sum_rmse = 0.0, sum_ssim = 0.0;
  for (int start = 0; start < n; start += chunk) {
    const int count = std::min(chunk, n - start);
    std::vector<Tensor> rows;
    rows.reserve(std::size_t(count));
    for (int i = 0; i < count; ++i)
      rows.push_back(data.sources[std::size_t(start + i)]);
    Tensor generated = generate(stack_items(rows));
    for (int i = 0; i < count; ++i) {
      const int gi = data.pairs[std::size_t(start + i)].first;
      const Tensor& truth = data.targets[std::size_t(gi)];
      ImageMetrics m;
      m.product_id = data.ds.groups[std::size_t(gi)].product_id;
      Tensor output = slice_item(generated, i);
      m.rmse = rmse(output, truth);
      m.c_ssim = color_ssim(output, truth);
      sum_rmse += m.rmse;
      sum_ssim += m.c_ssim;
      rep.images.push_back(std::move(m));
    }
  }
  rep.mean_rmse = sum_rmse / double(n);
  rep.mean_c_ssim = sum_ssim / double(n);
  return rep;
}

MetricReport evaluate_converter(Converter<float>& converter,
                                const LoadedSplit& data,
                                const std::string& mode_label) {
  return evaluate_generated(
      [&converter](const Tensor& batch) {
        return convert(converter, batch, Mode::Eval);
      },
      data, mode_label);
}

std::string dd_retrieve_scored(const PairScoreFn& score, const Tensor& source,
                               const std::vector<std::string>& ids,
                               const std::vector<Tensor>& targets) {
  if (ids.empty() || ids.size() != targets.size())
    throw std::invalid_argument(
        "dd_retrieve: candidate ids and targets must be nonempty and "
        "parallel");
  const std::vector<double> scores = score(source, targets);
  if (scores.size() != ids.size())
    throw std::logic_error("dd_retrieve: scorer returned a short list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < ids.size(); ++i) {
    if (scores[i] > scores[best] ||
        (scores[i] == scores[best] && ids[i] < ids[best]))
      best = i;
  }
  return ids[best];
}

namespace {

// Scores (source, target) candidates through the discriminator in chunks:
// inference-mode results are per-item, so chunking cannot change them.
PairScoreFn discriminator_scorer(Network<float>& disc) {
  return [&disc](const Tensor& source, const std::vector<Tensor>& targets) {
    std::vector<double> scores;
    scores.reserve(targets.size());
    const int n = int(targets.size());
    const int chunk = 32;
    for (int start = 0; start < n; start += chunk) {
      const int count = std::min(chunk, n - start);
      std::vector<Tensor> src_rows(std::size_t(count), source);
      std::vector<Tensor> tgt_rows(targets.begin() + start,
                                   targets.begin() + start + count);
      Tensor p = discriminate_domain(disc, stack_items(src_rows),
                                     stack_items(tgt_rows), Mode::Eval);
      for (int i = 0; i < count; ++i) scores.push_back(double(p.data()[i]));
    }
    return scores;
  };
}

}  // namespace

std::string dd_retrieve(Network<float>& disc, const Tensor& source,
                        const std::vector<std::string>& ids,
                        const std::vector<Tensor>& targets) {
  return dd_retrieve_scored(discriminator_scorer(disc), source, ids, targets);
}

double retrieval_accuracy_scored(const PairScoreFn& score,
                                 const LoadedSplit& data) {
  if (data.pairs.empty())
    throw std::invalid_argument("retrieval: the split holds no pairs");
  if (data.ds.groups.empty())
    throw std::invalid_argument("retrieval: no candidate products");
  std::vector<std::string> ids;
  ids.reserve(data.ds.groups.size());
  for (const ProductGroup& g : data.ds.groups) ids.push_back(g.product_id);

  int hits = 0;
  for (std::size_t pi = 0; pi < data.pairs.size(); ++pi) {
    const std::string won =
        dd_retrieve_scored(score, data.sources[pi], ids, data.targets);
    hits += won ==
            data.ds.groups[std::size_t(data.pairs[pi].first)].product_id;
  }
  return double(hits) / double(data.pairs.size());
}

double retrieval_accuracy(Network<float>& disc, const LoadedSplit& data) {
  return retrieval_accuracy_scored(discriminator_scorer(disc), data);
}

}  // namespace pdt
