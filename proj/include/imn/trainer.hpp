#pragma once

// End-to-end training, evaluation and the loss-weight sweep.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "imn/config.hpp"
#include "imn/dataset.hpp"
#include "imn/image_io.hpp"
#include "imn/losses.hpp"
#include "imn/metrics.hpp"
#include "imn/network.hpp"
#include "imn/optim.hpp"

namespace imn {

struct TrainRecord {
  std::size_t iteration = 0;  // 1-based step number
  LossReport loss;
  double psnr_mask = 0.0;  // PSNR(mask, masked) on the batch
  double psnr_rec = 0.0;   // PSNR(protected, recovered from sampled noise)
};

struct TrainLog {
  std::vector<TrainRecord> records;

  static constexpr const char* kCsvHeader = "iteration,loss_total,loss_emb,loss_rec,loss_lf,psnr_mask,psnr_rec";

  std::string to_csv() const {
    std::ostringstream out;
    out << kCsvHeader << "\n";
    out << std::setprecision(9);
    const auto num = [&](double v) -> std::ostream& {
      if (std::isinf(v)) return out << (v > 0 ? "inf" : "-inf");
      return out << v;
    };
    for (const auto& r : records) {
      out << r.iteration << ',';
      num(r.loss.total) << ',';
      num(r.loss.embedding) << ',';
      num(r.loss.recovering) << ',';
      num(r.loss.low_frequency) << ',';
      num(r.psnr_mask) << ',';
      num(r.psnr_rec) << '\n';
    }
    return out.str();
  }

  void write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write train log " + path.string());
    out << to_csv();
  }
};

struct TrainHooks {
  /// Called every checkpoint_interval steps and after the final step.
  std::function<void(std::size_t iteration, const IMNModel<float>&)> on_checkpoint;
  std::function<void(const TrainRecord&)> on_record;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined key
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <class Fn>
auto guarded(const char* what, std::size_t iteration, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    throw TrainingError(std::string("non-finite ") + what + " at iteration " + std::to_string(iteration) + " (" +
                        e.what() + ")");
  }
}

}  // namespace detail

/// Noise seed used for the auxiliary input of training step `step`.
inline std::uint64_t step_noise_seed(std::uint64_t seed, std::size_t step) {
  return detail::mix_seed(seed, 2 * static_cast<std::uint64_t>(step) + 1);
}

/// Noise seed used for pair `index` during evaluation.
inline std::uint64_t pair_noise_seed(std::uint64_t seed, std::size_t index) {
  return detail::mix_seed(seed, 2 * static_cast<std::uint64_t>(index));
}

/// Trains `model` in place on `data`. Each epoch shuffles the corpus and cuts
/// it into disjoint (protected, mask) batch pairs.
inline TrainLog train_in_place(const TrainConfig& config, IMNModel<float>& model, const ImageSet& data,
                               const TrainHooks& hooks = {}) {
  config.validate();
  const std::size_t per_step = 2 * config.batch_size;
  if (data.size() < per_step)
    throw TrainingError("dataset holds " + std::to_string(data.size()) + " images, a step needs " +
                        std::to_string(per_step));
  for (const auto& img : data.images)
    if (img.shape() != data.images.front().shape())
      throw TrainingError("dataset images must share one shape");

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t steps_per_epoch = data.size() / per_step;

  const auto params = model.parameters();
  Adam<float> opt(params);
  TrainLog log;
  const std::uint64_t prior_iterations = model.provenance().iterations;
  const auto stamp = [&](std::size_t done) {
    auto& prov = model.provenance();
    prov.lambdas = {config.weights.lambda1, config.weights.lambda2, config.weights.lambda3};
    prov.iterations = prior_iterations + done;
    if (prov.dataset_tag.empty()) prov.dataset_tag = config.dataset_dir.filename().string();
  };
  log.records.reserve(config.iterations);

  for (std::size_t step = 0; step < config.iterations; ++step) {
    const std::size_t slot = step % steps_per_epoch;
    if (slot == 0) std::shuffle(order.begin(), order.end(), rng);
    const std::span<const std::size_t> chosen(order.data() + slot * per_step, per_step);
    const Tensor<float> x_protected = stack_images(data, chosen.first(config.batch_size));
    const Tensor<float> x_mask = stack_images(data, chosen.last(config.batch_size));
    const std::size_t it = step + 1;

    auto masked = detail::guarded("activation in the embedding pass", it,
                                  [&] { return put_on_mask(x_protected, x_mask, model); });
    const Tensor<float> noise = sample_aux<float>(x_protected.shape(), step_noise_seed(config.seed, step));
    auto recovered = detail::guarded("activation in the recovering pass", it,
                                     [&] { return put_off_mask(masked.masked, noise, model); });

    auto emb = detail::guarded("embedding loss", it, [&] { return embedding_loss(x_mask, masked.masked, config.loss); });
    auto rec = detail::guarded("recovering loss", it,
                               [&] { return recovering_loss(x_protected, recovered.recovered, config.loss); });
    auto lf = detail::guarded("low-frequency loss", it,
                              [&] { return low_frequency_loss(x_mask, masked.masked, config.loss); });
    auto total = detail::guarded("total loss", it, [&] { return total_loss(emb, rec, lf, config.weights); });

    opt.zero_grad();
    detail::guarded("gradient", it, [&] {
      backward(total.total);
      if (config.grad_clip > 0.0) clip_grad_norm<float>(params, config.grad_clip);
      opt.step(learning_rate_at(config, step));
      return 0;
    });

    TrainRecord record{it, total.report, mean_psnr(x_mask, masked.masked),
                       mean_psnr(x_protected, recovered.recovered)};
    log.records.push_back(record);
    if (hooks.on_record) hooks.on_record(record);
    if (hooks.on_checkpoint && (it % config.checkpoint_interval == 0 || it == config.iterations)) {
      stamp(it);
      hooks.on_checkpoint(it, model);
    }
  }

  stamp(config.iterations);
  model.zero_grad();
  return log;
}

inline std::pair<IMNModel<float>, TrainLog> train(const TrainConfig& config, IMNModel<float> model,
                                                  const ImageSet& data, const TrainHooks& hooks = {}) {
  TrainLog log = train_in_place(config, model, data, hooks);
  return {std::move(model), std::move(log)};
}

/// Loads config.dataset_dir at config.image_size and trains on it.
inline std::pair<IMNModel<float>, TrainLog> train(const TrainConfig& config, IMNModel<float> model,
                                                  const TrainHooks& hooks = {}) {
  config.validate();
  const ImageSet data = load_image_dir(config.dataset_dir, config.image_size);
  return train(config, std::move(model), data, hooks);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct PairEvaluation {
  std::string protected_name;
  std::string mask_name;
  MetricReport recovered;  // (protected, recovered) on float outputs
  MetricReport masked;     // (mask, masked) on float outputs
  MetricReport recovered_8bit;  // masked image and recovery quantized to 8 bits
  MetricReport masked_8bit;
};

struct EvaluationReport {
  std::vector<PairEvaluation> pairs;
  MetricReport recovered_mean;
  MetricReport masked_mean;
  MetricReport recovered_8bit_mean;
  MetricReport masked_8bit_mean;
};

/// Evaluates consecutive pairs (2i protected, 2i+1 mask) of `data`. Recovery
/// uses auxiliary noise seeded by pair_noise_seed(seed, i).
inline EvaluationReport evaluate(const IMNModel<float>& model, const ImageSet& data, std::uint64_t seed) {
  if (data.size() < 2) throw TrainingError("evaluation needs at least two images");
  NoGradGuard no_grad;
  EvaluationReport report;
  for (std::size_t i = 0; 2 * i + 1 < data.size(); ++i) {
    const Tensor<float>& x_protected = data.images[2 * i];
    const Tensor<float>& x_mask = data.images[2 * i + 1];
    const auto on = put_on_mask(x_protected, x_mask, model);
    const Tensor<float> noise = sample_aux<float>(x_protected.shape(), pair_noise_seed(seed, i));
    const auto off = put_off_mask(on.masked, noise, model);

    const Tensor<float> masked_q = quantize(on.masked);
    const auto off_q = put_off_mask(masked_q, noise, model);

    PairEvaluation pe;
    pe.protected_name = data.names[2 * i];
    pe.mask_name = data.names[2 * i + 1];
    pe.recovered = compute_metrics(x_protected, off.recovered);
    pe.masked = compute_metrics(x_mask, on.masked);
    pe.recovered_8bit = compute_metrics(x_protected, quantize(off_q.recovered));
    pe.masked_8bit = compute_metrics(x_mask, masked_q);
    report.pairs.push_back(std::move(pe));
  }
  const auto collect = [&](MetricReport PairEvaluation::*field) {
    std::vector<MetricReport> v;
    for (const auto& p : report.pairs) v.push_back(p.*field);
    return average(v);
  };
  report.recovered_mean = collect(&PairEvaluation::recovered);
  report.masked_mean = collect(&PairEvaluation::masked);
  report.recovered_8bit_mean = collect(&PairEvaluation::recovered_8bit);
  report.masked_8bit_mean = collect(&PairEvaluation::masked_8bit);
  return report;
}

/// `image_size` 0 keeps native (even) image dimensions.
inline EvaluationReport evaluate(const IMNModel<float>& model, const std::filesystem::path& dataset_dir,
                                 std::uint64_t seed, std::size_t image_size = 0) {
  return evaluate(model, load_image_dir(dataset_dir, image_size), seed);
}

// ---------------------------------------------------------------------------
// Loss-weight sweep
// ---------------------------------------------------------------------------

struct DatasetSplit {
  ImageSet train;
  ImageSet held_out;
};

/// Seeded random split; the held-out part has an even size of at least 2.
inline DatasetSplit split_dataset(const ImageSet& data, std::size_t held_out, std::uint64_t seed) {
  held_out = std::max<std::size_t>(2, held_out - held_out % 2);
  if (held_out >= data.size()) throw TrainingError("dataset too small to hold out " + std::to_string(held_out) + " images");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(detail::mix_seed(seed, 0xC0FFEE));
  std::shuffle(order.begin(), order.end(), rng);
  DatasetSplit split;
  for (std::size_t k = 0; k < order.size(); ++k) {
    ImageSet& dst = k < held_out ? split.held_out : split.train;
    dst.names.push_back(data.names[order[k]]);
    dst.images.push_back(data.images[order[k]]);
  }
  return split;
}

struct SweepReport {
  std::vector<LossWeights> ratios;
  std::vector<MetricReport> recovered;  // (protected, recovered-with-noise), held-out mean
  std::vector<MetricReport> masked;     // (mask, masked), held-out mean
  std::vector<TrainLog> logs;

  /// Rows PSNR / SSIM / RMSE / MAE, one column per ratio (recovered face).
  std::string table() const {
    std::ostringstream out;
    out << std::fixed;
    out << std::left << std::setw(8) << "l1:l2:l3";
    for (const auto& r : ratios) out << " | " << std::setw(8) << r.str();
    out << "\n";
    const auto row = [&](const char* name, double MetricReport::*f, int prec) {
      out << std::left << std::setw(8) << name << std::setprecision(prec);
      for (const auto& m : recovered) out << " | " << std::setw(8) << m.*f;
      out << "\n";
    };
    row("PSNR", &MetricReport::psnr, 2);
    row("SSIM", &MetricReport::ssim, 3);
    row("RMSE", &MetricReport::rmse, 3);
    row("MAE", &MetricReport::mae, 3);
    return out.str();
  }
};

/// Trains one freshly initialized model per ratio on the same split and seed,
/// then evaluates each on the held-out images.
inline SweepReport sweep_lambda(const TrainConfig& base, std::span<const LossWeights> ratios,
                                const ModelConfig& model_config, const ImageSet& data, std::size_t held_out,
                                const TrainHooks& hooks = {}) {
  if (ratios.empty()) throw TrainingError("sweep needs at least one ratio");
  const DatasetSplit split = split_dataset(data, held_out, base.seed);
  SweepReport report;
  for (const auto& ratio : ratios) {
    TrainConfig cfg = base;
    cfg.weights = ratio;
    auto [model, log] = train(cfg, IMNModel<float>(model_config), split.train, hooks);
    const EvaluationReport ev = evaluate(model, split.held_out, base.seed);
    report.ratios.push_back(ratio);
    report.recovered.push_back(ev.recovered_mean);
    report.masked.push_back(ev.masked_mean);
    report.logs.push_back(std::move(log));
  }
  return report;
}

/// Holds out a fifth of config.dataset_dir (at least two images).
inline SweepReport sweep_lambda(const TrainConfig& base, std::span<const LossWeights> ratios,
                                const ModelConfig& model_config, const TrainHooks& hooks = {}) {
  base.validate();
  const ImageSet data = load_image_dir(base.dataset_dir, base.image_size);
  return sweep_lambda(base, ratios, model_config, data, data.size() / 5, hooks);
}

}  // namespace imn
