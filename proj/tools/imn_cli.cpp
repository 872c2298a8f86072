// imn: conceal a protected image inside a mask image, reveal it again, and
// train / evaluate the network that does both.
//
// Exit codes: 0 success, 1 other failure, 2 dimension mismatch,
// 3 unreadable input, 4 corrupt checkpoint, 5 malformed config.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "imn/imn.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kDimension = 2,
  kUnreadable = 3,
  kCorruptCheckpoint = 4,
  kBadConfig = 5,
};

std::string format_metrics(const imn::Tensor<float>& reference, const imn::Tensor<float>& candidate) {
  const imn::Shape& s = reference.shape();
  char buf[160];
  if (s.height < imn::SsimParams{}.window || s.width < imn::SsimParams{}.window) {
    const double psnr = imn::mean_psnr(reference, candidate);
    std::snprintf(buf, sizeof(buf), "PSNR = %.2f dB  SSIM = n/a", psnr);
    return buf;
  }
  const imn::MetricReport m = imn::compute_metrics(reference, candidate);
  std::snprintf(buf, sizeof(buf), "PSNR = %.2f dB  SSIM = %.4f  RMSE = %.3f  MAE = %.3f", m.psnr, m.ssim, m.rmse,
                m.mae);
  return buf;
}

void require_rgb_model(const imn::IMNModel<float>& model) {
  if (model.image_channels() != 3)
    throw imn::ShapeError("model expects " + std::to_string(model.image_channels()) +
                          "-channel images; PNG input is RGB");
}

imn::IMNModel<float> load_model(const fs::path& path) {
  if (!fs::exists(path)) throw imn::IoError("checkpoint not found: " + path.string());
  return imn::load_checkpoint<float>(path);
}

struct ModelFlags {
  std::size_t blocks = 8;
  std::size_t growth = imn::DenseBlock<float>::kDefaultGrowth;
  double clamp = imn::CouplingBlock<float>::kDefaultClamp;
  std::uint64_t init_seed = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--blocks", blocks, "Number of coupling blocks")->check(CLI::Range(1, 32));
    cmd->add_option("--growth", growth, "Dense-block growth channels")->check(CLI::PositiveNumber);
    cmd->add_option("--clamp", clamp, "Scale clamp c")->check(CLI::PositiveNumber);
    cmd->add_option("--init-seed", init_seed, "Seed for weight initialization");
  }

  imn::ModelConfig config() const {
    imn::ModelConfig c;
    c.blocks = blocks;
    c.growth = growth;
    c.clamp = clamp;
    c.init_seed = init_seed;
    c.image_channels = 3;
    return c;
  }
};

void print_report(const imn::EvaluationReport& r) {
  std::printf("%-20s %-20s %10s %8s %10s %8s\n", "protected", "mask", "PSNR(rec)", "SSIM", "PSNR(mask)", "SSIM");
  for (const auto& p : r.pairs)
    std::printf("%-20s %-20s %10.2f %8.4f %10.2f %8.4f\n", p.protected_name.c_str(), p.mask_name.c_str(),
                p.recovered.psnr, p.recovered.ssim, p.masked.psnr, p.masked.ssim);
  const auto line = [](const char* label, const imn::MetricReport& m) {
    std::printf("%-28s PSNR %7.2f dB  SSIM %.4f  RMSE %7.3f  MAE %7.3f\n", label, m.psnr, m.ssim, m.rmse, m.mae);
  };
  line("mean (protected, recovered)", r.recovered_mean);
  line("mean (mask, masked)", r.masked_mean);
  line("8-bit (protected, recovered)", r.recovered_8bit_mean);
  line("8-bit (mask, masked)", r.masked_8bit_mean);
}

void write_report_csv(const fs::path& path, const imn::EvaluationReport& r) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw imn::IoError("cannot write " + path.string());
  out << "protected,mask,psnr_rec,ssim_rec,rmse_rec,mae_rec,psnr_mask,ssim_mask,rmse_mask,mae_mask,"
         "psnr_rec_8bit,psnr_mask_8bit\n";
  for (const auto& p : r.pairs)
    out << p.protected_name << ',' << p.mask_name << ',' << p.recovered.psnr << ',' << p.recovered.ssim << ','
        << p.recovered.rmse << ',' << p.recovered.mae << ',' << p.masked.psnr << ',' << p.masked.ssim << ','
        << p.masked.rmse << ',' << p.masked.mae << ',' << p.recovered_8bit.psnr << ',' << p.masked_8bit.psnr << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Invertible masking network: conceal, reveal, train, evaluate"};
  app.require_subcommand(1);

  // init
  auto* init = app.add_subcommand("init", "Write a freshly initialized (identity) model");
  fs::path init_out;
  double init_gain = 0.0;
  ModelFlags init_flags;
  init->add_option("--out", init_out, "Checkpoint to write")->required();
  init->add_option("--random-gain", init_gain, "Randomize every layer (He-normal times this gain) instead");
  init_flags.attach(init);

  // conceal
  auto* conceal = app.add_subcommand("conceal", "Embed a protected image into a mask image");
  fs::path c_model, c_protected, c_mask, c_out, c_lost;
  conceal->add_option("--model", c_model)->required();
  conceal->add_option("--protected", c_protected)->required();
  conceal->add_option("--mask", c_mask)->required();
  conceal->add_option("--out", c_out, "Masked PNG to write")->required();
  conceal->add_option("--save-lost", c_lost, "Write the lost information as a raw float tensor");

  // reveal
  auto* reveal = app.add_subcommand("reveal", "Recover the protected image from a masked image");
  fs::path r_model, r_masked, r_out, r_lost, r_rmask, r_reference;
  std::uint64_t r_seed = 0;
  reveal->add_option("--model", r_model)->required();
  reveal->add_option("--masked", r_masked)->required();
  reveal->add_option("--out", r_out, "Recovered PNG to write")->required();
  auto* lost_opt = reveal->add_option("--lost", r_lost, "Stored lost information (exact recovery)");
  auto* seed_opt = reveal->add_option("--seed", r_seed, "Seed for sampled auxiliary noise");
  lost_opt->excludes(seed_opt);
  seed_opt->excludes(lost_opt);
  reveal->add_option("--out-rmask", r_rmask, "Also write the recovered mask image");
  reveal->add_option("--reference", r_reference, "Protected image to compare against");

  // train
  auto* trn = app.add_subcommand("train", "Train a model from a config file");
  fs::path t_config, t_out = "model.imn", t_log = "train_log.csv", t_init;
  std::size_t t_print = 10;
  ModelFlags t_flags;
  trn->add_option("--config", t_config)->required();
  trn->add_option("--out", t_out, "Checkpoint to write");
  trn->add_option("--log", t_log, "CSV training log");
  trn->add_option("--init", t_init, "Start from this checkpoint instead of a fresh model");
  trn->add_option("--print-every", t_print, "Progress line interval (0 = silent)");
  t_flags.attach(trn);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Metrics for consecutive (protected, mask) pairs of a folder");
  fs::path e_model, e_data, e_csv;
  std::uint64_t e_seed = 0;
  std::size_t e_size = 0;
  ev->add_option("--model", e_model)->required();
  ev->add_option("--data", e_data)->required();
  ev->add_option("--seed", e_seed)->required();
  ev->add_option("--size", e_size, "Crop+resize to this size (0 = native)");
  ev->add_option("--csv", e_csv, "Per-pair CSV output");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Train and evaluate one model per loss-weight ratio");
  fs::path s_config;
  std::string s_ratios = "1:1:1,1:2:1,1:3:1,1:4:1";
  std::size_t s_holdout = 0;
  ModelFlags s_flags;
  sw->add_option("--config", s_config)->required();
  sw->add_option("--ratios", s_ratios, "Comma separated l1:l2:l3 ratios");
  sw->add_option("--holdout", s_holdout, "Held-out image count (default: a fifth)");
  s_flags.attach(sw);

  // synth
  auto* syn = app.add_subcommand("synth", "Write a procedural portrait corpus");
  fs::path y_out;
  std::size_t y_count = 200, y_size = 128;
  std::uint64_t y_seed = 0;
  syn->add_option("--out", y_out)->required();
  syn->add_option("--count", y_count);
  syn->add_option("--size", y_size);
  syn->add_option("--seed", y_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*init) {
      imn::IMNModel<float> model(init_flags.config());
      if (init_gain > 0.0) model.randomize(init_flags.init_seed, init_gain);
      imn::save_checkpoint(init_out, model);
      std::printf("wrote %s (%zu blocks, %zu parameters)\n", init_out.c_str(), model.block_count(),
                  model.parameter_count());
    } else if (*conceal) {
      imn::NoGradGuard no_grad;
      const auto model = load_model(c_model);
      require_rgb_model(model);
      const auto x_protected = imn::to_tensor<float>(imn::load_png(c_protected));
      const auto x_mask = imn::to_tensor<float>(imn::load_png(c_mask));
      const auto result = imn::put_on_mask(x_protected, x_mask, model);
      const imn::Image8 masked = imn::to_image(result.masked);
      imn::save_png(c_out, masked);
      if (!c_lost.empty()) imn::save_tensor_file(c_lost, result.lost);
      std::printf("(mask, masked) %s\n", format_metrics(x_mask, imn::to_tensor<float>(masked)).c_str());
    } else if (*reveal) {
      if (r_lost.empty() && seed_opt->count() == 0)
        throw CLI::ValidationError("reveal", "exactly one of --lost or --seed is required");
      imn::NoGradGuard no_grad;
      const auto model = load_model(r_model);
      require_rgb_model(model);
      const auto x_masked = imn::to_tensor<float>(imn::load_png(r_masked));
      imn::Tensor<float> aux;
      if (!r_lost.empty()) {
        aux = imn::load_tensor_file<float>(r_lost);
        if (aux.shape() != x_masked.shape())
          throw imn::ShapeError("lost tensor shape " + aux.shape().str() + " does not match masked image " +
                                x_masked.shape().str());
      } else {
        aux = imn::sample_aux<float>(x_masked.shape(), r_seed);
      }
      const auto result = imn::put_off_mask(x_masked, aux, model);
      const imn::Image8 recovered = imn::to_image(result.recovered);
      imn::save_png(r_out, recovered);
      if (!r_rmask.empty()) imn::save_png(r_rmask, imn::to_image(result.r_mask));
      if (!r_reference.empty()) {
        const auto ref = imn::to_tensor<float>(imn::load_png(r_reference));
        std::printf("(protected, recovered) %s\n", format_metrics(ref, imn::to_tensor<float>(recovered)).c_str());
      }
    } else if (*trn) {
      const imn::TrainConfig cfg = imn::load_train_config(t_config);
      imn::IMNModel<float> model = t_init.empty() ? imn::IMNModel<float>(t_flags.config()) : load_model(t_init);
      require_rgb_model(model);
      imn::TrainHooks hooks;
      hooks.on_checkpoint = [&](std::size_t, const imn::IMNModel<float>& m) { imn::save_checkpoint(t_out, m); };
      if (t_print > 0)
        hooks.on_record = [&](const imn::TrainRecord& r) {
          if (r.iteration % t_print == 0 || r.iteration == 1)
            std::printf("iter %6zu  loss %.6g (emb %.3g rec %.3g lf %.3g)  psnr_mask %.2f  psnr_rec %.2f\n",
                        r.iteration, r.loss.total, r.loss.embedding, r.loss.recovering, r.loss.low_frequency,
                        r.psnr_mask, r.psnr_rec);
          std::fflush(stdout);
        };
      auto [trained, log] = imn::train(cfg, std::move(model), hooks);
      imn::save_checkpoint(t_out, trained);
      log.write_csv(t_log);
      std::printf("wrote %s and %s\n", t_out.c_str(), t_log.c_str());
    } else if (*ev) {
      const auto model = load_model(e_model);
      const auto report = imn::evaluate(model, e_data, e_seed, e_size);
      print_report(report);
      if (!e_csv.empty()) write_report_csv(e_csv, report);
    } else if (*sw) {
      const imn::TrainConfig cfg = imn::load_train_config(s_config);
      const auto ratios = imn::parse_ratio_list(s_ratios);
      const imn::ImageSet data = imn::load_image_dir(cfg.dataset_dir, cfg.image_size);
      const std::size_t holdout = s_holdout ? s_holdout : data.size() / 5;
      const auto report = imn::sweep_lambda(cfg, ratios, s_flags.config(), data, holdout);
      std::printf("%s", report.table().c_str());
    } else if (*syn) {
      imn::write_synthetic_corpus(y_out, y_count, y_size, y_seed);
      std::printf("wrote %zu images to %s\n", y_count, y_out.c_str());
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const imn::ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kDimension;
  } catch (const imn::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUnreadable;
  } catch (const imn::CorruptFileError& e) {
    std::fprintf(stderr, "error: corrupt checkpoint: %s\n", e.what());
    return kCorruptCheckpoint;
  } catch (const imn::ConfigError& e) {
    std::fprintf(stderr, "error: config: %s\n", e.what());
    return kBadConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kOk;
}
