#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "imn/config.hpp"
#include "imn/dataset.hpp"
#include "imn/image_io.hpp"
#include "imn/serialization.hpp"
#include "imn/synthetic.hpp"

using namespace imn;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("imn_io_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

Image8 random_raster(std::size_t w, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image8 img{w, h, std::vector<std::uint8_t>(w * h * 3)};
  for (auto& b : img.rgb) b = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

ModelConfig small_config() {
  ModelConfig c;
  c.blocks = 2;
  c.growth = 4;
  return c;
}

}  // namespace

TEST(Png, RoundTripIsByteIdentical) {
  TempDir dir;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Image8 img = random_raster(17 + seed, 9 + 2 * seed, seed);
    save_png(dir / "a.png", img);
    EXPECT_EQ(load_png(dir / "a.png"), img);
  }
}

TEST(Png, TensorRoundTripIsExact) {
  const Image8 img = random_raster(8, 6, 3);
  EXPECT_EQ(to_image(to_tensor<float>(img)), img);
  EXPECT_EQ(to_image(to_tensor<double>(img)), img);
}

TEST(Png, MissingOrGarbageFile) {
  TempDir dir;
  EXPECT_THROW(load_png(dir / "missing.png"), IoError);
  std::ofstream(dir / "junk.png") << "definitely not a png";
  EXPECT_THROW(load_png(dir / "junk.png"), IoError);
}

TEST(Quantize, ClampScaleRoundHalfEven) {
  EXPECT_EQ(quantize_pixel(-0.3), 0);
  EXPECT_EQ(quantize_pixel(1.7), 255);
  EXPECT_EQ(quantize_pixel(0.5), 128);  // 127.5 rounds to even
  EXPECT_EQ(quantize_pixel(1.0), 255);
  EXPECT_EQ(quantize_pixel(100.0 / 255.0), 100);
  auto q = quantize(Tensor<float>({1, 1, 1, 3}, {0.1f, -2.0f, 0.999f}));
  EXPECT_FLOAT_EQ(q.values()[0], 26.0f / 255.0f);
  EXPECT_EQ(q.values()[1], 0.0f);
  EXPECT_EQ(q.values()[2], 1.0f);
  EXPECT_THROW(to_image(Tensor<float>::zeros({1, 1, 2, 2})), ShapeError);
}

TEST(Dataset, CenterCropAndResize) {
  Image8 wide = random_raster(10, 6, 1);
  Image8 sq = center_crop_square(wide);
  EXPECT_EQ(sq.width, 6u);
  EXPECT_EQ(sq.height, 6u);
  EXPECT_EQ(sq.rgb[0], wide.rgb[2 * 3]);
  // constant image stays constant under bilinear resize
  Image8 flat{5, 5, std::vector<std::uint8_t>(75, 51)};
  for (float v : resize_bilinear(flat, 8, 8)) EXPECT_FLOAT_EQ(v, 0.2f);
  auto t = preprocess(wide, 4);
  EXPECT_EQ(t.shape(), (Shape{1, 3, 4, 4}));
  auto same = preprocess(sq, 6);
  EXPECT_EQ(to_image(same), sq);
}

TEST(Dataset, ResizeAveragesNeighbours) {
  // 2x1 downsample of a 4x2 ramp hits pixel-centre midpoints
  Image8 img{4, 2, std::vector<std::uint8_t>(24, 0)};
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.rgb[(y * 4 + x) * 3 + c] = static_cast<std::uint8_t>(10 * x);
  auto out = resize_bilinear(img, 2, 1);
  EXPECT_NEAR(out[0], 5.0 / 255.0, 1e-6);
  EXPECT_NEAR(out[1], 25.0 / 255.0, 1e-6);
}

TEST(Dataset, LoadDirectorySorted) {
  TempDir dir;
  save_png(dir / "b.png", random_raster(8, 8, 2));
  save_png(dir / "a.png", random_raster(12, 8, 1));
  std::ofstream(dir / "notes.txt") << "ignored";
  auto set = load_image_dir(dir.path(), 4);
  ASSERT_EQ(set.size(), 2u);
  EXPECT_EQ(set.names[0], "a.png");
  EXPECT_EQ(set.images[1].shape(), (Shape{1, 3, 4, 4}));
  const std::size_t idx[] = {1, 0, 1};
  EXPECT_EQ(stack_images(set, idx).shape(), (Shape{3, 3, 4, 4}));
  auto native = load_image_dir(dir.path(), 0);
  EXPECT_EQ(native.images[0].shape(), (Shape{1, 3, 8, 12}));
  EXPECT_THROW(load_image_dir(dir / "nope", 4), IoError);
  EXPECT_THROW(load_image_dir(dir.path(), 5), ShapeError);
  save_png(dir / "c.png", random_raster(7, 8, 3));
  EXPECT_THROW(load_image_dir(dir.path(), 0), ShapeError);
}

TEST(Synthetic, DeterministicAndVaried) {
  EXPECT_EQ(synthetic_portrait(32, 5), synthetic_portrait(32, 5));
  EXPECT_NE(synthetic_portrait(32, 5), synthetic_portrait(32, 6));
  TempDir dir;
  write_synthetic_corpus(dir.path(), 3, 16, 1);
  auto files = list_png_files(dir.path());
  ASSERT_EQ(files.size(), 3u);
  EXPECT_EQ(files[0].filename().string(), "img_0000.png");
  EXPECT_EQ(load_png(files[2]).width, 16u);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  IMNModel<float> model(small_config());
  model.randomize(9);
  model.provenance() = Provenance{{1.0, 3.0, 1.0}, 1234, "synthetic-200"};
  save_checkpoint(dir / "m.imn", model);
  auto back = load_checkpoint(dir / "m.imn");
  EXPECT_EQ(back.config().blocks, 2u);
  EXPECT_EQ(back.config().growth, 4u);
  EXPECT_EQ(back.provenance(), model.provenance());
  const auto pa = model.parameters();
  const auto pb = back.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->name, pb[i]->name);
    ASSERT_EQ(pa[i]->tensor.numel(), pb[i]->tensor.numel());
    EXPECT_EQ(std::memcmp(pa[i]->tensor.data(), pb[i]->tensor.data(), 4 * pa[i]->tensor.numel()), 0);
  }
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(model));
}

TEST(Checkpoint, HeaderLayout) {
  IMNModel<float> model(small_config());
  const auto bytes = encode_checkpoint(model);
  ASSERT_GT(bytes.size(), 10u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "IMN1");
  EXPECT_EQ(bytes[4] | (bytes[5] << 8), 1);
  EXPECT_EQ(bytes[6], 2);  // block count, little-endian u32
}

TEST(Checkpoint, CorruptionIsDetected) {
  IMNModel<float> model(small_config());
  model.randomize(1);
  const auto good = encode_checkpoint(model);
  EXPECT_NO_THROW(decode_checkpoint<float>(good));

  auto flipped = good;
  flipped[flipped.size() / 2] ^= 0x10;
  EXPECT_THROW(decode_checkpoint<float>(flipped), CorruptFileError);

  auto magic = good;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint<float>(magic), CorruptFileError);

  auto truncated = good;
  truncated.resize(good.size() - 9);
  EXPECT_THROW(decode_checkpoint<float>(truncated), CorruptFileError);

  EXPECT_THROW(decode_checkpoint<float>({}), CorruptFileError);
  TempDir dir;
  EXPECT_THROW(load_checkpoint(dir / "absent.imn"), IoError);
}

TEST(Checkpoint, CrcMatchesKnownVector) {
  const char* s = "123456789";
  EXPECT_EQ(crc32_of(reinterpret_cast<const std::uint8_t*>(s), 9), 0xCBF43926u);
}

TEST(TensorFile, RoundTripAndSizeCheck) {
  TempDir dir;
  Tensor<float> t({1, 3, 2, 4}, std::vector<float>{1e10f, -3.5f, 0.f, 1.f, 2.f, 3.f, 4.f, 5.f, 6.f, 7.f, 8.f, 9.f,
                                                   10.f, 11.f, 12.f, 13.f, 14.f, 15.f, 16.f, 17.f, 18.f, 19.f, 20.f,
                                                   -1e-30f});
  save_tensor_file(dir / "m.bin", t);
  EXPECT_EQ(fs::file_size(dir / "m.bin"), 16u + 4u * 24u);
  auto back = load_tensor_file(dir / "m.bin");
  EXPECT_EQ(back.shape(), t.shape());
  EXPECT_EQ(std::memcmp(back.data(), t.data(), 4 * 24), 0);

  auto bytes = detail::read_file(dir / "m.bin");
  bytes.pop_back();
  detail::write_file(dir / "short.bin", bytes);
  EXPECT_THROW(load_tensor_file(dir / "short.bin"), IoError);
}

TEST(Config, DefaultsAndOverrides) {
  auto c = parse_train_config("# desk run\niterations = 10\n\nweights = 1:1:1\nloss = l1\n");
  EXPECT_EQ(c.iterations, 10u);
  EXPECT_EQ(c.batch_size, 16u);
  EXPECT_DOUBLE_EQ(c.learning_rate, 1e-5);
  EXPECT_EQ(c.lr_decay_interval, 1000u);
  EXPECT_EQ(c.image_size, 128u);
  EXPECT_EQ(c.weights, (LossWeights{1, 1, 1}));
  EXPECT_EQ(c.loss, Distance::AbsoluteError);
}

TEST(Config, TextRoundTrip) {
  TrainConfig c;
  c.learning_rate = 3.3e-4;
  c.seed = 77;
  c.dataset_dir = "/data/faces";
  c.weights = {1, 4, 1};
  auto back = parse_train_config(to_config_text(c));
  EXPECT_EQ(back.learning_rate, c.learning_rate);
  EXPECT_EQ(back.seed, 77u);
  EXPECT_EQ(back.dataset_dir, c.dataset_dir);
  EXPECT_EQ(back.weights, c.weights);
}

TEST(Config, ErrorsCarryLineNumbers) {
  try {
    parse_train_config("iterations = 10\nlearing_rate = 0.1\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("learing_rate"), std::string::npos);
  }
  EXPECT_THROW(parse_train_config("iterations = 10\niterations = 11\n"), ConfigError);
  EXPECT_THROW(parse_train_config("iterations 10\n"), ConfigError);
  EXPECT_THROW(parse_train_config("iterations = ten\n"), ConfigError);
  EXPECT_THROW(parse_train_config("image_size = 127\n"), ConfigError);
  EXPECT_THROW(parse_train_config("batch_size = 0\n"), ConfigError);
  EXPECT_THROW(parse_train_config("weights = 1:3\n"), ConfigError);
  EXPECT_THROW(parse_train_config("weights = 0:0:0\n"), ConfigError);
  EXPECT_THROW(parse_train_config("loss = huber\n"), ConfigError);
  EXPECT_THROW(parse_train_config("learning_rate = -1\n"), ConfigError);
}

TEST(Config, RatioList) {
  auto rs = parse_ratio_list("1:1:1, 1:2:1,1:3:1,1:4:1");
  ASSERT_EQ(rs.size(), 4u);
  EXPECT_EQ(rs[3], (LossWeights{1, 4, 1}));
  EXPECT_THROW(parse_ratio_list("1:1:1,"), ConfigError);
}

TEST(Config, LearningRateSchedule) {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.lr_decay_interval = 100;
  EXPECT_EQ(learning_rate_at(c, 0), 1e-3);
  EXPECT_EQ(learning_rate_at(c, 99), 1e-3);
  for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(learning_rate_at(c, k * 100), 1e-3 * std::pow(0.5, k));
}
