#include <doctest.h>

#include <filesystem>
#include <random>

#include "tt/models.hpp"

using namespace tt;

namespace {

// Symbolic per-layer parameter counters, written from the architecture plans
// alone (kernel_h * kernel_w * in_ch * out_ch + out_ch per conv, 2*ch per
// batch norm). Independent of the graph builders.

std::size_t conv_params(int k, int in, int out, bool bias) {
  return static_cast<std::size_t>(k) * k * in * out + (bias ? out : 0);
}

std::size_t unet_symbolic_params(const std::vector<int>& ch) {
  std::size_t total = 0;
  int prev = 1;
  for (std::size_t i = 0; i < ch.size(); ++i) {
    total += conv_params(3, prev, ch[i], true) + conv_params(3, ch[i], ch[i], true);
    prev = ch[i];
  }
  for (int i = static_cast<int>(ch.size()) - 2; i >= 0; --i) {
    total += conv_params(2, prev, ch[i], true);            // up-conv
    total += conv_params(3, 2 * ch[i], ch[i], true);       // after concat
    total += conv_params(3, ch[i], ch[i], true);
    prev = ch[i];
  }
  total += conv_params(1, prev, 1, true);
  return total;
}

std::size_t composite_params(int in, int growth) {
  return 2 * in                                    // bn1
         + conv_params(1, in, 4 * growth, false)   // bottleneck
         + 2 * (4 * growth)                        // bn2
         + conv_params(3, 4 * growth, growth, false);
}

std::size_t dense_unet_symbolic_params(const std::vector<int>& blocks, int growth,
                                       const std::vector<int>& up_growth) {
  std::size_t total = conv_params(7, 1, 64, false) + 2 * 64;  // stem
  int ch = 64;
  std::vector<int> block_out;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (int l = 0; l < blocks[b]; ++l) {
      total += composite_params(ch, growth);
      ch += growth;
    }
    block_out.push_back(ch);
    if (b + 1 < blocks.size()) {
      total += 2 * ch + conv_params(1, ch, ch / 2, false);  // transition
      ch /= 2;
    }
  }
  total += 2 * ch;  // final encoder bn
  const std::vector<int> skip_ch = {block_out[2], block_out[1], block_out[0], 64, 64};
  const std::vector<bool> has_skip = {true, true, true, true, false};
  for (int s = 0; s < 5; ++s) {
    total += conv_params(2, ch, skip_ch[s], true);  // up-conv
    ch = has_skip[s] ? 2 * skip_ch[s] : skip_ch[s];
    total += composite_params(ch, up_growth[s]);
    ch += up_growth[s];
  }
  total += conv_params(1, ch, 1, true);
  return total;
}

Heatmap random_frame(int size, unsigned seed) {
  Heatmap f(size, size);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : f.values) v = u(rng);
  return f;
}

}  // namespace

TEST_CASE("unet parameter count matches the symbolic counter") {
  ModelSpec spec;
  spec.arch = Arch::unet;
  auto model = build_unet(spec);
  CHECK(model->graph.param_count() == unet_symbolic_params(spec.unet_channels));

  ModelSpec small = spec;
  small.unet_channels = {8, 16, 32};
  small.input_size = 32;
  auto m2 = build_unet(small);
  CHECK(m2->graph.param_count() == unet_symbolic_params(small.unet_channels));
}

TEST_CASE("dense unet parameter count matches the symbolic counter") {
  ModelSpec spec;
  spec.arch = Arch::dense_unet;
  auto model = build_dense_unet(spec);
  CHECK(model->graph.param_count() ==
        dense_unet_symbolic_params(spec.densenet_block_sizes, spec.densenet_growth,
                                   spec.up_growth_rates));
}

TEST_CASE("unet has fewer parameters than dense unet under default specs") {
  ModelSpec u;
  u.arch = Arch::unet;
  ModelSpec d;
  d.arch = Arch::dense_unet;
  CHECK(build_unet(u)->graph.param_count() < build_dense_unet(d)->graph.param_count());
}

TEST_CASE("unet emits full-resolution sigmoid output") {
  for (int size : {32, 64}) {
    ModelSpec spec;
    spec.arch = Arch::unet;
    spec.input_size = size;
    spec.unet_channels = {8, 16, 32};  // small but same shape contract
    auto model = build_unet(spec);
    const Heatmap out = predict_heatmap(*model, random_frame(size, 5));
    CHECK(out.width == size);
    CHECK(out.height == size);
    for (float v : out.values) {
      CHECK(v > 0.0f);
      CHECK(v < 1.0f);
    }
  }
}

TEST_CASE("dense unet emits full-resolution sigmoid output") {
  ModelSpec spec;
  spec.arch = Arch::dense_unet;
  spec.input_size = 32;
  spec.densenet_block_sizes = {2, 2, 2, 2};  // shrunk blocks, same topology
  auto model = build_dense_unet(spec);
  const Heatmap out = predict_heatmap(*model, random_frame(32, 6));
  CHECK(out.width == 32);
  CHECK(out.height == 32);
  for (float v : out.values) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("builders reject incompatible input sizes") {
  ModelSpec u;
  u.arch = Arch::unet;
  u.input_size = 100;  // not divisible by 16
  CHECK_THROWS(build_unet(u));
  ModelSpec d;
  d.arch = Arch::dense_unet;
  d.input_size = 48;  // not divisible by 32
  CHECK_THROWS(build_dense_unet(d));
}

TEST_CASE("inference is deterministic") {
  ModelSpec spec;
  spec.arch = Arch::unet;
  spec.input_size = 32;
  spec.unet_channels = {8, 16};
  auto model = build_unet(spec);
  const Heatmap f = random_frame(32, 7);
  const Heatmap a = predict_heatmap(*model, f);
  const Heatmap b = predict_heatmap(*model, f);
  for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == b.values[i]);
}

TEST_CASE("predict_heatmap rejects wrong frame size") {
  ModelSpec spec;
  spec.arch = Arch::unet;
  spec.input_size = 32;
  spec.unet_channels = {8, 16};
  auto model = build_unet(spec);
  CHECK_THROWS(predict_heatmap(*model, random_frame(64, 8)));
}

TEST_CASE("checkpoint round-trip reproduces predictions bitwise") {
  ModelSpec spec;
  spec.arch = Arch::unet;
  spec.input_size = 32;
  spec.unet_channels = {8, 16, 32};
  spec.init_seed = 42;
  auto model = build_unet(spec);
  const Heatmap f = random_frame(32, 9);
  const Heatmap before = predict_heatmap(*model, f);

  const auto dir = std::filesystem::temp_directory_path() / "tt_ckpt_test";
  std::filesystem::create_directories(dir);
  TrainingMeta meta;
  meta.loss_kind = "compound";
  meta.epochs = 3;
  meta.best_epoch = 2;
  meta.best_val_loss = -0.5;
  save_checkpoint(*model, meta, (dir / "ckpt").string());

  TrainingMeta back;
  auto loaded = load_checkpoint((dir / "ckpt").string(), &back);
  CHECK(back.loss_kind == "compound");
  CHECK(back.best_epoch == 2);
  const Heatmap after = predict_heatmap(*loaded, f);
  for (std::size_t i = 0; i < before.values.size(); ++i)
    CHECK(before.values[i] == after.values[i]);
}

TEST_CASE("checkpoint with batchnorm buffers round-trips") {
  ModelSpec spec;
  spec.arch = Arch::dense_unet;
  spec.input_size = 32;
  spec.densenet_block_sizes = {1, 1, 1, 1};
  auto model = build_dense_unet(spec);
  const Heatmap f = random_frame(32, 10);
  const Heatmap before = predict_heatmap(*model, f);
  const auto dir = std::filesystem::temp_directory_path() / "tt_ckpt_test";
  std::filesystem::create_directories(dir);
  save_checkpoint(*model, TrainingMeta{}, (dir / "dense").string());
  auto loaded = load_checkpoint((dir / "dense").string());
  const Heatmap after = predict_heatmap(*loaded, f);
  for (std::size_t i = 0; i < before.values.size(); ++i)
    CHECK(before.values[i] == after.values[i]);
}
