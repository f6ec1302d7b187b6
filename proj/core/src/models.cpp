#include "tt/models.hpp"

#include <cstdint>
#include <fstream>

#include <json.hpp>

namespace tt {

using nn::AvgPool;
using nn::BatchNorm2d;
using nn::Concat;
using nn::Conv2d;
using nn::Deconv2x2;
using nn::MaxPool;
using nn::ReLU;
using nn::Sigmoid;

std::string arch_name(Arch arch) { return arch == Arch::unet ? "unet" : "dense_unet"; }

Arch arch_from_name(const std::string& name) {
  if (name == "unet") return Arch::unet;
  if (name == "dense_unet") return Arch::dense_unet;
  throw std::invalid_argument("unknown architecture: " + name);
}

namespace {

int add_conv_relu(nn::Graph& g, const std::string& name, int node, int in_ch, int out_ch,
                  std::mt19937& rng) {
  node = g.add(std::make_unique<Conv2d>(name, in_ch, out_ch, 3, 1, 1, rng), {node});
  return g.add(std::make_unique<ReLU>(), {node});
}

// DenseNet composite: BN + ReLU + 1x1 conv (bottleneck, 4*growth) + BN + ReLU
// + 3x3 conv (growth), concatenated onto the block input.
int add_composite(nn::Graph& g, const std::string& name, int node, int in_ch, int growth,
                  std::mt19937& rng) {
  int t = g.add(std::make_unique<BatchNorm2d>(name + ".bn1", in_ch), {node});
  t = g.add(std::make_unique<ReLU>(), {t});
  t = g.add(std::make_unique<Conv2d>(name + ".conv1", in_ch, 4 * growth, 1, 1, 0, rng, false),
            {t});
  t = g.add(std::make_unique<BatchNorm2d>(name + ".bn2", 4 * growth), {t});
  t = g.add(std::make_unique<ReLU>(), {t});
  t = g.add(std::make_unique<Conv2d>(name + ".conv2", 4 * growth, growth, 3, 1, 1, rng, false),
            {t});
  return g.add(std::make_unique<Concat>(), {node, t});
}

}  // namespace

std::unique_ptr<Model> build_unet(const ModelSpec& spec) {
  if (spec.arch != Arch::unet) throw std::invalid_argument("build_unet: spec.arch != unet");
  const auto& ch = spec.unet_channels;
  if (ch.size() < 2) throw std::invalid_argument("build_unet: need at least 2 levels");
  const int pools = static_cast<int>(ch.size()) - 1;
  if (spec.input_size <= 0 || spec.input_size % (1 << pools) != 0)
    throw std::invalid_argument("build_unet: input size must be divisible by " +
                                std::to_string(1 << pools));
  for (int c : ch)
    if (c <= 0) throw std::invalid_argument("build_unet: non-positive channel count");

  auto model = std::make_unique<Model>();
  model->spec = spec;
  nn::Graph& g = model->graph;
  std::mt19937 rng(spec.init_seed);

  int node = g.input_node();
  int prev_ch = 1;
  std::vector<int> skips;
  for (std::size_t i = 0; i < ch.size(); ++i) {
    const std::string base = "enc" + std::to_string(i);
    node = add_conv_relu(g, base + ".conv1", node, prev_ch, ch[i], rng);
    node = add_conv_relu(g, base + ".conv2", node, ch[i], ch[i], rng);
    prev_ch = ch[i];
    if (i + 1 < ch.size()) {
      skips.push_back(node);
      node = g.add(std::make_unique<MaxPool>(2, 2, 0), {node});
    }
  }
  for (int i = static_cast<int>(ch.size()) - 2; i >= 0; --i) {
    const std::string base = "dec" + std::to_string(i);
    node = g.add(std::make_unique<Deconv2x2>(base + ".up", prev_ch, ch[i], rng), {node});
    node = g.add(std::make_unique<Concat>(), {node, skips[i]});
    node = add_conv_relu(g, base + ".conv1", node, 2 * ch[i], ch[i], rng);
    node = add_conv_relu(g, base + ".conv2", node, ch[i], ch[i], rng);
    prev_ch = ch[i];
  }
  node = g.add(std::make_unique<Conv2d>("head.conv", prev_ch, 1, 1, 1, 0, rng), {node});
  g.add(std::make_unique<Sigmoid>(), {node});
  return model;
}

std::unique_ptr<Model> build_dense_unet(const ModelSpec& spec) {
  if (spec.arch != Arch::dense_unet)
    throw std::invalid_argument("build_dense_unet: spec.arch != dense_unet");
  if (spec.input_size <= 0 || spec.input_size % 32 != 0)
    throw std::invalid_argument("build_dense_unet: input size must be divisible by 32");
  if (spec.densenet_block_sizes.size() != 4 || spec.up_growth_rates.size() != 5)
    throw std::invalid_argument("build_dense_unet: expect 4 dense blocks and 5 up stages");

  auto model = std::make_unique<Model>();
  model->spec = spec;
  nn::Graph& g = model->graph;
  std::mt19937 rng(spec.init_seed);
  const int growth = spec.densenet_growth;

  // Stem rebuilt for single-channel input.
  int node = g.add(std::make_unique<Conv2d>("stem.conv", 1, 64, 7, 2, 3, rng, false),
                   {g.input_node()});
  node = g.add(std::make_unique<BatchNorm2d>("stem.bn", 64), {node});
  node = g.add(std::make_unique<ReLU>(), {node});
  const int stem_skip = node;  // input_size / 2, 64 channels
  node = g.add(std::make_unique<MaxPool>(3, 2, 1), {node});

  int cur_ch = 64;
  std::vector<int> block_skips;
  std::vector<int> block_channels;
  for (std::size_t b = 0; b < spec.densenet_block_sizes.size(); ++b) {
    for (int l = 0; l < spec.densenet_block_sizes[b]; ++l) {
      node = add_composite(g, "enc.block" + std::to_string(b) + ".layer" + std::to_string(l),
                           node, cur_ch, growth, rng);
      cur_ch += growth;
    }
    if (b + 1 < spec.densenet_block_sizes.size()) {
      block_skips.push_back(node);
      block_channels.push_back(cur_ch);
      const std::string tn = "enc.trans" + std::to_string(b);
      node = g.add(std::make_unique<BatchNorm2d>(tn + ".bn", cur_ch), {node});
      node = g.add(std::make_unique<ReLU>(), {node});
      cur_ch /= 2;
      node = g.add(std::make_unique<Conv2d>(tn + ".conv", cur_ch * 2, cur_ch, 1, 1, 0, rng,
                                            false),
                   {node});
      node = g.add(std::make_unique<AvgPool>(2, 2), {node});
    }
  }
  node = g.add(std::make_unique<BatchNorm2d>("enc.final_bn", cur_ch), {node});
  node = g.add(std::make_unique<ReLU>(), {node});

  // Five decoder stages; skips attach where encoder resolution matches, with
  // the stem output as the shallowest skip and none at full resolution.
  std::vector<int> skip_nodes = {block_skips[2], block_skips[1], block_skips[0], stem_skip, -1};
  std::vector<int> skip_channels = {block_channels[2], block_channels[1], block_channels[0], 64,
                                    64};
  for (int s = 0; s < 5; ++s) {
    const std::string base = "dec" + std::to_string(s);
    node = g.add(std::make_unique<Deconv2x2>(base + ".up", cur_ch, skip_channels[s], rng),
                 {node});
    cur_ch = skip_channels[s];
    if (skip_nodes[s] >= 0) {
      node = g.add(std::make_unique<Concat>(), {node, skip_nodes[s]});
      cur_ch *= 2;
    }
    node = add_composite(g, base + ".dense", node, cur_ch, spec.up_growth_rates[s], rng);
    cur_ch += spec.up_growth_rates[s];
  }
  node = g.add(std::make_unique<Conv2d>("head.conv", cur_ch, 1, 1, 1, 0, rng), {node});
  g.add(std::make_unique<Sigmoid>(), {node});
  return model;
}

std::unique_ptr<Model> build_model(const ModelSpec& spec) {
  return spec.arch == Arch::unet ? build_unet(spec) : build_dense_unet(spec);
}

Heatmap predict_heatmap(Model& model, const Heatmap& frame) {
  const int n = model.spec.input_size;
  if (frame.width != n || frame.height != n)
    throw std::invalid_argument("predict_heatmap: frame must be " + std::to_string(n) + "x" +
                                std::to_string(n));
  Tensor x({1, 1, n, n});
  std::copy(frame.values.begin(), frame.values.end(), x.data());
  const Tensor& y = model.graph.forward(x, /*train=*/false);
  Heatmap out(n, n);
  std::copy(y.data(), y.data() + y.size(), out.values.begin());
  return out;
}

namespace {

constexpr char kMagic[] = "TTWEIGHTS1";

nlohmann::json spec_to_json(const ModelSpec& s) {
  return {{"arch", arch_name(s.arch)},
          {"input_size", s.input_size},
          {"unet_channels", s.unet_channels},
          {"densenet_block_sizes", s.densenet_block_sizes},
          {"densenet_growth", s.densenet_growth},
          {"up_growth_rates", s.up_growth_rates},
          {"init_seed", s.init_seed}};
}

ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.arch = arch_from_name(j.at("arch").get<std::string>());
  s.input_size = j.at("input_size").get<int>();
  s.unet_channels = j.at("unet_channels").get<std::vector<int>>();
  s.densenet_block_sizes = j.at("densenet_block_sizes").get<std::vector<int>>();
  s.densenet_growth = j.at("densenet_growth").get<int>();
  s.up_growth_rates = j.at("up_growth_rates").get<std::vector<int>>();
  s.init_seed = j.at("init_seed").get<unsigned>();
  return s;
}

std::vector<nn::Param*> all_tensors(Model& model) {
  auto out = model.graph.params();
  for (auto* b : model.graph.buffers()) out.push_back(b);
  return out;
}

}  // namespace

void save_checkpoint(Model& model, const TrainingMeta& meta, const std::string& base_path) {
  std::ofstream f(base_path + ".weights", std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + base_path + ".weights");
  f.write(kMagic, sizeof(kMagic) - 1);
  auto tensors = all_tensors(model);
  const std::uint32_t count = static_cast<std::uint32_t>(tensors.size());
  f.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (nn::Param* p : tensors) {
    const std::uint32_t name_len = static_cast<std::uint32_t>(p->name.size());
    f.write(reinterpret_cast<const char*>(&name_len), sizeof(name_len));
    f.write(p->name.data(), name_len);
    const std::uint32_t ndim = static_cast<std::uint32_t>(p->value.shape().size());
    f.write(reinterpret_cast<const char*>(&ndim), sizeof(ndim));
    for (int d : p->value.shape()) {
      const std::int32_t d32 = d;
      f.write(reinterpret_cast<const char*>(&d32), sizeof(d32));
    }
    f.write(reinterpret_cast<const char*>(p->value.data()),
            static_cast<std::streamsize>(p->value.size() * sizeof(float)));
  }

  nlohmann::json j{
      {"spec", spec_to_json(model.spec)},
      {"preprocessing",
       {{"input_size", model.spec.input_size}, {"normalization", "grayscale [0,1]"}}},
      {"training_meta",
       {{"loss_kind", meta.loss_kind},
        {"lambda", meta.lambda},
        {"epsilon", meta.epsilon},
        {"epochs", meta.epochs},
        {"best_epoch", meta.best_epoch},
        {"best_val_loss", meta.best_val_loss}}}};
  std::ofstream jf(base_path + ".json");
  if (!jf) throw std::runtime_error("cannot write " + base_path + ".json");
  jf << j.dump(2) << "\n";
}

std::unique_ptr<Model> load_checkpoint(const std::string& base_path, TrainingMeta* meta) {
  std::ifstream jf(base_path + ".json");
  if (!jf) throw std::runtime_error("cannot open " + base_path + ".json");
  nlohmann::json j;
  jf >> j;
  auto model = build_model(spec_from_json(j.at("spec")));
  if (meta) {
    const auto& m = j.at("training_meta");
    meta->loss_kind = m.value("loss_kind", "");
    meta->lambda = m.value("lambda", 5.0);
    meta->epsilon = m.value("epsilon", 1.0);
    meta->epochs = m.value("epochs", 0);
    meta->best_epoch = m.value("best_epoch", -1);
    meta->best_val_loss = m.value("best_val_loss", 0.0);
  }

  std::ifstream f(base_path + ".weights", std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + base_path + ".weights");
  char magic[sizeof(kMagic) - 1];
  f.read(magic, sizeof(magic));
  if (!f || std::string(magic, sizeof(magic)) != kMagic)
    throw std::runtime_error("bad checkpoint magic in " + base_path + ".weights");
  std::uint32_t count = 0;
  f.read(reinterpret_cast<char*>(&count), sizeof(count));
  auto tensors = all_tensors(*model);
  if (count != tensors.size())
    throw std::runtime_error("checkpoint tensor count mismatch (spec vs weights)");
  for (nn::Param* p : tensors) {
    std::uint32_t name_len = 0;
    f.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    if (name != p->name)
      throw std::runtime_error("checkpoint tensor order mismatch: expected " + p->name +
                               ", got " + name);
    std::uint32_t ndim = 0;
    f.read(reinterpret_cast<char*>(&ndim), sizeof(ndim));
    std::vector<int> shape(ndim);
    for (auto& d : shape) {
      std::int32_t d32 = 0;
      f.read(reinterpret_cast<char*>(&d32), sizeof(d32));
      d = d32;
    }
    if (shape != p->value.shape())
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    f.read(reinterpret_cast<char*>(p->value.data()),
           static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    if (!f) throw std::runtime_error("truncated checkpoint " + base_path + ".weights");
  }
  return model;
}

}  // namespace tt
