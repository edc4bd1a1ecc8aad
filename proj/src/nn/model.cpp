#include "spermflow/model.hpp"

#include <cmath>
#include <stdexcept>

#include "spermflow/errors.hpp"

namespace spermflow::nn {

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::ResNet34: return "resnet34";
    case Variant::ResNet18: return "resnet18";
    case Variant::Tiny: return "tiny";
  }
  return "?";
}

std::string to_string(Head head) { return head == Head::M1 ? "M1" : "M2"; }

Variant parse_variant(std::string_view text) {
  if (text == "resnet34") return Variant::ResNet34;
  if (text == "resnet18") return Variant::ResNet18;
  if (text == "tiny") return Variant::Tiny;
  throw InputError("unknown model variant '" + std::string(text) + "'");
}

Head parse_head(std::string_view text) {
  if (text == "M1" || text == "m1") return Head::M1;
  if (text == "M2" || text == "m2") return Head::M2;
  throw InputError("unknown head '" + std::string(text) + "' (expected M1 or M2)");
}

void ModelConfig::validate() const {
  if (in_channels < 1) throw InputError("in_channels must be >= 1");
  if (num_outputs != 3) throw InputError("num_outputs must be 3");
  if (mlp_widths.size() != dropout_probs.size()) {
    throw InputError("mlp_widths and dropout_probs must have the same length");
  }
  for (int w : mlp_widths) {
    if (w < 1) throw InputError("mlp widths must be positive");
  }
  for (double p : dropout_probs) {
    if (!(p >= 0.0 && p < 1.0)) throw InputError("dropout probabilities must lie in [0, 1)");
  }
}

StageLayout stage_layout(Variant variant) {
  switch (variant) {
    case Variant::ResNet34: return {{3, 4, 6, 3}, {64, 128, 256, 512}};
    case Variant::ResNet18: return {{2, 2, 2, 2}, {64, 128, 256, 512}};
    case Variant::Tiny: return {{1, 1}, {8, 16}};
  }
  throw InputError("unknown model variant");
}

namespace {

template <typename T>
BasicTensor<T> he_normal(Shape shape, std::int64_t fan_out, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_out)));
  BasicTensor<T> t(std::move(shape), T(0), true);
  for (T& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
LinearLayer<T> make_linear(int in, int out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  LinearLayer<T> layer{BasicTensor<T>({out, in}, T(0), true), BasicTensor<T>({out}, T(0), true)};
  for (T& v : layer.weight.values()) v = static_cast<T>(dist(rng));
  for (T& v : layer.bias.values()) v = static_cast<T>(dist(rng));
  return layer;
}

}  // namespace

template <typename T>
ConvBn<T> make_conv_bn(int in_channels, int out_channels, int kernel, int stride, int padding, std::mt19937_64& rng) {
  ConvBn<T> layer;
  layer.weight = he_normal<T>({out_channels, in_channels, kernel, kernel},
                              static_cast<std::int64_t>(out_channels) * kernel * kernel, rng);
  layer.options = {stride, padding};
  layer.gamma = BasicTensor<T>({out_channels}, T(1), true);
  layer.beta = BasicTensor<T>({out_channels}, T(0), true);
  layer.running_mean = BasicTensor<T>({out_channels}, T(0));
  layer.running_var = BasicTensor<T>({out_channels}, T(1));
  return layer;
}

template <typename T>
BasicTensor<T> ConvBn<T>::forward(const BasicTensor<T>& x, bool training) {
  return batch_norm2d(conv2d(x, weight, options), gamma, beta, running_mean, running_var, training);
}

template <typename T>
BasicBlock<T> make_basic_block(int in_channels, int out_channels, int stride, std::mt19937_64& rng) {
  BasicBlock<T> block;
  block.conv1 = make_conv_bn<T>(in_channels, out_channels, 3, stride, 1, rng);
  block.conv2 = make_conv_bn<T>(out_channels, out_channels, 3, 1, 1, rng);
  if (stride != 1 || in_channels != out_channels) {
    block.downsample = make_conv_bn<T>(in_channels, out_channels, 1, stride, 0, rng);
  }
  return block;
}

template <typename T>
BasicTensor<T> BasicBlock<T>::forward(const BasicTensor<T>& x, bool training) {
  BasicTensor<T> out = relu(conv1.forward(x, training));
  out = conv2.forward(out, training);
  const BasicTensor<T> shortcut = downsample ? downsample->forward(x, training) : x;
  return relu(add(out, shortcut));
}

template <typename T>
BasicModel<T>::BasicModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  dropout_rng_.seed(seed ^ 0x9E3779B97F4A7C15ull);

  const StageLayout layout = stage_layout(config_.variant);
  stem_ = make_conv_bn<T>(config_.in_channels, layout.widths.front(), 7, 2, 3, rng);
  int channels = layout.widths.front();
  for (std::size_t s = 0; s < layout.blocks.size(); ++s) {
    std::vector<BasicBlock<T>> stage;
    for (int b = 0; b < layout.blocks[s]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      stage.push_back(make_basic_block<T>(channels, layout.widths[s], stride, rng));
      channels = layout.widths[s];
    }
    stages_.push_back(std::move(stage));
  }
  if (config_.head == Head::M2) {
    for (int width : config_.mlp_widths) {
      head_.push_back(make_linear<T>(channels, width, rng));
      channels = width;
    }
  }
  head_.push_back(make_linear<T>(channels, config_.num_outputs, rng));
  if (config_.zero_init_head) {
    for (T& v : head_.back().weight.values()) v = T(0);
  }
}

template <typename T>
BasicTensor<T> BasicModel<T>::forward(const BasicTensor<T>& batch) {
  if (mode_ == Mode::Unset) throw std::logic_error("model mode not set; call train() or eval() first");
  if (batch.rank() != 4 || batch.dim(1) != config_.in_channels) {
    throw std::invalid_argument("model expects [N, " + std::to_string(config_.in_channels) + ", H, W], got " +
                                shape_str(batch.shape()));
  }
  const bool training = mode_ == Mode::Train;
  BasicTensor<T> x = max_pool2d(relu(stem_.forward(batch, training)), 3, 2, 1);
  for (auto& stage : stages_) {
    for (auto& block : stage) x = block.forward(x, training);
  }
  x = flatten(adaptive_avg_pool2d(x));
  for (std::size_t i = 0; i + 1 < head_.size(); ++i) {
    x = relu(linear(x, head_[i].weight, head_[i].bias));
    x = dropout(x, config_.dropout_probs[i], training, dropout_rng_);
  }
  return linear(x, head_.back().weight, head_.back().bias);
}

namespace {

template <typename Tensor, typename Fn>
void visit_conv_bn(const std::string& conv, const std::string& bn, Tensor& weight, Tensor& gamma, Tensor& beta,
                   Tensor& mean, Tensor& var, Fn&& fn) {
  fn(conv + ".weight", weight, true);
  fn(bn + ".weight", gamma, true);
  fn(bn + ".bias", beta, true);
  fn(bn + ".running_mean", mean, false);
  fn(bn + ".running_var", var, false);
}

template <typename Model, typename Fn>
void visit_model(Model& layers, Fn&& fn) {
  auto& stem = layers.stem;
  visit_conv_bn("conv1", "bn1", stem.weight, stem.gamma, stem.beta, stem.running_mean, stem.running_var, fn);
  for (std::size_t s = 0; s < layers.stages.size(); ++s) {
    for (std::size_t b = 0; b < layers.stages[s].size(); ++b) {
      auto& block = layers.stages[s][b];
      const std::string prefix = "layer" + std::to_string(s + 1) + "." + std::to_string(b) + ".";
      auto& c1 = block.conv1;
      auto& c2 = block.conv2;
      visit_conv_bn(prefix + "conv1", prefix + "bn1", c1.weight, c1.gamma, c1.beta, c1.running_mean, c1.running_var,
                    fn);
      visit_conv_bn(prefix + "conv2", prefix + "bn2", c2.weight, c2.gamma, c2.beta, c2.running_mean, c2.running_var,
                    fn);
      if (block.downsample) {
        auto& d = *block.downsample;
        visit_conv_bn(prefix + "downsample.0", prefix + "downsample.1", d.weight, d.gamma, d.beta, d.running_mean,
                      d.running_var, fn);
      }
    }
  }
  auto& head = layers.head;
  for (std::size_t i = 0; i < head.size(); ++i) {
    const std::string prefix = head.size() == 1 ? "fc" : "fc." + std::to_string(i);
    fn(prefix + ".weight", head[i].weight, true);
    fn(prefix + ".bias", head[i].bias, true);
  }
}

template <typename Stem, typename Stages, typename Head>
struct LayerRefs {
  Stem& stem;
  Stages& stages;
  Head& head;
};

}  // namespace

template <typename T>
void BasicModel<T>::visit(const std::function<void(const std::string&, BasicTensor<T>&, bool)>& fn) {
  LayerRefs<ConvBn<T>, std::vector<std::vector<BasicBlock<T>>>, std::vector<LinearLayer<T>>> refs{stem_, stages_,
                                                                                                   head_};
  visit_model(refs, fn);
}

template <typename T>
void BasicModel<T>::visit(const std::function<void(const std::string&, const BasicTensor<T>&, bool)>& fn) const {
  LayerRefs<const ConvBn<T>, const std::vector<std::vector<BasicBlock<T>>>, const std::vector<LinearLayer<T>>> refs{
      stem_, stages_, head_};
  visit_model(refs, fn);
}

template <typename T>
std::vector<NamedTensor<T>> BasicModel<T>::parameters() const {
  std::vector<NamedTensor<T>> out;
  visit([&](const std::string& name, const BasicTensor<T>& t, bool is_param) {
    if (is_param) out.push_back({name, t});
  });
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> BasicModel<T>::buffers() const {
  std::vector<NamedTensor<T>> out;
  visit([&](const std::string& name, const BasicTensor<T>& t, bool is_param) {
    if (!is_param) out.push_back({name, t});
  });
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> BasicModel<T>::state() const {
  auto all = parameters();
  for (auto& b : buffers()) all.push_back(std::move(b));
  return all;
}

template <typename T>
std::int64_t BasicModel<T>::parameter_count() const {
  std::int64_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

template <typename T>
void BasicModel<T>::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

template <typename T>
BasicModel<T> BasicModel<T>::deep_copy() const {
  BasicModel copy = *this;
  copy.visit([](const std::string&, BasicTensor<T>& t, bool) { t = t.clone(); });
  return copy;
}

Model build_model(const ModelConfig& config, std::uint64_t seed) { return Model(config, seed); }

template struct ConvBn<float>;
template struct ConvBn<double>;
template struct BasicBlock<float>;
template struct BasicBlock<double>;
template ConvBn<float> make_conv_bn<float>(int, int, int, int, int, std::mt19937_64&);
template ConvBn<double> make_conv_bn<double>(int, int, int, int, int, std::mt19937_64&);
template BasicBlock<float> make_basic_block<float>(int, int, int, std::mt19937_64&);
template BasicBlock<double> make_basic_block<double>(int, int, int, std::mt19937_64&);
template class BasicModel<float>;
template class BasicModel<double>;

}  // namespace spermflow::nn
