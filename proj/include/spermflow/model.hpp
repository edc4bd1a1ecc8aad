#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "spermflow/ops.hpp"
#include "spermflow/tensor.hpp"

namespace spermflow::nn {

enum class Variant { ResNet34, ResNet18, Tiny };
enum class Head { M1, M2 };
enum class Mode { Unset, Train, Eval };

std::string to_string(Variant variant);
std::string to_string(Head head);
Variant parse_variant(std::string_view text);
Head parse_head(std::string_view text);

struct ModelConfig {
  Variant variant = Variant::ResNet34;
  int in_channels = 9;
  Head head = Head::M1;
  std::vector<int> mlp_widths{256, 64};
  std::vector<double> dropout_probs{0.5, 0.5};
  int num_outputs = 3;
  // Zero the final linear weight so predictions start at the final bias.
  bool zero_init_head = false;

  void validate() const;
};

struct StageLayout {
  std::vector<int> blocks;
  std::vector<int> widths;
};
StageLayout stage_layout(Variant variant);

template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T> tensor;
};

template <typename T>
struct ConvBn {
  BasicTensor<T> weight;
  Conv2dOptions options;
  BasicTensor<T> gamma, beta, running_mean, running_var;

  BasicTensor<T> forward(const BasicTensor<T>& x, bool training);
};

template <typename T>
struct BasicBlock {
  ConvBn<T> conv1, conv2;
  std::optional<ConvBn<T>> downsample;

  BasicTensor<T> forward(const BasicTensor<T>& x, bool training);
};

template <typename T>
struct LinearLayer {
  BasicTensor<T> weight, bias;
};

// He-initialised conv (fan-out), BN at (gamma 1, beta 0), running stats (0, 1).
template <typename T>
ConvBn<T> make_conv_bn(int in_channels, int out_channels, int kernel, int stride, int padding, std::mt19937_64& rng);

// 3x3 -> 3x3 with a 1x1 projection shortcut when stride or width changes.
template <typename T>
BasicBlock<T> make_basic_block(int in_channels, int out_channels, int stride, std::mt19937_64& rng);

template <typename T>
class BasicModel {
 public:
  BasicModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }
  void train() { mode_ = Mode::Train; }
  void eval() { mode_ = Mode::Eval; }

  // batch [N, in_channels, H, W] -> [N, num_outputs]
  BasicTensor<T> forward(const BasicTensor<T>& batch);

  // Trainable tensors in a fixed order with torchvision-style names.
  std::vector<NamedTensor<T>> parameters() const;
  // Batch-norm running statistics.
  std::vector<NamedTensor<T>> buffers() const;
  // parameters() followed by buffers().
  std::vector<NamedTensor<T>> state() const;
  std::int64_t parameter_count() const;

  void zero_grad();
  void reseed_dropout(std::uint64_t seed) { dropout_rng_.seed(seed); }

  // Independent copy of every tensor; shares no storage with *this.
  BasicModel deep_copy() const;

  ConvBn<T>& stem() { return stem_; }
  std::vector<std::vector<BasicBlock<T>>>& stages() { return stages_; }
  std::vector<LinearLayer<T>>& head_layers() { return head_; }

 private:
  void visit(const std::function<void(const std::string&, BasicTensor<T>&, bool)>& fn);
  void visit(const std::function<void(const std::string&, const BasicTensor<T>&, bool)>& fn) const;

  ModelConfig config_;
  Mode mode_ = Mode::Unset;
  ConvBn<T> stem_;
  std::vector<std::vector<BasicBlock<T>>> stages_;
  std::vector<LinearLayer<T>> head_;
  std::mt19937_64 dropout_rng_;
};

using Model = BasicModel<float>;

Model build_model(const ModelConfig& config, std::uint64_t seed);

// "SPWT" container of named f32 tensors (parameters and running stats).
void export_weights(const Model& model, const std::filesystem::path& path);

// Every model tensor must be present with a matching shape, except that a
// first conv with fewer input channels is tiled across channels and scaled
// by (file channels / model channels).
void import_weights(Model& model, const std::filesystem::path& path);

}  // namespace spermflow::nn
