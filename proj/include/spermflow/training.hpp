#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spermflow/dataset.hpp"
#include "spermflow/metrics_report.hpp"
#include "spermflow/model.hpp"

namespace spermflow::training {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
class BasicAdam {
 public:
  explicit BasicAdam(std::vector<nn::NamedTensor<T>> params, AdamConfig config = {});

  // One bias-corrected update from the accumulated gradients. A non-finite
  // gradient aborts the step before any parameter moves.
  void step();

  std::int64_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }
  std::span<const T> first_moment(std::size_t i) const { return m_.at(i); }
  std::span<const T> second_moment(std::size_t i) const { return v_.at(i); }

 private:
  std::vector<nn::NamedTensor<T>> params_;
  AdamConfig config_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::int64_t step_ = 0;
};

using Adam = BasicAdam<float>;

// Mean of squared differences over every element.
template <typename T>
nn::BasicTensor<T> mse_loss(const nn::BasicTensor<T>& pred, const nn::BasicTensor<T>& target);

double mae(std::span<const float> pred, std::span<const float> target);
double mae(const nn::Tensor& pred, const nn::Tensor& target);

std::array<double, 3> aggregate_video_prediction(std::span<const std::array<double, 3>> chunk_predictions);

struct TrainConfig {
  dataset::Task task = dataset::Task::Motility;
  int epochs = 30;
  int batch_size = 16;
  std::uint64_t seed = 42;
  dataset::DatasetKind dataset_kind = dataset::DatasetKind::D2;
  double learning_rate = 1e-3;
  nn::ModelConfig model;
  // Optional SPWT file loaded before the first step (fine-tuning).
  std::string initial_weights;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_mse = 0.0;
  std::optional<double> val_mae;        // per-video
  std::optional<double> val_chunk_mae;  // per-chunk
};

struct Evaluation {
  double video_mae = 0.0;
  double chunk_mae = 0.0;
  std::map<std::string, std::array<double, 3>> video_predictions;
};

// Eval-mode predictions over `indices`; chunk predictions are averaged per video.
Evaluation evaluate(nn::Model& model, const dataset::SampleSource& data, std::span<const std::size_t> indices,
                    int batch_size = 16);

struct TrainResult {
  nn::Model model;
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

// Seeded mini-batch Adam on MSE. With validation indices the epoch with the
// lowest per-video validation MAE is kept; otherwise the final weights.
TrainResult train(const TrainConfig& config, const dataset::SampleSource& data,
                  std::span<const std::size_t> train_indices, std::span<const std::size_t> val_indices = {});

// Trains on every fold except `held_out_fold` and validates on it.
TrainResult train(const TrainConfig& config, const dataset::SampleSource& data, const dataset::FoldAssignment& folds,
                  std::optional<int> held_out_fold);

struct FoldResult {
  int fold = 0;  // 1-based, as reported
  double video_mae = 0.0;
  double chunk_mae = 0.0;
  std::vector<std::string> train_videos;
  std::vector<std::string> test_videos;
  std::vector<EpochLog> log;
  std::map<std::string, std::array<double, 3>> predictions;
};

struct CrossValidationResult {
  MetricsReport report;        // per-video MAE
  MetricsReport chunk_report;  // per-chunk MAE
  std::vector<FoldResult> folds;
};

CrossValidationResult run_cross_validation(const TrainConfig& config, const dataset::SampleSource& data,
                                           const dataset::FoldAssignment& folds);

void write_epoch_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

}  // namespace spermflow::training
