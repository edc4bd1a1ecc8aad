#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "spermflow/errors.hpp"
#include "spermflow/training.hpp"

namespace spermflow::training {
namespace {

struct Batch {
  nn::Tensor input;
  nn::Tensor target;
  std::vector<std::size_t> indices;
};

Batch load_batch(const dataset::SampleSource& data, std::span<const std::size_t> indices, int channels) {
  const auto n = static_cast<std::int64_t>(indices.size());
  const std::size_t per_sample = dataset::kSampleValues;
  std::vector<float> input(per_sample * indices.size());
  std::vector<float> target(3 * indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto sample = data.load(indices[i]);
    if (sample.data.size() != per_sample) throw InputError("sample " + std::to_string(indices[i]) + " has wrong size");
    std::copy(sample.data.begin(), sample.data.end(), input.begin() + static_cast<std::ptrdiff_t>(i * per_sample));
    std::copy(sample.target.begin(), sample.target.end(), target.begin() + static_cast<std::ptrdiff_t>(3 * i));
  }
  Batch b;
  b.input = nn::Tensor({n, channels, dataset::kSampleSize, dataset::kSampleSize}, std::move(input));
  b.target = nn::Tensor({n, 3}, std::move(target));
  b.indices.assign(indices.begin(), indices.end());
  return b;
}

void check_compatible(const TrainConfig& config, const dataset::SampleSource& data,
                      std::span<const std::size_t> indices) {
  if (data.kind() != config.dataset_kind) {
    throw InputError("dataset is " + dataset::to_string(data.kind()) + " but the configuration expects " +
                     dataset::to_string(config.dataset_kind));
  }
  if (config.model.in_channels != dataset::kSampleChannels) {
    throw InputError("model expects " + std::to_string(config.model.in_channels) + " input channels, samples have " +
                     std::to_string(dataset::kSampleChannels));
  }
  for (std::size_t i : indices) {
    if (i >= data.size()) throw InputError("sample index " + std::to_string(i) + " out of range");
    if (data.meta(i).task != config.task) {
      throw InputError("sample " + std::to_string(i) + " carries " + dataset::to_string(data.meta(i).task) +
                       " targets but the configuration trains " + dataset::to_string(config.task));
    }
  }
}

struct Range {
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  std::size_t count = 0;
  std::size_t non_finite = 0;

  void add(std::span<const float> values) {
    for (float f : values) {
      if (!std::isfinite(f)) {
        ++non_finite;
        continue;
      }
      min = std::min(min, static_cast<double>(f));
      max = std::max(max, static_cast<double>(f));
      sum += f;
      ++count;
    }
  }
  std::string str() const {
    std::ostringstream os;
    os << "min " << min << " max " << max << " mean " << (count ? sum / static_cast<double>(count) : 0.0)
       << " non-finite " << non_finite;
    return os.str();
  }
};

[[noreturn]] void report_divergence(const std::string& what, int epoch, std::size_t batch_no,
                                    const dataset::SampleSource& data, const Batch& batch, const nn::Tensor& pred) {
  Range in, tg, pr;
  in.add(batch.input.values());
  tg.add(batch.target.values());
  pr.add(pred.values());
  std::ostringstream os;
  os << what << " at epoch " << epoch << ", batch " << batch_no << "; videos:";
  for (std::size_t i : batch.indices) os << ' ' << data.meta(i).video_id << '@' << data.meta(i).start_frame;
  os << "; input " << in.str() << "; target " << tg.str() << "; prediction " << pr.str();
  throw NumericalError(os.str());
}

std::vector<std::size_t> indices_where(const dataset::SampleSource& data, const dataset::FoldAssignment& folds,
                                       bool in_fold, int fold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if ((folds.fold_of(data.meta(i).video_id) == fold) == in_fold) out.push_back(i);
  }
  return out;
}

std::vector<std::string> videos_of(const dataset::SampleSource& data, std::span<const std::size_t> indices) {
  std::set<std::string> ids;
  for (std::size_t i : indices) ids.insert(data.meta(i).video_id);
  return {ids.begin(), ids.end()};
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw InputError("epochs must be at least 1, got " + std::to_string(epochs));
  if (batch_size < 1) throw InputError("batch_size must be at least 1, got " + std::to_string(batch_size));
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw InputError("learning_rate must be >= 0");
  model.validate();
}

Evaluation evaluate(nn::Model& model, const dataset::SampleSource& data, std::span<const std::size_t> indices,
                    int batch_size) {
  if (indices.empty()) throw InputError("evaluation split is empty");
  if (batch_size < 1) throw InputError("batch_size must be at least 1");
  const nn::Mode previous = model.mode();
  model.eval();
  nn::NoGradGuard no_grad;

  std::map<std::string, std::vector<std::array<double, 3>>> per_video;
  std::map<std::string, std::array<float, 3>> labels;
  double chunk_sum = 0.0;
  for (std::size_t b = 0; b < indices.size(); b += static_cast<std::size_t>(batch_size)) {
    const auto span = indices.subspan(b, std::min<std::size_t>(batch_size, indices.size() - b));
    const Batch batch = load_batch(data, span, model.config().in_channels);
    const nn::Tensor pred = model.forward(batch.input);
    auto p = pred.values();
    auto t = batch.target.values();
    for (std::size_t i = 0; i < span.size(); ++i) {
      const auto& meta = data.meta(span[i]);
      std::array<double, 3> row{};
      for (int k = 0; k < 3; ++k) {
        row[k] = p[3 * i + k];
        chunk_sum += std::abs(row[k] - static_cast<double>(t[3 * i + k]));
      }
      per_video[meta.video_id].push_back(row);
      labels.emplace(meta.video_id, meta.target);
    }
  }
  model.set_mode(previous);

  Evaluation ev;
  ev.chunk_mae = chunk_sum / (3.0 * static_cast<double>(indices.size()));
  double video_sum = 0.0;
  for (const auto& [video, preds] : per_video) {
    const auto agg = aggregate_video_prediction(preds);
    const auto& label = labels.at(video);
    for (int k = 0; k < 3; ++k) video_sum += std::abs(agg[k] - static_cast<double>(label[k]));
    ev.video_predictions.emplace(video, agg);
  }
  ev.video_mae = video_sum / (3.0 * static_cast<double>(per_video.size()));
  return ev;
}

TrainResult train(const TrainConfig& config, const dataset::SampleSource& data,
                  std::span<const std::size_t> train_indices, std::span<const std::size_t> val_indices) {
  config.validate();
  if (train_indices.empty()) throw InputError("training split is empty");
  check_compatible(config, data, train_indices);
  check_compatible(config, data, val_indices);

  nn::Model model = nn::build_model(config.model, config.seed);
  if (!config.initial_weights.empty()) nn::import_weights(model, config.initial_weights);
  model.reseed_dropout(config.seed ^ 0xd1b54a32d192ed03ULL);
  AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  Adam adam(model.parameters(), adam_config);
  std::mt19937_64 shuffle_rng(config.seed ^ 0x8cb92ba72f3d8dd7ULL);

  std::vector<std::size_t> order(train_indices.begin(), train_indices.end());
  std::vector<EpochLog> log;
  std::optional<nn::Model> best;
  double best_mae = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    model.train();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t b = 0; b < order.size(); b += batch_size, ++batch_no) {
      const auto span = std::span<const std::size_t>(order).subspan(b, std::min(batch_size, order.size() - b));
      const Batch batch = load_batch(data, span, config.model.in_channels);
      model.zero_grad();
      const nn::Tensor pred = model.forward(batch.input);
      nn::Tensor loss = mse_loss(pred, batch.target);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        report_divergence("non-finite training loss (" + std::to_string(value) + ")", epoch, batch_no, data, batch,
                          pred);
      }
      loss.backward();
      try {
        adam.step();
      } catch (const NumericalError& e) {
        report_divergence(e.what(), epoch, batch_no, data, batch, pred);
      }
      loss_sum += value * static_cast<double>(span.size());
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_mse = loss_sum / static_cast<double>(order.size());
    if (!val_indices.empty()) {
      const Evaluation ev = evaluate(model, data, val_indices, config.batch_size);
      entry.val_mae = ev.video_mae;
      entry.val_chunk_mae = ev.chunk_mae;
      if (ev.video_mae < best_mae) {
        best_mae = ev.video_mae;
        best_epoch = epoch;
        best = model.deep_copy();
      }
    }
    log.push_back(entry);
  }

  if (!best) {
    best = std::move(model);
    best_epoch = config.epochs;
  }
  best->eval();
  return TrainResult{std::move(*best), std::move(log), best_epoch};
}

TrainResult train(const TrainConfig& config, const dataset::SampleSource& data, const dataset::FoldAssignment& folds,
                  std::optional<int> held_out_fold) {
  if (!held_out_fold) {
    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return train(config, data, all, {});
  }
  const int f = *held_out_fold;
  if (f < 0 || f >= dataset::kFoldCount) throw InputError("held-out fold must be 0, 1 or 2");
  const auto val = indices_where(data, folds, true, f);
  const auto tr = indices_where(data, folds, false, f);
  if (val.empty()) throw InputError("fold " + std::to_string(f + 1) + " has no videos");
  return train(config, data, tr, val);
}

CrossValidationResult run_cross_validation(const TrainConfig& config, const dataset::SampleSource& data,
                                           const dataset::FoldAssignment& folds) {
  config.validate();
  std::vector<std::vector<std::size_t>> fold_indices(dataset::kFoldCount);
  for (std::size_t i = 0; i < data.size(); ++i) {
    fold_indices[static_cast<std::size_t>(folds.fold_of(data.meta(i).video_id))].push_back(i);
  }
  for (int f = 0; f < dataset::kFoldCount; ++f) {
    if (fold_indices[f].empty()) throw InputError("fold " + std::to_string(f + 1) + " has no videos");
  }

  CrossValidationResult result;
  const MetricsKey key{config.dataset_kind, config.model.head, config.task};
  for (int f = 0; f < dataset::kFoldCount; ++f) {
    std::vector<std::size_t> train_idx;
    for (int g = 0; g < dataset::kFoldCount; ++g) {
      if (g != f) train_idx.insert(train_idx.end(), fold_indices[g].begin(), fold_indices[g].end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    const auto& test_idx = fold_indices[f];

    TrainResult run = train(config, data, train_idx, test_idx);
    const Evaluation ev = evaluate(run.model, data, test_idx, config.batch_size);

    FoldResult fr;
    fr.fold = f + 1;
    fr.video_mae = ev.video_mae;
    fr.chunk_mae = ev.chunk_mae;
    fr.train_videos = videos_of(data, train_idx);
    fr.test_videos = videos_of(data, test_idx);
    fr.log = std::move(run.log);
    fr.predictions = ev.video_predictions;
    result.report.set(key, fr.fold, fr.video_mae);
    result.chunk_report.set(key, fr.fold, fr.chunk_mae);
    result.folds.push_back(std::move(fr));
  }
  return result;
}

void write_epoch_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "epoch,train_mse,val_mae\n";
  char buf[64];
  for (const auto& e : log) {
    out << e.epoch << ',';
    std::snprintf(buf, sizeof buf, "%.17g", e.train_mse);
    out << buf << ',';
    if (e.val_mae) {
      std::snprintf(buf, sizeof buf, "%.17g", *e.val_mae);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace spermflow::training
