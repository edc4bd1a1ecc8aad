#include "spermflow/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "spermflow/config.hpp"
#include "spermflow/dataset.hpp"
#include "spermflow/errors.hpp"
#include "spermflow/flow.hpp"
#include "spermflow/image_io.hpp"
#include "spermflow/media.hpp"
#include "spermflow/model.hpp"
#include "spermflow/training.hpp"

namespace spermflow::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON run configuration");
  sub->add_option("--set", c.overrides, "Override a configuration key (key=value, dotted paths)");
  sub->add_option("--seed", c.seed, "Random seed");
  sub->add_option("--threads", c.threads, "Worker threads");
  sub->add_option("--out", c.out, "Output path")->required();
}

// Effective configuration: defaults, then the config file, then overrides.
training::RunConfig resolve_config(const Common& c) {
  json doc = training::to_json(training::RunConfig{});
  if (!c.config.empty()) {
    const json file = training::load_json(c.config);
    // Validates the file on its own so unknown keys name the file's view.
    training::run_config_from_json(file);
    doc.merge_patch(file);
  }
  for (const auto& o : c.overrides) training::apply_override(doc, o);
  auto config = training::run_config_from_json(doc);
  if (c.seed) config.train.seed = *c.seed;
  return config;
}

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

json base_manifest(const std::string& command, const training::RunConfig& config, unsigned threads,
                   const std::vector<std::string>& args) {
  return json{{"command", command},
              {"arguments", std::vector<std::string>(args.begin() + 1, args.end())},
              {"config", training::to_json(config)},
              {"seed", config.train.seed},
              {"threads", threads}};
}

fs::path sidecar(const fs::path& file) { return fs::path(file.string() + ".manifest.json"); }

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

std::vector<media::VideoSource> open_videos(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("video directory " + dir.string() + " does not exist");
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() || e.path().extension() == ".rgb24") entries.push_back(e.path());
  }
  std::sort(entries.begin(), entries.end());
  std::vector<media::VideoSource> videos;
  for (const auto& p : entries) videos.push_back(media::open_video(p));
  if (videos.empty()) throw InputError("no videos found in " + dir.string());
  return videos;
}

dataset::FoldAssignment folds_for(const dataset::SampleSource& data, const std::string& folds_file) {
  std::vector<dataset::LabelRecord> ids;
  std::string last;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& id = data.meta(i).video_id;
    if (id != last) {
      if (std::none_of(ids.begin(), ids.end(), [&](const auto& r) { return r.video_id == id; })) {
        ids.push_back({id, {}, {}});
      }
      last = id;
    }
  }
  if (folds_file.empty()) return dataset::assign_folds(ids);
  return dataset::assign_folds(ids, fs::path(folds_file));
}

void check_kind(const training::RunConfig& config, const dataset::SampleSource& data) {
  if (data.kind() != config.train.dataset_kind) {
    throw InputError("dataset is " + dataset::to_string(data.kind()) + " but the configuration expects " +
                     dataset::to_string(config.train.dataset_kind));
  }
}

json epoch_log_json(const std::vector<training::EpochLog>& log) {
  json rows = json::array();
  for (const auto& e : log) {
    json row{{"epoch", e.epoch}, {"train_mse", e.train_mse}};
    if (e.val_mae) row["val_mae"] = *e.val_mae;
    if (e.val_chunk_mae) row["val_chunk_mae"] = *e.val_chunk_mae;
    rows.push_back(row);
  }
  return rows;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out) {
  CLI::App app{"Sperm motility and morphology regression from microscopy video", "spermflow"};
  app.require_subcommand(1);

  Common common;
  std::string videos_dir, labels_csv, folds_csv, kind, task;
  auto* preprocess = app.add_subcommand("preprocess", "Build a D1/D2 chunk dataset from videos and labels");
  add_common(preprocess, common);
  preprocess->add_option("--videos", videos_dir, "Directory of videos")->required();
  preprocess->add_option("--labels", labels_csv, "Labels CSV")->required();
  preprocess->add_option("--folds", folds_csv, "Fold assignment CSV (video_id,fold)");
  preprocess->add_option("--kind", kind, "D1 or D2");
  preprocess->add_option("--task", task, "motility or morphology");

  std::string frame_a, frame_b, flo_out;
  auto* flow_cmd = app.add_subcommand("flow", "Visualise dense optical flow between two frames");
  add_common(flow_cmd, common);
  flow_cmd->add_option("frame_a", frame_a, "First frame (PPM/PGM)")->required();
  flow_cmd->add_option("frame_b", frame_b, "Second frame (PPM/PGM)")->required();
  flow_cmd->add_option("--flo", flo_out, "Also write the raw field as .flo");

  std::string data_path, pretrained;
  int held_out = 0;
  auto* train_cmd = app.add_subcommand("train", "Train one model");
  add_common(train_cmd, common);
  train_cmd->add_option("--data", data_path, "Dataset file")->required();
  train_cmd->add_option("--folds", folds_csv, "Fold assignment CSV");
  train_cmd->add_option("--held-out-fold", held_out, "Validate on this fold (1-3); 0 trains on everything")
      ->check(CLI::Range(0, 3));
  train_cmd->add_option("--pretrained", pretrained, "Initial weights (SPWT)");

  auto* cv_cmd = app.add_subcommand("cv", "Three-fold cross-validation");
  add_common(cv_cmd, common);
  cv_cmd->add_option("--data", data_path, "Dataset file")->required();
  cv_cmd->add_option("--folds", folds_csv, "Fold assignment CSV");

  std::string weights;
  int fold = 0;
  auto* predict_cmd = app.add_subcommand("predict", "Per-video predictions");
  add_common(predict_cmd, common);
  predict_cmd->add_option("--weights", weights, "Trained weights (SPWT)")->required();
  predict_cmd->add_option("--data", data_path, "Dataset file")->required();
  predict_cmd->add_option("--folds", folds_csv, "Fold assignment CSV");
  predict_cmd->add_option("--fold", fold, "Only predict videos of this fold (1-3)")->check(CLI::Range(0, 3));

  std::vector<std::string> reports;
  auto* report_cmd = app.add_subcommand("report", "Merge cross-validation metrics into one table");
  add_common(report_cmd, common);
  report_cmd->add_option("metrics", reports, "metrics.csv files from cv runs")->required();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    throw InputError(e.what());
  }

  auto config = resolve_config(common);
  if (!pretrained.empty()) config.train.initial_weights = pretrained;
  const fs::path out_path = common.out;

  if (*preprocess) {
    dataset::BuildOptions opts;
    opts.kind = kind.empty() ? config.train.dataset_kind : dataset::parse_dataset_kind(kind);
    opts.task = task.empty() ? config.train.task : dataset::parse_task(task);
    opts.n_chunks = config.n_chunks;
    opts.placement = config.placement;
    opts.seed = config.train.seed;
    opts.flow_params = config.flow;
    opts.threads = common.threads.value_or(std::max(1u, std::thread::hardware_concurrency()));

    if (!fs::exists(labels_csv)) throw InputError("labels file " + labels_csv + " does not exist");
    const auto labels = dataset::load_labels(labels_csv);
    const auto folds = folds_csv.empty() ? dataset::assign_folds(labels)
                                         : dataset::assign_folds(labels, fs::path(folds_csv));
    const auto videos = open_videos(videos_dir);
    ensure_parent(out_path);
    const auto manifest = dataset::build_dataset(videos, labels, opts, out_path);

    for (const auto& [id, n] : manifest.chunks_per_video) out << id << ' ' << n << " chunks\n";
    out << "wrote " << manifest.sample_count << " samples to " << out_path.string() << '\n';

    auto effective = config;
    effective.train.dataset_kind = opts.kind;
    effective.train.task = opts.task;
    json doc = base_manifest("preprocess", effective, opts.threads, args);
    doc["inputs"] = {{"videos", videos_dir}, {"labels", labels_csv}, {"folds", folds_csv}};
    doc["dataset"] = {{"path", out_path.string()},
                      {"kind", dataset::to_string(manifest.kind)},
                      {"sample_count", manifest.sample_count},
                      {"chunks_per_video", manifest.chunks_per_video}};
    doc["folds"] = folds.map();
    write_json(sidecar(out_path), doc);
    return kExitOk;
  }

  if (*flow_cmd) {
    const auto a = media::to_grayscale(media::read_netpbm(frame_a));
    const auto b = media::to_grayscale(media::read_netpbm(frame_b));
    if (a.size() != b.size()) {
      throw InputError("frame sizes differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                       std::to_string(b.width) + "x" + std::to_string(b.height));
    }
    const auto field = flow::estimate_flow(a, b, config.flow);
    ensure_parent(out_path);
    media::write_ppm(out_path, flow::flow_to_rgb(field));
    if (!flo_out.empty()) flow::write_flo(flo_out, field);
    json doc = base_manifest("flow", config, common.threads.value_or(1), args);
    doc["inputs"] = {{"frame_a", frame_a}, {"frame_b", frame_b}};
    doc["outputs"] = {{"image", out_path.string()}, {"flo", flo_out}};
    write_json(sidecar(out_path), doc);
    return kExitOk;
  }

  if (*train_cmd) {
    const dataset::DatasetFile data(data_path);
    check_kind(config, data);
    const auto folds = folds_for(data, folds_csv);
    const auto result = training::train(config.train, data, folds,
                                        held_out > 0 ? std::optional<int>(held_out - 1) : std::nullopt);
    fs::create_directories(out_path);
    nn::export_weights(result.model, out_path / "weights.spwt");
    training::write_epoch_log(out_path / "epoch_log.csv", result.log);
    write_json(out_path / "config.json", training::to_json(config));
    for (const auto& e : result.log) {
      out << "epoch " << e.epoch << " train_mse " << exact(e.train_mse);
      if (e.val_mae) out << " val_mae " << exact(*e.val_mae);
      out << '\n';
    }
    json doc = base_manifest("train", config, common.threads.value_or(1), args);
    doc["inputs"] = {{"data", data_path}, {"folds", folds_csv}, {"held_out_fold", held_out}};
    doc["best_epoch"] = result.best_epoch;
    doc["epochs"] = epoch_log_json(result.log);
    doc["outputs"] = {{"weights", (out_path / "weights.spwt").string()},
                      {"epoch_log", (out_path / "epoch_log.csv").string()}};
    write_json(out_path / "manifest.json", doc);
    return kExitOk;
  }

  if (*cv_cmd) {
    const dataset::DatasetFile data(data_path);
    check_kind(config, data);
    const auto folds = folds_for(data, folds_csv);
    const auto cv = training::run_cross_validation(config.train, data, folds);
    fs::create_directories(out_path);
    cv.report.write_csv(out_path / "metrics.csv");
    cv.chunk_report.write_csv(out_path / "metrics_chunk.csv");
    const std::string table = cv.report.render_table();
    std::ofstream(out_path / "table.txt") << table;
    json fold_docs = json::array();
    for (const auto& f : cv.folds) {
      training::write_epoch_log(out_path / ("fold" + std::to_string(f.fold) + "_epoch_log.csv"), f.log);
      json preds = json::object();
      for (const auto& [video, p] : f.predictions) preds[video] = p;
      fold_docs.push_back({{"fold", f.fold},
                           {"video_mae", f.video_mae},
                           {"chunk_mae", f.chunk_mae},
                           {"train_videos", f.train_videos},
                           {"test_videos", f.test_videos},
                           {"predictions", preds},
                           {"epochs", epoch_log_json(f.log)}});
    }
    out << table;
    json doc = base_manifest("cv", config, common.threads.value_or(1), args);
    doc["inputs"] = {{"data", data_path}, {"folds", folds_csv}};
    doc["folds"] = fold_docs;
    write_json(out_path / "manifest.json", doc);
    return kExitOk;
  }

  if (*predict_cmd) {
    const dataset::DatasetFile data(data_path);
    check_kind(config, data);
    nn::Model model = nn::build_model(config.train.model, config.train.seed);
    nn::import_weights(model, weights);
    std::vector<std::size_t> indices;
    if (fold > 0) {
      const auto folds = folds_for(data, folds_csv);
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (folds.fold_of(data.meta(i).video_id) == fold - 1) indices.push_back(i);
      }
      if (indices.empty()) throw InputError("fold " + std::to_string(fold) + " has no videos");
    } else {
      for (std::size_t i = 0; i < data.size(); ++i) indices.push_back(i);
    }
    const auto ev = training::evaluate(model, data, indices, config.train.batch_size);
    ensure_parent(out_path);
    std::ofstream csv(out_path);
    if (!csv) throw InputError("cannot write " + out_path.string());
    csv << "video_id,p1,p2,p3\n";
    for (const auto& [video, p] : ev.video_predictions) {
      csv << video << ',' << exact(p[0]) << ',' << exact(p[1]) << ',' << exact(p[2]) << '\n';
    }
    out << "predicted " << ev.video_predictions.size() << " videos, MAE " << exact(ev.video_mae) << '\n';
    json doc = base_manifest("predict", config, common.threads.value_or(1), args);
    doc["inputs"] = {{"data", data_path}, {"weights", weights}, {"folds", folds_csv}, {"fold", fold}};
    doc["video_mae"] = ev.video_mae;
    doc["chunk_mae"] = ev.chunk_mae;
    write_json(sidecar(out_path), doc);
    return kExitOk;
  }

  if (*report_cmd) {
    training::MetricsReport merged;
    for (const auto& r : reports) merged.merge(training::MetricsReport::read_csv(r));
    fs::create_directories(out_path);
    merged.write_csv(out_path / "metrics.csv");
    const std::string table = merged.render_table();
    std::ofstream(out_path / "table.txt") << table;
    out << table;
    json doc = base_manifest("report", config, common.threads.value_or(1), args);
    doc["inputs"] = reports;
    write_json(out_path / "manifest.json", doc);
    return kExitOk;
  }
  return kExitInput;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace spermflow::cli
