#include <algorithm>
#include <future>
#include <map>

#include "spermflow/dataset.hpp"
#include "spermflow/errors.hpp"

namespace spermflow::dataset {

DatasetManifest build_dataset(std::span<const media::VideoSource> videos, const std::vector<LabelRecord>& labels,
                              const BuildOptions& options, const std::filesystem::path& out) {
  std::map<std::string, const media::VideoSource*> by_id;
  for (const auto& video : videos) {
    if (!by_id.emplace(video.id(), &video).second) throw InputError("duplicate video id " + video.id());
  }
  std::map<std::string, const LabelRecord*> labelled;
  for (const auto& rec : labels) {
    if (!by_id.count(rec.video_id)) throw InputError("labelled video " + rec.video_id + " has no frames source");
    labelled.emplace(rec.video_id, &rec);
  }

  const unsigned threads = std::max(1u, options.threads);
  DatasetWriter writer(out, options.kind, options.flow_params);
  for (const auto& [id, label] : labelled) {
    const media::VideoSource& src = *by_id.at(id);
    const auto chunks = sample_chunk_positions(id, src.frame_count(), options.n_chunks, kChunkLength,
                                               options.placement, options.seed ^ stable_hash(id));
    std::array<float, 3> target{};
    for (int i = 0; i < 3; ++i) target[i] = static_cast<float>(label->target(options.task)[i]);

    // Chunks are sorted, so repeated starts are adjacent and share one tensor.
    std::vector<int> unique_starts;
    for (const auto& c : chunks) {
      if (unique_starts.empty() || unique_starts.back() != c.start_frame) unique_starts.push_back(c.start_frame);
    }
    std::size_t next_chunk = 0;
    for (std::size_t first = 0; first < unique_starts.size(); first += threads) {
      const std::size_t last = std::min(unique_starts.size(), first + threads);
      std::vector<std::future<SampleTensor>> pending;
      for (std::size_t i = first; i < last; ++i) {
        const ChunkSpec chunk{id, unique_starts[i], kChunkLength};
        pending.push_back(std::async(threads > 1 ? std::launch::async : std::launch::deferred, [&src, chunk, &options] {
          return options.kind == DatasetKind::D1 ? build_d1_sample(src, chunk)
                                                 : build_d2_sample(src, chunk, options.flow_params);
        }));
      }
      for (std::size_t i = first; i < last; ++i) {
        SampleTensor sample = pending[i - first].get();
        sample.task = options.task;
        sample.target = target;
        while (next_chunk < chunks.size() && chunks[next_chunk].start_frame == unique_starts[i]) {
          writer.write(sample);
          ++next_chunk;
        }
      }
    }
  }
  return writer.finish();
}

}  // namespace spermflow::dataset
