#include <algorithm>
#include <cstring>

#include <json.hpp>

#include "spermflow/binary_io.hpp"
#include "spermflow/dataset.hpp"
#include "spermflow/errors.hpp"

namespace spermflow::dataset {
namespace {

constexpr char kMagic[4] = {'S', 'P', 'R', 'M'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint64_t kTensorBytes = kSampleValues * sizeof(float);

void write_flow_params(std::ostream& out, const flow::FarnebackParams& p) {
  io::write_f64(out, p.pyr_scale);
  io::write_u32(out, static_cast<std::uint32_t>(p.levels));
  io::write_u32(out, static_cast<std::uint32_t>(p.winsize));
  io::write_u32(out, static_cast<std::uint32_t>(p.iterations));
  io::write_u32(out, static_cast<std::uint32_t>(p.poly_n));
  io::write_f64(out, p.poly_sigma);
}

flow::FarnebackParams read_flow_params(std::istream& in) {
  flow::FarnebackParams p;
  p.pyr_scale = io::read_f64(in);
  p.levels = static_cast<int>(io::read_u32(in));
  p.winsize = static_cast<int>(io::read_u32(in));
  p.iterations = static_cast<int>(io::read_u32(in));
  p.poly_n = static_cast<int>(io::read_u32(in));
  p.poly_sigma = io::read_f64(in);
  return p;
}

}  // namespace

InMemoryDataset::InMemoryDataset(DatasetKind kind, std::vector<SampleTensor> samples)
    : kind_(kind), samples_(std::move(samples)) {
  metas_.reserve(samples_.size());
  for (const auto& s : samples_) {
    if (s.kind != kind_) throw InputError("sample of kind " + to_string(s.kind) + " in a " + to_string(kind_) + " dataset");
    metas_.push_back({s.video_id, s.start_frame, s.task, s.target});
  }
}

DatasetWriter::DatasetWriter(const std::filesystem::path& path, DatasetKind kind, const flow::FarnebackParams& params)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw InputError("cannot write " + path.string());
  params.validate();
  manifest_.kind = kind;
  manifest_.flow_params = params;
  out_.write(kMagic, 4);
  io::write_u16(out_, kVersion);
  io::write_u8(out_, static_cast<std::uint8_t>(kind));
  write_flow_params(out_, params);
  io::write_u32(out_, 0);  // patched by finish()
}

DatasetWriter::~DatasetWriter() {
  if (!finished_) {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
}

void DatasetWriter::write(const SampleTensor& sample) {
  if (finished_) throw std::logic_error("DatasetWriter already finished");
  if (sample.kind != manifest_.kind) {
    throw InputError("cannot mix " + to_string(sample.kind) + " samples into a " + to_string(manifest_.kind) +
                     " dataset");
  }
  sample.validate();
  io::write_string(out_, sample.video_id);
  io::write_u32(out_, static_cast<std::uint32_t>(sample.start_frame));
  io::write_u8(out_, static_cast<std::uint8_t>(sample.task));
  for (float t : sample.target) io::write_f32(out_, t);
  io::write_f32_array(out_, sample.data);
  if (!out_) throw InputError("failed writing " + path_.string());
  ++manifest_.sample_count;
  ++manifest_.chunks_per_video[sample.video_id];
}

DatasetManifest DatasetWriter::finish() {
  if (finished_) return manifest_;
  constexpr std::streamoff count_offset = 4 + 2 + 1 + 8 + 4 * 4 + 8;
  out_.seekp(count_offset);
  io::write_u32(out_, manifest_.sample_count);
  out_.close();
  if (!out_) throw InputError("failed finalising " + path_.string());
  finished_ = true;
  return manifest_;
}

DatasetManifest write_dataset(const std::filesystem::path& path, std::span<const SampleTensor> samples,
                              DatasetKind kind, const flow::FarnebackParams& params) {
  DatasetWriter writer(path, kind, params);
  for (const auto& sample : samples) writer.write(sample);
  return writer.finish();
}

DatasetFile::DatasetFile(const std::filesystem::path& path) : path_(path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open dataset " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw InputError("not a dataset file (bad magic): " + path.string());
  }
  const std::uint16_t version = io::read_u16(in);
  if (version != kVersion) {
    throw InputError("unsupported dataset version " + std::to_string(version) + " in " + path.string());
  }
  const std::uint8_t kind = io::read_u8(in);
  if (kind != static_cast<std::uint8_t>(DatasetKind::D1) && kind != static_cast<std::uint8_t>(DatasetKind::D2)) {
    throw InputError("unknown dataset kind " + std::to_string(kind) + " in " + path.string());
  }
  manifest_.kind = static_cast<DatasetKind>(kind);
  manifest_.flow_params = read_flow_params(in);
  manifest_.sample_count = io::read_u32(in);

  const std::uint64_t file_size = std::filesystem::file_size(path);
  const auto plausible = std::min<std::uint64_t>(manifest_.sample_count, file_size / kTensorBytes + 1);
  metas_.reserve(plausible);
  tensor_offsets_.reserve(plausible);
  for (std::uint32_t i = 0; i < manifest_.sample_count; ++i) {
    SampleMeta meta;
    meta.video_id = io::read_string(in);
    meta.start_frame = static_cast<int>(io::read_u32(in));
    const std::uint8_t task = io::read_u8(in);
    if (task > 1) throw InputError("unknown task code in " + path.string());
    meta.task = static_cast<Task>(task);
    for (float& t : meta.target) t = io::read_f32(in);
    const auto offset = static_cast<std::uint64_t>(in.tellg());
    if (offset + kTensorBytes > file_size) throw InputError("truncated dataset file " + path.string());
    in.seekg(static_cast<std::streamoff>(offset + kTensorBytes));
    tensor_offsets_.push_back(offset);
    ++manifest_.chunks_per_video[meta.video_id];
    metas_.push_back(std::move(meta));
  }
  if (static_cast<std::uint64_t>(in.tellg()) != file_size) {
    throw InputError("trailing bytes after the last sample in " + path.string());
  }
}

SampleTensor DatasetFile::load(std::size_t index) const {
  const SampleMeta& m = metas_.at(index);
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw InputError("cannot open dataset " + path_.string());
  in.seekg(static_cast<std::streamoff>(tensor_offsets_[index]));
  SampleTensor sample;
  sample.video_id = m.video_id;
  sample.start_frame = m.start_frame;
  sample.task = m.task;
  sample.kind = manifest_.kind;
  sample.target = m.target;
  sample.data.resize(kSampleValues);
  io::read_f32_array(in, sample.data);
  return sample;
}

std::vector<SampleTensor> read_dataset(const std::filesystem::path& path) {
  const DatasetFile file(path);
  std::vector<SampleTensor> samples;
  samples.reserve(file.size());
  for (std::size_t i = 0; i < file.size(); ++i) samples.push_back(file.load(i));
  return samples;
}

void write_manifest_json(const std::filesystem::path& path, const DatasetManifest& manifest) {
  const auto& p = manifest.flow_params;
  nlohmann::json doc = {
      {"format", "SPRM"},
      {"version", kVersion},
      {"dataset_kind", to_string(manifest.kind)},
      {"flow_params",
       {{"pyr_scale", p.pyr_scale},
        {"levels", p.levels},
        {"winsize", p.winsize},
        {"iterations", p.iterations},
        {"poly_n", p.poly_n},
        {"poly_sigma", p.poly_sigma}}},
      {"sample_count", manifest.sample_count},
      {"chunks_per_video", manifest.chunks_per_video},
  };
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace spermflow::dataset
