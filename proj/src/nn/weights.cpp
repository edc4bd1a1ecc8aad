#include <fstream>
#include <map>

#include "spermflow/binary_io.hpp"
#include "spermflow/errors.hpp"
#include "spermflow/model.hpp"

namespace spermflow::nn {
namespace {

constexpr char kMagic[4] = {'S', 'P', 'W', 'T'};
constexpr std::uint16_t kVersion = 1;
constexpr char kFirstConv[] = "conv1.weight";

struct StoredTensor {
  Shape shape;
  std::vector<float> values;
};

std::map<std::string, StoredTensor> read_weight_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open weights " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string(magic, 4) != std::string(kMagic, 4)) {
    throw InputError("not a weight file (bad magic): " + path.string());
  }
  const std::uint16_t version = io::read_u16(in);
  if (version != kVersion) throw InputError("unsupported weight file version " + std::to_string(version));
  const std::uint32_t count = io::read_u32(in);
  std::map<std::string, StoredTensor> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = io::read_string(in);
    StoredTensor t;
    const std::uint8_t rank = io::read_u8(in);
    if (rank > 8) throw InputError("implausible rank for " + name);
    std::uint64_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      t.shape.push_back(io::read_u32(in));
      numel *= static_cast<std::uint64_t>(t.shape.back());
    }
    if (numel > (1ull << 31)) throw InputError("implausible tensor size for " + name);
    t.values.resize(numel);
    io::read_f32_array(in, t.values);
    if (!entries.emplace(name, std::move(t)).second) throw InputError("duplicate tensor " + name + " in weight file");
  }
  return entries;
}

}  // namespace

void export_weights(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  const auto tensors = model.state();
  out.write(kMagic, 4);
  io::write_u16(out, kVersion);
  io::write_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    io::write_string(out, name);
    io::write_u8(out, static_cast<std::uint8_t>(tensor.rank()));
    for (auto d : tensor.shape()) io::write_u32(out, static_cast<std::uint32_t>(d));
    io::write_f32_array(out, tensor.values());
  }
  if (!out) throw InputError("failed writing " + path.string());
}

void import_weights(Model& model, const std::filesystem::path& path) {
  auto entries = read_weight_file(path);
  auto targets = model.state();

  // Validate everything before touching the model.
  for (const auto& [name, tensor] : targets) {
    const auto it = entries.find(name);
    if (it == entries.end()) throw InputError("weight file " + path.string() + " is missing parameter " + name);
    const Shape& stored = it->second.shape;
    if (stored == tensor.shape()) continue;
    const bool adaptable = name == kFirstConv && stored.size() == 4 && stored[0] == tensor.dim(0) &&
                           stored[2] == tensor.dim(2) && stored[3] == tensor.dim(3) && stored[1] > 0 &&
                           tensor.dim(1) % stored[1] == 0;
    if (!adaptable) {
      throw InputError("shape mismatch for " + name + ": file " + shape_str(stored) + ", model " +
                       shape_str(tensor.shape()));
    }
  }
  if (entries.size() != targets.size()) {
    for (const auto& [name, stored] : entries) {
      bool known = false;
      for (const auto& t : targets) known = known || t.name == name;
      if (!known) throw InputError("weight file has unknown parameter " + name);
    }
  }

  for (auto& [name, tensor] : targets) {
    const StoredTensor& stored = entries.at(name);
    auto dst = tensor.values();
    if (stored.shape == tensor.shape()) {
      std::copy(stored.values.begin(), stored.values.end(), dst.begin());
      continue;
    }
    // Tile source input channels across the wider conv and rescale so a
    // repeated input reproduces the narrower network's activations.
    const std::int64_t out_ch = tensor.dim(0);
    const std::int64_t in_model = tensor.dim(1);
    const std::int64_t in_file = stored.shape[1];
    const std::int64_t kernel = tensor.dim(2) * tensor.dim(3);
    const float scale = static_cast<float>(in_file) / static_cast<float>(in_model);
    for (std::int64_t o = 0; o < out_ch; ++o) {
      for (std::int64_t c = 0; c < in_model; ++c) {
        const float* src = &stored.values[((o * in_file) + c % in_file) * kernel];
        float* out = &dst[((o * in_model) + c) * kernel];
        for (std::int64_t k = 0; k < kernel; ++k) out[k] = src[k] * scale;
      }
    }
  }
}

}  // namespace spermflow::nn
