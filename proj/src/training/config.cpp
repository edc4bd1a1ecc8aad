#include "spermflow/config.hpp"

#include <fstream>
#include <set>

#include "spermflow/errors.hpp"

namespace spermflow::training {
namespace {

using nlohmann::json;

void require_object(const json& doc, const std::string& where, const std::set<std::string>& allowed) {
  if (!doc.is_object()) throw InputError(where + " must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (!allowed.count(key)) throw InputError("unknown configuration key '" + where + key + "'");
  }
}

template <typename T>
void read_key(const json& doc, const char* key, T& out, const std::string& where) {
  const auto it = doc.find(key);
  if (it == doc.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception&) {
    throw InputError("configuration key '" + where + key + "' has the wrong type");
  }
}

std::string placement_name(dataset::ChunkPlacement p) {
  return p == dataset::ChunkPlacement::Uniform ? "uniform" : "random";
}

dataset::ChunkPlacement parse_placement(const std::string& text) {
  if (text == "uniform") return dataset::ChunkPlacement::Uniform;
  if (text == "random") return dataset::ChunkPlacement::Random;
  throw InputError("unknown chunk placement '" + text + "' (expected uniform or random)");
}

json model_to_json(const nn::ModelConfig& m) {
  return json{{"variant", nn::to_string(m.variant)},   {"in_channels", m.in_channels},
              {"head", nn::to_string(m.head)},         {"mlp_widths", m.mlp_widths},
              {"dropout_probs", m.dropout_probs},      {"num_outputs", m.num_outputs},
              {"zero_init_head", m.zero_init_head}};
}

nn::ModelConfig model_from_json(const json& doc) {
  require_object(doc, "model.",
                 {"variant", "in_channels", "head", "mlp_widths", "dropout_probs", "num_outputs", "zero_init_head"});
  nn::ModelConfig m;
  std::string variant = nn::to_string(m.variant);
  std::string head = nn::to_string(m.head);
  read_key(doc, "variant", variant, "model.");
  read_key(doc, "head", head, "model.");
  m.variant = nn::parse_variant(variant);
  m.head = nn::parse_head(head);
  read_key(doc, "in_channels", m.in_channels, "model.");
  read_key(doc, "mlp_widths", m.mlp_widths, "model.");
  read_key(doc, "dropout_probs", m.dropout_probs, "model.");
  read_key(doc, "num_outputs", m.num_outputs, "model.");
  read_key(doc, "zero_init_head", m.zero_init_head, "model.");
  return m;
}

const std::set<std::string> kTrainKeys{"task", "epochs", "batch_size", "seed", "dataset_kind", "learning_rate",
                                       "model", "initial_weights"};

void read_train_keys(const json& doc, TrainConfig& c) {
  std::string task = dataset::to_string(c.task);
  std::string kind = dataset::to_string(c.dataset_kind);
  read_key(doc, "task", task, "");
  read_key(doc, "dataset_kind", kind, "");
  c.task = dataset::parse_task(task);
  c.dataset_kind = dataset::parse_dataset_kind(kind);
  read_key(doc, "epochs", c.epochs, "");
  read_key(doc, "batch_size", c.batch_size, "");
  read_key(doc, "seed", c.seed, "");
  read_key(doc, "learning_rate", c.learning_rate, "");
  read_key(doc, "initial_weights", c.initial_weights, "");
  if (const auto it = doc.find("model"); it != doc.end()) c.model = model_from_json(*it);
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  flow.validate();
  if (n_chunks < 1) throw InputError("preprocess.n_chunks must be at least 1");
}

json to_json(const TrainConfig& c) {
  return json{{"task", dataset::to_string(c.task)},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"dataset_kind", dataset::to_string(c.dataset_kind)},
              {"learning_rate", c.learning_rate},
              {"model", model_to_json(c.model)},
              {"initial_weights", c.initial_weights}};
}

json to_json(const flow::FarnebackParams& p) {
  return json{{"pyr_scale", p.pyr_scale}, {"levels", p.levels},   {"winsize", p.winsize},
              {"iterations", p.iterations}, {"poly_n", p.poly_n}, {"poly_sigma", p.poly_sigma}};
}

json to_json(const RunConfig& c) {
  json doc = to_json(c.train);
  doc["flow"] = to_json(c.flow);
  doc["preprocess"] = json{{"n_chunks", c.n_chunks}, {"placement", placement_name(c.placement)}};
  return doc;
}

TrainConfig train_config_from_json(const json& doc) {
  require_object(doc, "", kTrainKeys);
  TrainConfig c;
  read_train_keys(doc, c);
  c.validate();
  return c;
}

flow::FarnebackParams flow_params_from_json(const json& doc) {
  require_object(doc, "flow.", {"pyr_scale", "levels", "winsize", "iterations", "poly_n", "poly_sigma"});
  flow::FarnebackParams p;
  read_key(doc, "pyr_scale", p.pyr_scale, "flow.");
  read_key(doc, "levels", p.levels, "flow.");
  read_key(doc, "winsize", p.winsize, "flow.");
  read_key(doc, "iterations", p.iterations, "flow.");
  read_key(doc, "poly_n", p.poly_n, "flow.");
  read_key(doc, "poly_sigma", p.poly_sigma, "flow.");
  p.validate();
  return p;
}

RunConfig run_config_from_json(const json& doc) {
  auto allowed = kTrainKeys;
  allowed.insert({"flow", "preprocess"});
  require_object(doc, "", allowed);
  RunConfig c;
  read_train_keys(doc, c.train);
  if (const auto it = doc.find("flow"); it != doc.end()) c.flow = flow_params_from_json(*it);
  if (const auto it = doc.find("preprocess"); it != doc.end()) {
    require_object(*it, "preprocess.", {"n_chunks", "placement"});
    read_key(*it, "n_chunks", c.n_chunks, "preprocess.");
    std::string placement = placement_name(c.placement);
    read_key(*it, "placement", placement, "preprocess.");
    c.placement = parse_placement(placement);
  }
  c.validate();
  return c;
}

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw InputError("override '" + std::string(assignment) + "' must look like key=value");
  }
  const std::string path(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));

  json* node = &doc;
  std::size_t pos = 0;
  while (true) {
    const auto dot = path.find('.', pos);
    const std::string key = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (!node->is_object() || !node->contains(key)) throw InputError("unknown configuration key '" + path + "'");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  *node = std::move(value);
}

}  // namespace spermflow::training
