#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "spermflow/dataset.hpp"
#include "spermflow/errors.hpp"

namespace spermflow::dataset {
namespace {

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string_view rest(line);
  while (true) {
    const auto comma = rest.find(',');
    fields.push_back(trim(rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return fields;
}

double parse_number(const std::string& field, const std::filesystem::path& path, int line_no) {
  double value = 0.0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || field.empty()) {
    throw InputError(path.string() + ":" + std::to_string(line_no) + ": not a number: '" + field + "'");
  }
  return value;
}

// Reads non-empty lines after checking the header; yields (line number, fields).
std::vector<std::pair<int, std::vector<std::string>>> read_csv(const std::filesystem::path& path,
                                                               const std::string& expected_header) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != expected_header) {
    throw InputError(path.string() + ": expected header '" + expected_header + "'");
  }
  std::vector<std::pair<int, std::vector<std::string>>> rows;
  int line_no = 1;
  const std::size_t columns = split_csv_line(expected_header).size();
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != columns) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(columns) +
                       " fields, got " + std::to_string(fields.size()));
    }
    rows.emplace_back(line_no, std::move(fields));
  }
  return rows;
}

}  // namespace

std::string to_string(DatasetKind kind) { return kind == DatasetKind::D1 ? "D1" : "D2"; }
std::string to_string(Task task) { return task == Task::Motility ? "motility" : "morphology"; }

DatasetKind parse_dataset_kind(std::string_view text) {
  if (text == "D1" || text == "d1") return DatasetKind::D1;
  if (text == "D2" || text == "d2") return DatasetKind::D2;
  throw InputError("unknown dataset kind '" + std::string(text) + "' (expected D1 or D2)");
}

Task parse_task(std::string_view text) {
  if (text == "motility") return Task::Motility;
  if (text == "morphology") return Task::Morphology;
  throw InputError("unknown task '" + std::string(text) + "' (expected motility or morphology)");
}

std::vector<LabelRecord> load_labels(const std::filesystem::path& path) {
  const auto rows = read_csv(
      path, "video_id,progressive,non_progressive,immotile,head_defects,tail_defects,midpiece_neck_defects");
  std::vector<LabelRecord> records;
  std::set<std::string> seen;
  for (const auto& [line_no, fields] : rows) {
    const std::string where = path.string() + ":" + std::to_string(line_no);
    LabelRecord rec;
    rec.video_id = fields[0];
    if (rec.video_id.empty()) throw InputError(where + ": empty video_id");
    if (!seen.insert(rec.video_id).second) throw InputError(where + ": duplicate video_id " + rec.video_id);
    for (int i = 0; i < 3; ++i) {
      rec.motility[i] = parse_number(fields[1 + i], path, line_no);
      rec.morphology[i] = parse_number(fields[4 + i], path, line_no);
    }
    for (double v : rec.motility) {
      if (!(v >= 0.0 && v <= 100.0)) throw InputError(where + ": motility percentage outside [0, 100]");
    }
    for (double v : rec.morphology) {
      if (!(v >= 0.0 && v <= 100.0)) throw InputError(where + ": morphology percentage outside [0, 100]");
    }
    const double sum = rec.motility[0] + rec.motility[1] + rec.motility[2];
    if (std::abs(sum - 100.0) > 1.0) {
      std::ostringstream msg;
      msg << where << ": motility percentages sum to " << sum << ", expected 100 +- 1";
      throw InputError(msg.str());
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::uint64_t stable_hash(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    hash ^= ch;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

std::string participant_of(std::string_view video_id) {
  return std::string(video_id.substr(0, video_id.find('_')));
}

FoldAssignment::FoldAssignment(std::map<std::string, int> folds) : folds_(std::move(folds)) {
  for (const auto& [video, fold] : folds_) {
    if (fold < 0 || fold >= kFoldCount) {
      throw InputError("fold index " + std::to_string(fold) + " for " + video + " outside {0, 1, 2}");
    }
  }
}

int FoldAssignment::fold_of(const std::string& video_id) const {
  const auto it = folds_.find(video_id);
  if (it == folds_.end()) throw InputError("video " + video_id + " has no fold assignment");
  return it->second;
}

std::vector<std::string> FoldAssignment::videos_in(int fold) const {
  std::vector<std::string> videos;
  for (const auto& [video, f] : folds_) {
    if (f == fold) videos.push_back(video);
  }
  return videos;
}

FoldAssignment assign_folds(const std::vector<LabelRecord>& labels,
                            const std::optional<std::filesystem::path>& fold_file) {
  std::map<std::string, int> folds;
  if (fold_file) {
    std::map<std::string, int> listed;
    for (const auto& [line_no, fields] : read_csv(*fold_file, "video_id,fold")) {
      const double fold = parse_number(fields[1], *fold_file, line_no);
      if (fold != 0.0 && fold != 1.0 && fold != 2.0) {
        throw InputError(fold_file->string() + ":" + std::to_string(line_no) + ": fold index " + fields[1] +
                         " outside {0, 1, 2}");
      }
      listed[fields[0]] = static_cast<int>(fold);
    }
    for (const auto& rec : labels) {
      const auto it = listed.find(rec.video_id);
      if (it == listed.end()) {
        throw InputError("video " + rec.video_id + " is labelled but missing from " + fold_file->string());
      }
      folds[rec.video_id] = it->second;
    }
  } else {
    for (const auto& rec : labels) {
      folds[rec.video_id] = static_cast<int>(stable_hash(participant_of(rec.video_id)) % kFoldCount);
    }
  }
  return FoldAssignment(std::move(folds));
}

}  // namespace spermflow::dataset
