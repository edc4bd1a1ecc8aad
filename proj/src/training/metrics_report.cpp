#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "spermflow/errors.hpp"
#include "spermflow/metrics_report.hpp"

namespace spermflow::training {
namespace {

std::string format_exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_table(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, sep)) fields.push_back(field);
  if (!line.empty() && line.back() == sep) fields.emplace_back();
  return fields;
}

void check_fold(int fold) {
  if (fold < 1 || fold > MetricsReport::kFolds) throw InputError("fold must be 1, 2 or 3, got " + std::to_string(fold));
}

constexpr double kAverageTolerance = 1e-9;

}  // namespace

void MetricsReport::set(const MetricsKey& key, int fold, double mae) {
  check_fold(fold);
  if (!(mae >= 0.0) || !std::isfinite(mae)) throw InputError("MAE must be finite and non-negative");
  cells_[key][static_cast<std::size_t>(fold - 1)] = mae;
}

std::optional<double> MetricsReport::fold_mae(const MetricsKey& key, int fold) const {
  check_fold(fold);
  const auto it = cells_.find(key);
  if (it == cells_.end()) return std::nullopt;
  return it->second[static_cast<std::size_t>(fold - 1)];
}

double MetricsReport::average(const MetricsKey& key) const {
  const auto it = cells_.find(key);
  if (it == cells_.end()) throw InputError("no results for this cell");
  double sum = 0.0;
  for (int f = 0; f < kFolds; ++f) {
    if (!it->second[f]) throw InputError("fold " + std::to_string(f + 1) + " missing from cell");
    sum += *it->second[f];
  }
  return sum / kFolds;
}

std::vector<MetricsKey> MetricsReport::cells() const {
  std::vector<MetricsKey> keys;
  for (const auto& [key, folds] : cells_) keys.push_back(key);
  return keys;
}

void MetricsReport::merge(const MetricsReport& other) {
  for (const auto& [key, folds] : other.cells_) {
    auto& mine = cells_[key];
    for (int f = 0; f < kFolds; ++f) {
      if (!folds[f]) continue;
      if (mine[f]) {
        throw InputError("duplicate result for " + dataset::to_string(key.input) + "-" + nn::to_string(key.method) +
                         " " + dataset::to_string(key.task) + " fold " + std::to_string(f + 1));
      }
      mine[f] = folds[f];
    }
  }
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os << "input,method,task,fold,mae\n";
  for (const auto& [key, folds] : cells_) {
    const std::string prefix =
        dataset::to_string(key.input) + "," + nn::to_string(key.method) + "," + dataset::to_string(key.task) + ",";
    bool complete = true;
    for (int f = 0; f < kFolds; ++f) {
      if (folds[f]) {
        os << prefix << f + 1 << "," << format_exact(*folds[f]) << "\n";
      } else {
        complete = false;
      }
    }
    if (complete) os << prefix << "avg," << format_exact(average(key)) << "\n";
  }
  return os.str();
}

void MetricsReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << to_csv();
}

MetricsReport MetricsReport::from_csv(const std::string& text, const std::string& origin) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "input,method,task,fold,mae") {
    throw InputError(origin + ": expected header input,method,task,fold,mae");
  }
  MetricsReport report;
  std::map<MetricsKey, double> averages;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    const std::string where = origin + ":" + std::to_string(line_no);
    if (fields.size() != 5) throw InputError(where + ": expected 5 fields");
    MetricsKey key;
    double mae = 0.0;
    try {
      key.input = dataset::parse_dataset_kind(fields[0]);
      key.method = nn::parse_head(fields[1]);
      key.task = dataset::parse_task(fields[2]);
      std::size_t used = 0;
      mae = std::stod(fields[4], &used);
      if (used != fields[4].size()) throw InputError("trailing characters");
    } catch (const std::exception& e) {
      throw InputError(where + ": " + e.what());
    }
    if (fields[3] == "avg") {
      averages[key] = mae;
    } else if (fields[3] == "1" || fields[3] == "2" || fields[3] == "3") {
      const int fold = fields[3][0] - '0';
      if (report.fold_mae(key, fold)) throw InputError(where + ": duplicate fold row");
      report.set(key, fold, mae);
    } else {
      throw InputError(where + ": fold must be 1, 2, 3 or avg");
    }
  }
  for (const auto& [key, value] : averages) {
    if (std::abs(report.average(key) - value) > kAverageTolerance) {
      throw InputError(origin + ": average row disagrees with its fold rows");
    }
  }
  return report;
}

MetricsReport MetricsReport::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_csv(buf.str(), path.string());
}

std::string MetricsReport::render_table() const {
  using dataset::DatasetKind;
  using dataset::Task;
  std::vector<std::pair<DatasetKind, nn::Head>> groups;
  for (DatasetKind d : {DatasetKind::D1, DatasetKind::D2}) {
    for (nn::Head m : {nn::Head::M1, nn::Head::M2}) {
      const bool present = cells_.count({d, m, Task::Motility}) || cells_.count({d, m, Task::Morphology});
      if (present) groups.emplace_back(d, m);
    }
  }

  auto cell = [&](const MetricsKey& key, int fold) -> std::string {
    const auto it = cells_.find(key);
    if (it == cells_.end()) return "-";
    if (fold == 0) {
      for (const auto& f : it->second) {
        if (!f) return "-";
      }
      return format_table(average(key));
    }
    const auto& v = it->second[static_cast<std::size_t>(fold - 1)];
    return v ? format_table(*v) : "-";
  };

  std::ostringstream os;
  const auto row = [&os](const std::string& a, const std::string& b, const std::string& c, const std::string& d,
                         const std::string& e) {
    os << std::left << std::setw(7) << a << std::setw(8) << b << std::setw(9) << c << std::right << std::setw(14)
       << d << std::setw(16) << e << "\n";
  };
  row("Input", "Method", "Fold", "Motility MAE", "Morphology MAE");
  os << std::string(54, '-') << "\n";
  for (const auto& [d, m] : groups) {
    const MetricsKey mot{d, m, Task::Motility};
    const MetricsKey mor{d, m, Task::Morphology};
    for (int fold = 1; fold <= kFolds; ++fold) {
      row(dataset::to_string(d), nn::to_string(m), "Fold " + std::to_string(fold), cell(mot, fold), cell(mor, fold));
    }
    row(dataset::to_string(d), nn::to_string(m), "Average", cell(mot, 0), cell(mor, 0));
  }
  return os.str();
}

}  // namespace spermflow::training
