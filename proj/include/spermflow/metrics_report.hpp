#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spermflow/dataset.hpp"
#include "spermflow/model.hpp"

namespace spermflow::training {

struct MetricsKey {
  dataset::DatasetKind input = dataset::DatasetKind::D1;
  nn::Head method = nn::Head::M1;
  dataset::Task task = dataset::Task::Motility;
  friend auto operator<=>(const MetricsKey&, const MetricsKey&) = default;
};

// Fold MAEs per (input, method, task) cell, laid out as a results
// table: Fold 1..3 plus their average.
class MetricsReport {
 public:
  static constexpr int kFolds = 3;

  void set(const MetricsKey& key, int fold, double mae);  // fold in 1..3
  std::optional<double> fold_mae(const MetricsKey& key, int fold) const;
  // Arithmetic mean of the three folds; throws if a fold is missing.
  double average(const MetricsKey& key) const;
  std::vector<MetricsKey> cells() const;
  bool empty() const { return cells_.empty(); }

  // Throws InputError when both reports define the same fold of a cell.
  void merge(const MetricsReport& other);

  // `input,method,task,fold,mae` with rows fold=1,2,3 and fold=avg per cell.
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
  static MetricsReport from_csv(const std::string& text, const std::string& origin = "<csv>");
  static MetricsReport read_csv(const std::filesystem::path& path);

  // Plain-text table: Input | Method | Fold | Motility MAE | Morphology MAE.
  std::string render_table() const;

 private:
  std::map<MetricsKey, std::array<std::optional<double>, kFolds>> cells_;
};

}  // namespace spermflow::training
