#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cwsynth/matrix.hpp"

namespace cwsynth {

/// One categorical column: name and its ordered, duplicate-free level list.
struct Column {
  std::string name;
  std::vector<std::string> levels;
  // Single observed level. Retained, but correlation metrics treat it as undefined.
  bool constant = false;

  friend bool operator==(const Column&, const Column&) = default;
};

/// Column layout of a categorical table and of its block-structured one-hot view.
class DatasetSchema {
 public:
  explicit DatasetSchema(std::vector<Column> columns);

  const std::vector<Column>& columns() const noexcept { return columns_; }
  const Column& column(std::size_t j) const { return columns_.at(j); }
  std::size_t num_columns() const noexcept { return columns_.size(); }
  std::size_t levels(std::size_t j) const { return columns_.at(j).levels.size(); }
  std::size_t offset(std::size_t j) const { return offsets_.at(j); }
  std::size_t onehot_width() const noexcept { return width_; }
  std::vector<std::size_t> block_sizes() const;

  std::optional<std::uint32_t> level_index(std::size_t j, std::string_view value) const;

  /// Stable 64-bit FNV-1a hash over names and levels; stamped into weight files.
  std::uint64_t hash() const noexcept;

  nlohmann::json to_json() const;
  static DatasetSchema from_json(const nlohmann::json& j);

  friend bool operator==(const DatasetSchema& a, const DatasetSchema& b) {
    return a.columns_ == b.columns_;
  }

 private:
  std::vector<Column> columns_;
  std::vector<std::size_t> offsets_;
  std::size_t width_ = 0;
};

using SchemaPtr = std::shared_ptr<const DatasetSchema>;

/// n x p table of level indices. Immutable after construction.
class CategoricalDataset {
 public:
  CategoricalDataset(SchemaPtr schema, std::vector<std::uint32_t> codes);

  const DatasetSchema& schema() const noexcept { return *schema_; }
  const SchemaPtr& schema_ptr() const noexcept { return schema_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return schema_->num_columns(); }

  std::uint32_t at(std::size_t i, std::size_t j) const noexcept { return codes_[i * cols() + j]; }
  std::span<const std::uint32_t> row(std::size_t i) const noexcept {
    return {codes_.data() + i * cols(), cols()};
  }
  std::span<const std::uint32_t> codes() const noexcept { return codes_; }
  std::vector<std::uint32_t> column_codes(std::size_t j) const;

  CategoricalDataset subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const CategoricalDataset& a, const CategoricalDataset& b) {
    return *a.schema_ == *b.schema_ && a.codes_ == b.codes_;
  }

 private:
  SchemaPtr schema_;
  std::vector<std::uint32_t> codes_;
  std::size_t rows_ = 0;
};

/// Loaded dataset plus diagnostics collected while parsing.
struct LoadResult {
  CategoricalDataset dataset;
  std::vector<std::string> warnings;
};

/// Builds the schema from the data: levels are the sorted distinct values per column.
LoadResult read_csv(std::istream& in, bool header);
LoadResult load_csv(const std::filesystem::path& path, bool header = true);

/// Encodes against an existing schema; unknown levels or column mismatch raise DataError.
CategoricalDataset read_csv(std::istream& in, bool header, SchemaPtr schema);
CategoricalDataset load_csv(const std::filesystem::path& path, bool header, SchemaPtr schema);

void write_csv(std::ostream& out, const CategoricalDataset& ds, bool header = true);
void save_csv(const std::filesystem::path& path, const CategoricalDataset& ds, bool header = true);

void save_schema(const std::filesystem::path& path, const DatasetSchema& schema);
SchemaPtr load_schema(const std::filesystem::path& path);

/// Hard block one-hot encoding, n x onehot_width.
Matrix to_onehot(const CategoricalDataset& ds);

enum class DecodeMode { argmax, sample };

/// Decodes per-block PMFs back to level indices. Blocks must sum to 1 within 1e-6.
CategoricalDataset from_onehot(const Matrix& probs, SchemaPtr schema, DecodeMode mode,
                               std::uint64_t seed = 0);

/// Seeded shuffled partition; the first part has ceil(n * (1 - test_fraction)) rows.
std::pair<CategoricalDataset, CategoricalDataset> split(const CategoricalDataset& ds,
                                                        double test_fraction, std::uint64_t seed);

/// Empirical PMF of column j over the schema's support.
std::vector<double> marginal_pmf(const CategoricalDataset& ds, std::size_t j);

/// Ten 3-level columns drawn from a fixed Bayesian network with known dependence.
CategoricalDataset make_toy_bayes_net(std::size_t n, std::uint64_t seed);

}  // namespace cwsynth
