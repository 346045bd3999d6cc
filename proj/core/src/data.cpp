#include "cwsynth/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "cwsynth/error.hpp"
#include "cwsynth/random.hpp"

namespace cwsynth {

DatasetSchema::DatasetSchema(std::vector<Column> columns) : columns_(std::move(columns)) {
  if (columns_.empty()) throw DataError("schema must have at least one column");
  offsets_.reserve(columns_.size());
  for (const Column& c : columns_) {
    const std::set<std::string> distinct(c.levels.begin(), c.levels.end());
    if (distinct.size() != c.levels.size())
      throw DataError("column '" + c.name + "' has duplicate levels");
    if (c.levels.empty() || (c.levels.size() < 2 && !c.constant))
      throw DataError("column '" + c.name + "' needs at least two levels");
    offsets_.push_back(width_);
    width_ += c.levels.size();
  }
}

std::vector<std::size_t> DatasetSchema::block_sizes() const {
  std::vector<std::size_t> sizes;
  sizes.reserve(columns_.size());
  for (const Column& c : columns_) sizes.push_back(c.levels.size());
  return sizes;
}

std::optional<std::uint32_t> DatasetSchema::level_index(std::size_t j,
                                                        std::string_view value) const {
  const auto& lv = columns_.at(j).levels;
  // Levels are kept sorted for loaded schemas, but a schema may come from JSON in any order.
  for (std::size_t l = 0; l < lv.size(); ++l)
    if (lv[l] == value) return static_cast<std::uint32_t>(l);
  return std::nullopt;
}

std::uint64_t DatasetSchema::hash() const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::string_view s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  for (const Column& c : columns_) {
    mix(c.name);
    for (const auto& l : c.levels) mix(l);
    mix("|");
  }
  return h;
}

nlohmann::json DatasetSchema::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const Column& c : columns_)
    cols.push_back({{"name", c.name}, {"levels", c.levels}, {"constant", c.constant}});
  return {{"format", "cwsynth-schema"}, {"version", 1}, {"columns", cols}};
}

DatasetSchema DatasetSchema::from_json(const nlohmann::json& j) {
  try {
    std::vector<Column> cols;
    for (const auto& c : j.at("columns")) {
      cols.push_back({c.at("name").get<std::string>(), c.at("levels").get<std::vector<std::string>>(),
                      c.value("constant", false)});
    }
    return DatasetSchema(std::move(cols));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed schema: ") + e.what());
  }
}

CategoricalDataset::CategoricalDataset(SchemaPtr schema, std::vector<std::uint32_t> codes)
    : schema_(std::move(schema)), codes_(std::move(codes)) {
  if (!schema_) throw DataError("dataset requires a schema");
  const std::size_t p = schema_->num_columns();
  if (codes_.size() % p != 0) throw DataError("code count is not a multiple of column count");
  rows_ = codes_.size() / p;
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < p; ++j)
      if (codes_[i * p + j] >= schema_->levels(j))
        throw DataError("row " + std::to_string(i) + ", column '" + schema_->column(j).name +
                        "': level index out of range");
}

std::vector<std::uint32_t> CategoricalDataset::column_codes(std::size_t j) const {
  if (j >= cols()) throw DataError("column index out of range");
  std::vector<std::uint32_t> out(rows_);
  for (std::size_t i = 0; i < rows_; ++i) out[i] = at(i, j);
  return out;
}

CategoricalDataset CategoricalDataset::subset(std::span<const std::size_t> indices) const {
  std::vector<std::uint32_t> out;
  out.reserve(indices.size() * cols());
  for (std::size_t i : indices) {
    if (i >= rows_) throw DataError("subset index out of range");
    const auto r = row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return CategoricalDataset(schema_, std::move(out));
}

// ---------------------------------------------------------------------------
// CSV

namespace {

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::vector<std::string> split_fields(const std::string& line, std::size_t line_no) {
  if (line.find('"') != std::string::npos)
    throw DataError("line " + std::to_string(line_no) + ": quoted fields are not supported");
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

RawTable read_raw(std::istream& in, bool header) {
  RawTable t;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_fields(line, line_no);
    if (first) {
      width = fields.size();
      first = false;
      if (header) {
        t.header = std::move(fields);
        continue;
      }
    } else if (fields.size() != width) {
      throw DataError("ragged rows: line " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(width));
    }
    t.rows.push_back(std::move(fields));
  }
  if (in.bad()) throw DataError("read failure");
  if (t.rows.empty()) throw DataError("empty file: no data rows");
  if (!header) {
    for (std::size_t j = 0; j < width; ++j) t.header.push_back("col" + std::to_string(j + 1));
  }
  return t;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return in;
}

}  // namespace

LoadResult read_csv(std::istream& in, bool header) {
  RawTable t = read_raw(in, header);
  const std::size_t p = t.header.size();
  std::vector<Column> cols(p);
  std::vector<std::string> warnings;
  for (std::size_t j = 0; j < p; ++j) {
    std::set<std::string> distinct;
    for (const auto& r : t.rows) distinct.insert(r[j]);
    cols[j].name = t.header[j];
    cols[j].levels.assign(distinct.begin(), distinct.end());
    if (cols[j].levels.size() == 1) {
      cols[j].constant = true;
      warnings.push_back("column '" + cols[j].name + "' has a single distinct value; kept as constant");
    }
  }
  auto schema = std::make_shared<const DatasetSchema>(std::move(cols));
  std::vector<std::uint32_t> codes;
  codes.reserve(t.rows.size() * p);
  for (const auto& r : t.rows)
    for (std::size_t j = 0; j < p; ++j) codes.push_back(*schema->level_index(j, r[j]));
  return {CategoricalDataset(std::move(schema), std::move(codes)), std::move(warnings)};
}

LoadResult load_csv(const std::filesystem::path& path, bool header) {
  auto in = open_input(path);
  return read_csv(in, header);
}

CategoricalDataset read_csv(std::istream& in, bool header, SchemaPtr schema) {
  RawTable t = read_raw(in, header);
  const std::size_t p = schema->num_columns();
  if (t.header.size() != p)
    throw DataError("column count " + std::to_string(t.header.size()) +
                    " does not match schema (" + std::to_string(p) + ")");
  if (header) {
    for (std::size_t j = 0; j < p; ++j)
      if (t.header[j] != schema->column(j).name)
        throw DataError("column '" + t.header[j] + "' does not match schema column '" +
                        schema->column(j).name + "'");
  }
  std::vector<std::uint32_t> codes;
  codes.reserve(t.rows.size() * p);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      auto idx = schema->level_index(j, t.rows[i][j]);
      if (!idx)
        throw DataError("row " + std::to_string(i + 1) + ": level '" + t.rows[i][j] +
                        "' is not in the schema for column '" + schema->column(j).name + "'");
      codes.push_back(*idx);
    }
  }
  return CategoricalDataset(std::move(schema), std::move(codes));
}

CategoricalDataset load_csv(const std::filesystem::path& path, bool header, SchemaPtr schema) {
  auto in = open_input(path);
  return read_csv(in, header, std::move(schema));
}

void write_csv(std::ostream& out, const CategoricalDataset& ds, bool header) {
  const auto& s = ds.schema();
  if (header) {
    for (std::size_t j = 0; j < s.num_columns(); ++j) out << (j ? "," : "") << s.column(j).name;
    out << '\n';
  }
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (std::size_t j = 0; j < s.num_columns(); ++j)
      out << (j ? "," : "") << s.column(j).levels[ds.at(i, j)];
    out << '\n';
  }
}

void save_csv(const std::filesystem::path& path, const CategoricalDataset& ds, bool header) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  write_csv(out, ds, header);
  if (!out) throw DataError("write failure on '" + path.string() + "'");
}

void save_schema(const std::filesystem::path& path, const DatasetSchema& schema) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << schema.to_json().dump(2) << '\n';
}

SchemaPtr load_schema(const std::filesystem::path& path) {
  auto in = open_input(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed schema file '" + path.string() + "': " + e.what());
  }
  return std::make_shared<const DatasetSchema>(DatasetSchema::from_json(j));
}

// ---------------------------------------------------------------------------
// Encodings

Matrix to_onehot(const CategoricalDataset& ds) {
  const auto& s = ds.schema();
  Matrix m(ds.rows(), s.onehot_width());
  for (std::size_t i = 0; i < ds.rows(); ++i)
    for (std::size_t j = 0; j < s.num_columns(); ++j) m(i, s.offset(j) + ds.at(i, j)) = 1.0;
  return m;
}

CategoricalDataset from_onehot(const Matrix& probs, SchemaPtr schema, DecodeMode mode,
                               std::uint64_t seed) {
  const auto& s = *schema;
  if (probs.cols() != s.onehot_width())
    throw ShapeError("from_onehot: width " + std::to_string(probs.cols()) + " != " +
                     std::to_string(s.onehot_width()));
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::uint32_t> codes(probs.rows() * s.num_columns());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    for (std::size_t j = 0; j < s.num_columns(); ++j) {
      const double* block = probs.row(i).data() + s.offset(j);
      const std::size_t t = s.levels(j);
      double total = 0.0;
      for (std::size_t l = 0; l < t; ++l) {
        if (!(block[l] >= 0.0)) throw DataError("from_onehot: negative or NaN probability");
        total += block[l];
      }
      if (std::abs(total - 1.0) > 1e-6)
        throw DataError("from_onehot: block " + std::to_string(j) + " of row " +
                        std::to_string(i) + " sums to " + std::to_string(total));
      std::uint32_t pick = 0;
      if (mode == DecodeMode::argmax) {
        for (std::size_t l = 1; l < t; ++l)
          if (block[l] > block[pick]) pick = static_cast<std::uint32_t>(l);
      } else {
        const double u = unif(rng) * total;
        double acc = 0.0;
        pick = static_cast<std::uint32_t>(t);
        for (std::size_t l = 0; l < t; ++l) {
          acc += block[l];
          if (u < acc && block[l] > 0.0) {
            pick = static_cast<std::uint32_t>(l);
            break;
          }
        }
        if (pick == t) {
          // u landed on the rounding tail; take the last level with mass.
          for (std::size_t l = t; l-- > 0;)
            if (block[l] > 0.0) {
              pick = static_cast<std::uint32_t>(l);
              break;
            }
        }
      }
      codes[i * s.num_columns() + j] = pick;
    }
  }
  return CategoricalDataset(std::move(schema), std::move(codes));
}

std::pair<CategoricalDataset, CategoricalDataset> split(const CategoricalDataset& ds,
                                                        double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("test fraction must lie in (0, 1)");
  const std::size_t n = ds.rows();
  if (n < 2) throw DataError("split needs at least two rows");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  auto n_train = static_cast<std::size_t>(
      std::ceil(static_cast<double>(n) * (1.0 - test_fraction) - 1e-9));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  const std::span<const std::size_t> all(idx);
  return {ds.subset(all.first(n_train)), ds.subset(all.subspan(n_train))};
}

std::vector<double> marginal_pmf(const CategoricalDataset& ds, std::size_t j) {
  if (j >= ds.cols()) throw DataError("marginal_pmf: column index out of range");
  std::vector<double> pmf(ds.schema().levels(j), 0.0);
  if (ds.rows() == 0) return pmf;
  std::vector<std::size_t> counts(pmf.size(), 0);
  for (std::size_t i = 0; i < ds.rows(); ++i) ++counts[ds.at(i, j)];
  for (std::size_t l = 0; l < pmf.size(); ++l)
    pmf[l] = static_cast<double>(counts[l]) / static_cast<double>(ds.rows());
  return pmf;
}

// ---------------------------------------------------------------------------
// Toy benchmark

CategoricalDataset make_toy_bayes_net(std::size_t n, std::uint64_t seed) {
  constexpr std::size_t p = 10;
  std::vector<Column> cols;
  for (std::size_t j = 0; j < p; ++j) cols.push_back({"x" + std::to_string(j + 1), {"a", "b", "c"}});
  auto schema = std::make_shared<const DatasetSchema>(std::move(cols));

  Rng rng = make_rng(seed, 0x70C);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto draw_root = [&](const std::array<double, 3>& pmf) -> std::uint32_t {
    const double u = unif(rng);
    return u < pmf[0] ? 0u : (u < pmf[0] + pmf[1] ? 1u : 2u);
  };
  // With probability 0.75 the child takes the deterministic function of its parents,
  // otherwise a uniform level.
  auto child = [&](std::uint32_t target) -> std::uint32_t {
    if (unif(rng) < 0.75) return target;
    return static_cast<std::uint32_t>(std::min(2.0, std::floor(unif(rng) * 3.0)));
  };

  std::vector<std::uint32_t> codes(n * p);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t* x = codes.data() + i * p;
    x[0] = draw_root({0.5, 0.3, 0.2});
    x[1] = child(x[0]);
    x[2] = child((x[1] + 1) % 3);
    x[3] = child(x[0]);
    x[4] = child((x[2] + x[3]) % 3);
    x[5] = child(x[4]);
    x[6] = draw_root({0.2, 0.5, 0.3});
    x[7] = child(x[6]);
    x[8] = child((x[5] + 2 * x[7]) % 3);
    x[9] = child(2 - x[8]);
  }
  return CategoricalDataset(std::move(schema), std::move(codes));
}

}  // namespace cwsynth
