#include "vshift/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "vshift/error.hpp"

namespace vshift {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view cell) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  if (cell.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size()) return std::nullopt;
  return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

/// Numeric rows of a CSV file, with an optional leading header skipped.
std::vector<std::vector<double>> read_numeric_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (lineno == 1 && view.starts_with("\xEF\xBB\xBF")) view.remove_prefix(3);
    if (trim(view).empty()) continue;
    auto cells = split_commas(view);
    std::vector<double> row;
    row.reserve(cells.size());
    bool numeric = true;
    for (auto c : cells) {
      auto v = parse_number(c);
      if (!v) {
        numeric = false;
        break;
      }
      row.push_back(*v);
    }
    if (!numeric) {
      if (rows.empty() && width == 0) {
        // header line
        width = cells.size();
        continue;
      }
      throw ParseError("non-numeric cell in " + path.string(), lineno);
    }
    if (width == 0) width = row.size();
    if (row.size() != width) throw ParseError("inconsistent column count in " + path.string(), lineno);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw SchemaError("no data rows in " + path.string());
  return rows;
}

void write_number(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

void write_header(std::ostream& os, std::size_t n, bool with_label) {
  for (std::size_t k = 0; k < n; ++k) os << (k ? "," : "") << 'f' << k;
  if (with_label) os << (n ? "," : "") << "label";
  os << '\n';
}

double median(std::vector<double> v) {
  const std::size_t m = v.size();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(m / 2);
  std::nth_element(v.begin(), mid, v.end());
  double hi = *mid;
  if (m % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

/// First k entries of a partial Fisher-Yates shuffle of `pool`.
std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + uniform_index(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

BiasedSplit assemble(const LabeledDataset& source, std::vector<std::size_t> train_rows,
                     std::vector<std::size_t> target_rows) {
  BiasedSplit out;
  out.train = select_rows(source, train_rows);
  auto tgt = select_rows(source, target_rows);
  out.target.features = std::move(tgt.features);
  out.target_labels = std::move(tgt.labels);
  out.train_rows = std::move(train_rows);
  out.target_rows = std::move(target_rows);
  return out;
}

/// Shared body of the median-split schemes: `stat[i]` is the per-row
/// statistic whose median decides which rows are favoured.
BiasedSplit bias_by_statistic(const LabeledDataset& source, const BiasSpec& spec,
                              const std::vector<double>& stat, BiasDirection direction, Rng& rng) {
  const std::size_t n_rows = source.size();
  if (spec.train_size == 0) throw InvalidArgument("train size must be positive");
  if (spec.train_size >= n_rows)
    throw InsufficientDataError("train size " + std::to_string(spec.train_size) +
                                " leaves no target rows out of " + std::to_string(n_rows));

  const double med = median(stat);
  std::vector<std::size_t> above, below;
  for (std::size_t i = 0; i < n_rows; ++i) (stat[i] > med ? above : below).push_back(i);

  const double w_above = direction == BiasDirection::up ? 4.0 : 1.0;
  const double w_below = direction == BiasDirection::up ? 1.0 : 4.0;

  std::vector<std::size_t> train_rows;
  train_rows.reserve(spec.train_size);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t d = 0; d < spec.train_size; ++d) {
    const double mass_above = w_above * static_cast<double>(above.size());
    const double mass_below = w_below * static_cast<double>(below.size());
    auto& bucket = unif(rng) * (mass_above + mass_below) < mass_above ? above : below;
    std::size_t j = uniform_index(rng, bucket.size());
    train_rows.push_back(bucket[j]);
    bucket[j] = bucket.back();
    bucket.pop_back();
  }

  std::vector<std::size_t> remaining;
  remaining.reserve(above.size() + below.size());
  remaining.insert(remaining.end(), above.begin(), above.end());
  remaining.insert(remaining.end(), below.begin(), below.end());
  std::sort(remaining.begin(), remaining.end());

  std::vector<std::size_t> target_rows;
  if (spec.test_size) {
    if (*spec.test_size == 0) throw InvalidArgument("test size must be positive");
    if (*spec.test_size > remaining.size())
      throw InsufficientDataError("only " + std::to_string(remaining.size()) + " rows remain for a target of " +
                                  std::to_string(*spec.test_size));
    target_rows = sample_without_replacement(std::move(remaining), *spec.test_size, rng);
  } else {
    target_rows = std::move(remaining);
  }
  auto out = assemble(source, std::move(train_rows), std::move(target_rows));
  out.direction = direction;
  return out;
}

BiasDirection resolve_direction(const BiasSpec& spec, Rng& rng) {
  if (spec.direction) return *spec.direction;
  return std::bernoulli_distribution(0.5)(rng) ? BiasDirection::up : BiasDirection::down;
}

std::size_t resolve_feature(const LabeledDataset& source, const BiasSpec& spec, Rng& rng) {
  if (spec.feature) {
    if (*spec.feature >= source.dim())
      throw InvalidArgument("bias feature " + std::to_string(*spec.feature) + " out of range for " +
                            std::to_string(source.dim()) + " features");
    return *spec.feature;
  }
  return uniform_index(rng, source.dim());
}

}  // namespace

Vector LabeledDataset::label_vector() const {
  Vector y(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) y[static_cast<Eigen::Index>(i)] = labels[i];
  return y;
}

void LabeledDataset::validate() const {
  if (features.rows() == 0 || features.cols() == 0) throw SchemaError("dataset must have at least one row and column");
  if (labels.size() != size()) throw SchemaError("label count does not match feature rows");
  for (int y : labels)
    if (y != 0 && y != 1) throw SchemaError("labels must be 0 or 1");
}

NormalizationParams NormalizationParams::fit(std::span<const Matrix* const> blocks) {
  NormalizationParams p;
  if (blocks.empty()) return p;
  const auto n = static_cast<std::size_t>(blocks.front()->cols());
  p.minimum.assign(n, std::numeric_limits<double>::infinity());
  p.maximum.assign(n, -std::numeric_limits<double>::infinity());
  for (const Matrix* m : blocks) {
    if (static_cast<std::size_t>(m->cols()) != n) throw DimensionError("feature count mismatch in normalization");
    for (Eigen::Index r = 0; r < m->rows(); ++r)
      for (std::size_t k = 0; k < n; ++k) {
        double v = (*m)(r, static_cast<Eigen::Index>(k));
        p.minimum[k] = std::min(p.minimum[k], v);
        p.maximum[k] = std::max(p.maximum[k], v);
      }
  }
  return p;
}

Matrix NormalizationParams::apply(const Matrix& m) const {
  if (static_cast<std::size_t>(m.cols()) != minimum.size()) throw DimensionError("feature count mismatch in normalization");
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index k = 0; k < m.cols(); ++k) {
    const double lo = minimum[static_cast<std::size_t>(k)];
    const double span = maximum[static_cast<std::size_t>(k)] - lo;
    for (Eigen::Index r = 0; r < m.rows(); ++r) out(r, k) = span > 0.0 ? (m(r, k) - lo) / span : 0.0;
  }
  return out;
}

LabeledDataset load_csv(const std::filesystem::path& path, int label_column) {
  auto rows = read_numeric_rows(path);
  const auto width = static_cast<int>(rows.front().size());
  const int col = label_column < 0 ? width + label_column : label_column;
  if (col < 0 || col >= width)
    throw SchemaError("label column " + std::to_string(label_column) + " out of range for " + std::to_string(width) +
                      " columns");
  if (width < 2) throw SchemaError("need at least one feature column besides the label");

  std::set<double> distinct;
  for (const auto& r : rows) distinct.insert(r[static_cast<std::size_t>(col)]);
  const bool already_binary = std::all_of(distinct.begin(), distinct.end(), [](double v) { return v == 0.0 || v == 1.0; });
  if (!already_binary && distinct.size() != 2)
    throw SchemaError("label column must hold exactly two distinct values, found " + std::to_string(distinct.size()));
  const double low = *distinct.begin();

  LabeledDataset data;
  data.features.resize(static_cast<Eigen::Index>(rows.size()), width - 1);
  data.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Eigen::Index k = 0;
    for (int c = 0; c < width; ++c) {
      if (c == col) continue;
      data.features(static_cast<Eigen::Index>(i), k++) = rows[i][static_cast<std::size_t>(c)];
    }
    const double raw = rows[i][static_cast<std::size_t>(col)];
    data.labels.push_back(already_binary ? static_cast<int>(raw) : (raw == low ? 0 : 1));
  }
  return data;
}

TargetSample load_target_csv(const std::filesystem::path& path) {
  auto rows = read_numeric_rows(path);
  TargetSample t;
  t.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k)
      t.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  return t;
}

void write_csv(std::ostream& os, const LabeledDataset& data) {
  write_header(os, data.dim(), true);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t k = 0; k < data.dim(); ++k) {
      if (k) os << ',';
      write_number(os, data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
    }
    os << ',' << data.labels[i] << '\n';
  }
}

void write_csv(std::ostream& os, const TargetSample& data) {
  write_header(os, data.dim(), false);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t k = 0; k < data.dim(); ++k) {
      if (k) os << ',';
      write_number(os, data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
    }
    os << '\n';
  }
}

NormalizedPair normalize_unit_cube(const LabeledDataset& train, const TargetSample& target) {
  if (train.dim() != target.dim())
    throw DimensionError("train has " + std::to_string(train.dim()) + " features, target has " +
                         std::to_string(target.dim()));
  const Matrix* blocks[] = {&train.features, &target.features};
  NormalizedPair out;
  out.params = NormalizationParams::fit(blocks);
  out.train.features = out.params.apply(train.features);
  out.train.labels = train.labels;
  out.target.features = out.params.apply(target.features);
  return out;
}

LabeledDataset normalize_unit_cube(const LabeledDataset& data) {
  const Matrix* blocks[] = {&data.features};
  auto params = NormalizationParams::fit(blocks);
  return {params.apply(data.features), data.labels};
}

double sigmoid_conditional(double x) noexcept { return 1.0 / (1.0 + std::exp(5.0 * x)); }

TargetSample gen_sigmoid_target(std::size_t n_target, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  TargetSample t;
  t.features.resize(static_cast<Eigen::Index>(n_target), 1);
  for (std::size_t q = 0; q < n_target; ++q) {
    const bool right = unif(rng) < 0.3;
    const double u = unif(rng);
    t.features(static_cast<Eigen::Index>(q), 0) = right ? u : u - 1.0;
  }
  return t;
}

SyntheticData gen_sigmoid_synthetic(std::size_t n_train, std::size_t n_target, std::uint64_t seed) {
  if (n_train == 0 || n_target == 0) throw InvalidArgument("synthetic sizes must be positive");
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  SyntheticData out;
  out.train.features.resize(static_cast<Eigen::Index>(n_train), 1);
  out.train.labels.resize(n_train);
  for (std::size_t i = 0; i < n_train; ++i) {
    const double x = 2.0 * unif(rng) - 1.0;
    out.train.features(static_cast<Eigen::Index>(i), 0) = x;
    out.train.labels[i] = unif(rng) < sigmoid_conditional(x) ? 1 : 0;
  }
  out.target = gen_sigmoid_target(n_target, rng);
  out.true_conditional = sigmoid_conditional;
  return out;
}

namespace {

enum class Breiman { twonorm, ringnorm };

LabeledDataset gen_breiman(std::size_t n, std::uint64_t seed, Breiman kind) {
  if (n == 0) throw InvalidArgument("dataset size must be positive");
  Rng rng = make_rng(seed);
  const double a = 2.0 / std::sqrt(static_cast<double>(kBreimanDim));
  std::vector<int> labels(n, 1);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n / 2), 0);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::normal_distribution<double> normal(0.0, 1.0);
  LabeledDataset d;
  d.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kBreimanDim));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < kBreimanDim; ++k) {
      const double z = normal(rng);
      double v = 0.0;
      if (kind == Breiman::twonorm) {
        v = labels[i] == 0 ? z + a : z - a;
      } else {
        v = labels[i] == 0 ? 2.0 * z : z + a;
      }
      d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v;
    }
  }
  d.labels = std::move(labels);
  return d;
}

}  // namespace

LabeledDataset gen_twonorm(std::size_t n, std::uint64_t seed) { return gen_breiman(n, seed, Breiman::twonorm); }
LabeledDataset gen_ringnorm(std::size_t n, std::uint64_t seed) { return gen_breiman(n, seed, Breiman::ringnorm); }

LabeledDataset select_features(const LabeledDataset& data, std::span<const std::size_t> columns) {
  LabeledDataset out;
  out.features.resize(data.features.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c] >= data.dim()) throw InvalidArgument("feature index out of range");
    out.features.col(static_cast<Eigen::Index>(c)) = data.features.col(static_cast<Eigen::Index>(columns[c]));
  }
  out.labels = data.labels;
  return out;
}

LabeledDataset select_rows(const LabeledDataset& data, std::span<const std::size_t> rows) {
  LabeledDataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), data.features.cols());
  out.labels.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) = data.features.row(static_cast<Eigen::Index>(rows[r]));
    out.labels.push_back(data.labels[rows[r]]);
  }
  return out;
}

std::string to_string(BiasScheme s) {
  switch (s) {
    case BiasScheme::sugiyama: return "sugiyama";
    case BiasScheme::single_feature: return "feature";
    case BiasScheme::norm: return "norm";
  }
  return "?";
}

std::string to_string(BiasDirection d) { return d == BiasDirection::up ? "up" : "down"; }

BiasScheme parse_bias_scheme(const std::string& s) {
  if (s == "sugiyama") return BiasScheme::sugiyama;
  if (s == "feature" || s == "single_feature") return BiasScheme::single_feature;
  if (s == "norm") return BiasScheme::norm;
  throw InvalidArgument("unknown bias scheme '" + s + "'");
}

BiasDirection parse_bias_direction(const std::string& s) {
  if (s == "up") return BiasDirection::up;
  if (s == "down") return BiasDirection::down;
  throw InvalidArgument("unknown bias direction '" + s + "'");
}

double sugiyama_acceptance(double v) noexcept { return std::min(1.0, 4.0 * v * v); }

BiasedSplit bias_sugiyama(const LabeledDataset& source, const BiasSpec& spec) {
  if (!spec.test_size || *spec.test_size == 0) throw InvalidArgument("rejection biasing needs a positive test size");
  if (spec.train_size == 0) throw InvalidArgument("train size must be positive");
  Rng rng = make_rng(spec.seed);
  const std::size_t c = resolve_feature(source, spec, rng);

  std::vector<std::size_t> pool(source.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // Pool is consumed front to back after a lazy shuffle; every examined row
  // leaves the pool whether or not it is accepted.
  std::vector<std::size_t> target_rows;
  std::size_t next = 0;
  while (target_rows.size() < *spec.test_size) {
    if (next == pool.size())
      throw InsufficientDataError("pool exhausted after " + std::to_string(target_rows.size()) + " of " +
                                  std::to_string(*spec.test_size) + " target rows");
    std::size_t j = next + uniform_index(rng, pool.size() - next);
    std::swap(pool[next], pool[j]);
    const std::size_t row = pool[next++];
    const double v = source.features(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c));
    if (unif(rng) < sugiyama_acceptance(v)) target_rows.push_back(row);
  }

  std::vector<std::size_t> remaining(pool.begin() + static_cast<std::ptrdiff_t>(next), pool.end());
  if (remaining.size() < spec.train_size)
    throw InsufficientDataError("only " + std::to_string(remaining.size()) + " rows remain for a training set of " +
                                std::to_string(spec.train_size));
  std::sort(remaining.begin(), remaining.end());
  auto train_rows = sample_without_replacement(std::move(remaining), spec.train_size, rng);

  auto out = assemble(source, std::move(train_rows), std::move(target_rows));
  out.feature = c;
  return out;
}

BiasedSplit bias_single_feature(const LabeledDataset& source, const BiasSpec& spec) {
  Rng rng = make_rng(spec.seed);
  const std::size_t c = resolve_feature(source, spec, rng);
  const BiasDirection dir = resolve_direction(spec, rng);
  std::vector<double> stat(source.size());
  for (std::size_t i = 0; i < source.size(); ++i)
    stat[i] = source.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
  auto out = bias_by_statistic(source, spec, stat, dir, rng);
  out.feature = c;
  return out;
}

BiasedSplit bias_norm(const LabeledDataset& source, const BiasSpec& spec) {
  Rng rng = make_rng(spec.seed);
  const BiasDirection dir = resolve_direction(spec, rng);
  std::vector<double> stat(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) stat[i] = source.features.row(static_cast<Eigen::Index>(i)).norm();
  return bias_by_statistic(source, spec, stat, dir, rng);
}

BiasedSplit apply_bias(const LabeledDataset& source, const BiasSpec& spec) {
  switch (spec.scheme) {
    case BiasScheme::sugiyama: return bias_sugiyama(source, spec);
    case BiasScheme::single_feature: return bias_single_feature(source, spec);
    case BiasScheme::norm: return bias_norm(source, spec);
  }
  throw InvalidArgument("unknown bias scheme");
}

}  // namespace vshift
