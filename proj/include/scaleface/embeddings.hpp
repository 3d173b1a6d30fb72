#pragma once

// Embedding data model, synthetic generator (x = s * w + noise), verification
// pair construction and the binary/text file formats.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "scaleface/error.hpp"
#include "scaleface/matrix.hpp"
#include "scaleface/random.hpp"

namespace scaleface {

using Label = std::uint32_t;

/// Raw (pre-normalisation) labelled embeddings.
struct EmbeddingSet {
  Matrix vectors;  // [n x d]
  std::vector<Label> labels;
  std::size_t classes = 0;

  std::size_t size() const noexcept { return vectors.rows(); }
  std::size_t dim() const noexcept { return vectors.cols(); }

  void validate() const {
    require(vectors.rows() >= 1, "embedding set is empty");
    require(vectors.cols() >= 2, "embedding dimension must be at least 2");
    require(labels.size() == vectors.rows(), "label count does not match row count");
    for (std::size_t i = 0; i < labels.size(); ++i)
      require(labels[i] < classes, "label " + std::to_string(labels[i]) + " at row " +
                                       std::to_string(i) + " is not below class count " +
                                       std::to_string(classes));
    require(vectors.all_finite(), "embedding set has non-finite components", ErrorKind::numeric);
  }

  friend bool operator==(const EmbeddingSet&, const EmbeddingSet&) = default;
};

struct UnitEmbeddings {
  Matrix unit;  // [n x d], unit rows
  std::vector<double> raw_norms;
  std::vector<Label> labels;
  std::size_t classes = 0;

  std::size_t size() const noexcept { return unit.rows(); }
  std::size_t dim() const noexcept { return unit.cols(); }
};

struct CentroidMatrix {
  Matrix centroids;  // [C x d], unit rows
  bool frozen = false;

  std::size_t classes() const noexcept { return centroids.rows(); }

  void validate() const { require_unit_rows(centroids, 1e-9, "centroid matrix"); }
};

struct Pair {
  std::size_t a = 0;
  std::size_t b = 0;
  int label = 0;  // 1 = same identity

  friend bool operator==(const Pair&, const Pair&) = default;
};

struct PairSet {
  std::vector<Pair> pairs;

  std::size_t size() const noexcept { return pairs.size(); }

  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(pairs.size());
    for (const Pair& p : pairs) out.push_back(p.label);
    return out;
  }

  void validate(std::size_t n) const {
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const Pair& p = pairs[k];
      require(p.a < n && p.b < n, "pair " + std::to_string(k) + " index out of range");
      require(p.label == 0 || p.label == 1, "pair " + std::to_string(k) + " label is not 0/1");
      require(!(p.a == p.b && p.label == 0),
              "pair " + std::to_string(k) + " pairs a sample with itself as a negative");
    }
  }

  friend bool operator==(const PairSet&, const PairSet&) = default;
};

struct SyntheticSpec {
  std::size_t dim = 32;
  std::size_t classes = 10;
  std::size_t per_class = 200;
  double s_min = 1.0;
  double s_max = 10.0;
  double sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(dim >= 2, "synthetic dimension must be at least 2");
    require(classes >= 1, "synthetic class count must be positive");
    require(per_class >= 1, "samples per class must be positive");
    require(s_min > 0.0 && s_max >= s_min && std::isfinite(s_max),
            "signal scale range must satisfy 0 < s_min <= s_max");
    require(sigma >= 0.0 && std::isfinite(sigma), "noise sigma must be non-negative");
  }
};

struct SyntheticData {
  EmbeddingSet set;
  std::vector<double> true_scales;
  Matrix directions;  // generator centroids w_j, [C x d]
};

/// Raises a degenerate-input error naming the first row with norm <= 1e-12.
inline UnitEmbeddings normalize(const EmbeddingSet& set) {
  UnitEmbeddings out;
  out.unit = set.vectors;
  out.labels = set.labels;
  out.classes = set.classes;
  out.raw_norms.resize(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto row = out.unit.row(i);
    const double n = l2_norm(row);
    if (!(n > 1e-12))
      fail(ErrorKind::numeric, "cannot normalize row " + std::to_string(i) + ": norm " +
                                   std::to_string(n) + " is degenerate");
    for (double& v : row) v /= n;
    out.raw_norms[i] = n;
  }
  return out;
}

/// Row j is the normalised mean of the unit embeddings labelled j.
inline CentroidMatrix init_centroids(const UnitEmbeddings& unit) {
  require(unit.classes >= 1, "no classes to initialise");
  Matrix sums(unit.classes, unit.dim());
  std::vector<std::size_t> counts(unit.classes, 0);
  for (std::size_t i = 0; i < unit.size(); ++i) {
    const Label y = unit.labels[i];
    require(y < unit.classes, "label out of range");
    auto dst = sums.row(y);
    const auto src = unit.unit.row(i);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    ++counts[y];
  }
  for (std::size_t j = 0; j < unit.classes; ++j) {
    require(counts[j] > 0, "class " + std::to_string(j) + " has no samples");
    auto row = sums.row(j);
    for (double& v : row) v /= static_cast<double>(counts[j]);
    const double n = l2_norm(row);
    if (!(n > 1e-12))
      fail(ErrorKind::numeric, "class " + std::to_string(j) + " has a zero mean direction");
    for (double& v : row) v /= n;
  }
  return CentroidMatrix{std::move(sums), false};
}

/// Directions drawn uniformly on the sphere from `seed`.
inline Matrix synthetic_directions(std::size_t classes, std::size_t dim, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0));
  Matrix dirs(classes, dim);
  for (std::size_t j = 0; j < classes; ++j) rng.unit_vector(dirs.row(j));
  return dirs;
}

/// Samples x = s * w_y + eps for fixed directions; labels cycle through the
/// classes so every class gets exactly per_class rows.
inline SyntheticData sample_synthetic(const SyntheticSpec& spec, const Matrix& directions,
                                      std::uint64_t sample_seed) {
  spec.validate();
  require(directions.rows() == spec.classes && directions.cols() == spec.dim,
          "direction matrix does not match the synthetic spec");
  Rng rng(mix_seed(sample_seed, 1));
  const std::size_t n = spec.classes * spec.per_class;
  SyntheticData data;
  data.directions = directions;
  data.set.classes = spec.classes;
  data.set.vectors = Matrix(n, spec.dim);
  data.set.labels.resize(n);
  data.true_scales.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<Label>(i % spec.classes);
    const double s = rng.uniform(spec.s_min, spec.s_max);
    auto row = data.set.vectors.row(i);
    const auto w = directions.row(y);
    for (std::size_t c = 0; c < spec.dim; ++c) {
      const double noise = spec.sigma > 0.0 ? spec.sigma * rng.normal() : 0.0;
      row[c] = s * w[c] + noise;
    }
    data.set.labels[i] = y;
    data.true_scales[i] = s;
  }
  return data;
}

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  return sample_synthetic(spec, synthetic_directions(spec.classes, spec.dim, spec.seed),
                          spec.seed);
}

/// Draws n_pos same-class and n_neg different-class pairs (members always
/// distinct), then shuffles them. Pairs are sampled with replacement.
inline PairSet make_pairs(std::span<const Label> labels, std::size_t n_pos, std::size_t n_neg,
                          std::uint64_t seed) {
  const std::size_t n = labels.size();
  Label max_label = 0;
  for (Label y : labels) max_label = std::max(max_label, y);
  const std::size_t classes = n == 0 ? 0 : static_cast<std::size_t>(max_label) + 1;

  // Indices grouped by class: members of class c are order[offset[c] .. offset[c+1]).
  std::vector<std::size_t> offset(classes + 1, 0);
  for (Label y : labels) ++offset[y + 1];
  for (std::size_t c = 0; c < classes; ++c) offset[c + 1] += offset[c];
  std::vector<std::size_t> order(n);
  {
    std::vector<std::size_t> fill(offset.begin(), offset.end() - 1);
    for (std::size_t i = 0; i < n; ++i) order[fill[labels[i]]++] = i;
  }
  auto class_size = [&](std::size_t c) { return offset[c + 1] - offset[c]; };

  std::vector<std::size_t> pos_pool;  // samples whose class has a partner
  std::size_t nonempty = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (class_size(labels[i]) >= 2) pos_pool.push_back(i);
  for (std::size_t c = 0; c < classes; ++c) nonempty += class_size(c) > 0;

  if (n_pos > 0 && pos_pool.empty())
    fail(ErrorKind::invalid_argument, "cannot draw positive pairs: no class has two samples");
  if (n_neg > 0 && nonempty < 2)
    fail(ErrorKind::invalid_argument, "cannot draw negative pairs: fewer than two classes");

  Rng rng(mix_seed(seed, 2));
  PairSet out;
  out.pairs.reserve(n_pos + n_neg);
  for (std::size_t k = 0; k < n_pos; ++k) {
    const std::size_t i = pos_pool[rng.index(pos_pool.size())];
    const Label y = labels[i];
    // Pick a partner among the other members of the same class.
    std::size_t r = rng.index(class_size(y) - 1);
    std::size_t j = order[offset[y] + r];
    if (j == i) j = order[offset[y] + class_size(y) - 1];
    out.pairs.push_back({i, j, 1});
  }
  for (std::size_t k = 0; k < n_neg; ++k) {
    const std::size_t i = rng.index(n);
    const Label y = labels[i];
    // r-th sample outside class y in class-grouped order.
    std::size_t r = rng.index(n - class_size(y));
    if (r >= offset[y]) r += class_size(y);
    out.pairs.push_back({i, order[r], 0});
  }
  rng.shuffle(std::span<Pair>(out.pairs));
  return out;
}

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(v >> (8 * k));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline void read_exact(std::istream& is, unsigned char* dst, std::size_t n, const std::string& what) {
  is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    fail(ErrorKind::format, what + ": truncated file");
}

inline std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  read_exact(is, b, 4, what);
  return std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 | std::uint32_t{b[2]} << 16 |
         std::uint32_t{b[3]} << 24;
}

inline std::uint64_t get_u64(std::istream& is, const std::string& what) {
  unsigned char b[8];
  read_exact(is, b, 8, what);
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= std::uint64_t{b[k]} << (8 * k);
  return v;
}

inline float get_f32(std::istream& is, const std::string& what) {
  return std::bit_cast<float>(get_u32(is, what));
}
inline double get_f64(std::istream& is, const std::string& what) {
  return std::bit_cast<double>(get_u64(is, what));
}

inline void check_magic(std::istream& is, const char (&magic)[5], const std::string& what) {
  unsigned char got[4];
  read_exact(is, got, 4, what);
  if (!std::equal(got, got + 4, reinterpret_cast<const unsigned char*>(magic)))
    fail(ErrorKind::format, what + ": bad magic bytes");
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::format, "cannot open " + path + " for reading");
  return is;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::format, "cannot open " + path + " for writing");
  return os;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  const auto end = s.find_last_not_of(ws);
  s.erase(end == std::string::npos ? 0 : end + 1);
  return s;
}

}  // namespace detail

// EMB1 layout, little-endian: "EMB1", u32 d, u32 C, u64 n, then n records of
// [u32 label][d x f32].
inline void write_embeddings(std::ostream& os, const EmbeddingSet& set) {
  set.validate();
  os.write("EMB1", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(set.dim()));
  detail::put_u32(os, static_cast<std::uint32_t>(set.classes));
  detail::put_u64(os, set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    detail::put_u32(os, set.labels[i]);
    for (double v : set.vectors.row(i)) detail::put_f32(os, static_cast<float>(v));
  }
  if (!os) fail(ErrorKind::format, "failed writing embedding stream");
}

inline EmbeddingSet read_embeddings(std::istream& is) {
  const std::string what = "embedding file";
  detail::check_magic(is, "EMB1", what);
  const std::uint32_t d = detail::get_u32(is, what);
  const std::uint32_t classes = detail::get_u32(is, what);
  const std::uint64_t n = detail::get_u64(is, what);
  if (d < 2) fail(ErrorKind::format, what + ": dimension below 2");
  if (n == 0) fail(ErrorKind::format, what + ": no records");
  EmbeddingSet set;
  set.classes = classes;
  set.vectors = Matrix(static_cast<std::size_t>(n), d);
  set.labels.resize(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t label = detail::get_u32(is, what);
    if (label >= classes)
      fail(ErrorKind::format, what + ": record " + std::to_string(i) + " label " +
                                  std::to_string(label) + " >= class count");
    set.labels[i] = label;
    for (std::size_t c = 0; c < d; ++c) {
      const float v = detail::get_f32(is, what);
      if (!std::isfinite(v))
        fail(ErrorKind::format, what + ": record " + std::to_string(i) + " has a non-finite component");
      set.vectors(i, c) = v;
    }
  }
  return set;
}

inline void write_embeddings(const std::string& path, const EmbeddingSet& set) {
  auto os = detail::open_out(path);
  write_embeddings(os, set);
}

inline EmbeddingSet read_embeddings(const std::string& path) {
  auto is = detail::open_in(path);
  return read_embeddings(is);
}

/// Text pairs: "index_a,index_b,label" per line; '#' lines are comments.
inline void write_pairs(std::ostream& os, const PairSet& pairs) {
  os << "# index_a,index_b,label\n";
  for (const Pair& p : pairs.pairs) os << p.a << ',' << p.b << ',' << p.label << '\n';
}

inline PairSet read_pairs(std::istream& is) {
  PairSet out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 3) fail(ErrorKind::format, "pairs line " + std::to_string(lineno) + ": expected 3 fields");
    try {
      std::size_t used = 0;
      Pair p;
      p.a = std::stoull(f[0], &used);
      p.b = std::stoull(f[1], &used);
      p.label = std::stoi(f[2], &used);
      if (p.label != 0 && p.label != 1) throw std::invalid_argument("label");
      out.pairs.push_back(p);
    } catch (const std::logic_error&) {
      fail(ErrorKind::format, "pairs line " + std::to_string(lineno) + ": malformed field");
    }
  }
  return out;
}

inline void write_pairs(const std::string& path, const PairSet& pairs) {
  auto os = detail::open_out(path);
  write_pairs(os, pairs);
}

inline PairSet read_pairs(const std::string& path) {
  auto is = detail::open_in(path);
  return read_pairs(is);
}

}  // namespace scaleface
