#pragma once

#include <cstdint>
#include <vector>

#include "scaleface/embeddings.hpp"
#include "scaleface/matrix.hpp"
#include "scaleface/random.hpp"

namespace scaleface::fixture {

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

inline Matrix unit_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) rng.unit_vector(m.row(r));
  return m;
}

inline std::vector<Label> labels_for(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<Label> y(n);
  for (auto& v : y) v = static_cast<Label>(rng.index(classes));
  return y;
}

inline UnitEmbeddings as_unit(const Matrix& unit_rows, std::vector<Label> labels, std::size_t classes) {
  return {unit_rows, std::vector<double>(unit_rows.rows(), 1.0), std::move(labels), classes};
}

/// Row-major matrix from nested initializer lists.
inline Matrix rows(std::initializer_list<std::initializer_list<double>> values) {
  const std::size_t r = values.size(), c = values.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : values) {
    std::size_t j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace scaleface::fixture
