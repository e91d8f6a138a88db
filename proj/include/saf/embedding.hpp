#pragma once

// PCA by power iteration with deflation, and a dependency-free SVG scatter
// plot for 2D embeddings.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "saf/matrix.hpp"

namespace saf {

struct PcaOptions {
  std::size_t components = 2;
  double tolerance = 1e-10;
  std::size_t max_iterations = 1000;
};

struct PcaResult {
  Matrix mean;        // 1 x d
  Matrix directions;  // d x components, orthonormal columns
  std::vector<double> eigenvalues;
  Matrix projected;   // n x components
};

/// Sample covariance (divisor n - 1) of the rows.
Matrix covariance(const Matrix& x);

/// Centres the rows and projects them onto the leading principal directions.
/// Each direction is sign-normalised so its largest-magnitude entry is
/// positive. Fewer than 3 rows is a DataError.
PcaResult pca(const Matrix& x, const PcaOptions& options = {});

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  int domain = 0;
  int label = 0;
};

/// Source points in red shades, target points in blue shades; one shade per
/// class, circles for source and squares for target.
std::string render_scatter_svg(std::span<const ScatterPoint> points, const std::string& title);

}  // namespace saf
