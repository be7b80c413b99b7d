#pragma once

// Dense symmetric linear algebra used by the diagnostics: moment matrices,
// eigendecomposition, projectors and small PCA helpers.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "slab/matrix.hpp"
#include "slab/sparse.hpp"

namespace slab::linalg {

enum class MomentMode {
  kRaw,          // X^T X / n
  kCentered,     // covariance with 1/n normalisation
  kCorrelation,  // Pearson correlation
};

const char* to_string(MomentMode mode);

struct MomentMatrix {
  Matrix values;
  MomentMode mode = MomentMode::kRaw;
  // Columns with zero variance (correlation mode only). Their row/column is
  // 0 off the diagonal and 1 on it.
  std::vector<Index> degenerate_columns;
};

// Rows of `x` are samples.
MomentMatrix second_moment(const Matrix& x, MomentMode mode);

// Same, restricted to `columns` of a sparse binary matrix. Cost is linear in
// the number of stored entries, independent of the total column count.
MomentMatrix second_moment(const SparseBinaryMatrix& x, std::span<const std::uint32_t> columns,
                           MomentMode mode);

struct SpectralDecomposition {
  Vector eigenvalues;   // descending
  Matrix eigenvectors;  // column k pairs with eigenvalues(k)
  int sweeps = 0;
};

// Cyclic Jacobi. Each eigenvector is oriented so that its largest-magnitude
// component (first one on ties) is positive.
SpectralDecomposition sym_eig(const Matrix& s, double symmetry_tolerance = 1e-10);

// V_m V_m^T for the leading m eigenvectors.
Matrix top_m_projector(const SpectralDecomposition& decomposition, Index m);

// Smallest k whose leading eigenvalues explain `threshold` of the total.
std::size_t effective_rank(std::span<const double> eigenvalues, double threshold);

double offdiag_frobenius(const Matrix& g);

struct ComponentPair {
  Index first = 0;
  Index second = 1;
};

struct Pca2d {
  Matrix coords;  // one row per input point
  std::array<double, 2> variances{};
  bool degenerate = false;  // rank < 2: second coordinate is zero
};

// Each column of `points` is one point. Points are centred, and the
// coordinates are the projections onto the requested principal components.
Pca2d pca_2d(const Matrix& points, ComponentPair which = {});

// D_ij = sqrt(2 (1 - R_ij)).
Matrix correlation_to_chordal(const Matrix& r);

}  // namespace slab::linalg
