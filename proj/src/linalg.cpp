#include "slab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "slab/error.hpp"

namespace slab::linalg {

const char* to_string(MomentMode mode) {
  switch (mode) {
    case MomentMode::kRaw: return "raw";
    case MomentMode::kCentered: return "centered";
    case MomentMode::kCorrelation: return "correlation";
  }
  return "?";
}

namespace {

// Turns raw co-occurrence sums into the requested moment matrix.
MomentMatrix finish_moment(Matrix cross, const Vector& sums, double n, MomentMode mode) {
  MomentMatrix out;
  out.mode = mode;
  cross /= n;
  if (mode == MomentMode::kRaw) {
    out.values = std::move(cross);
    return out;
  }
  const Vector mean = sums / n;
  cross.noalias() -= mean * mean.transpose();
  if (mode == MomentMode::kCentered) {
    out.values = std::move(cross);
    return out;
  }
  const Index d = cross.rows();
  Vector scale(d);
  for (Index i = 0; i < d; ++i) {
    const double var = cross(i, i);
    // Relative floor: binary columns that are constant have var exactly 0,
    // but dense inputs can leave round-off behind.
    const double floor = 1e-14 * std::max(1.0, mean(i) * mean(i));
    if (var <= floor) {
      out.degenerate_columns.push_back(i);
      scale(i) = 0.0;
    } else {
      scale(i) = 1.0 / std::sqrt(var);
    }
  }
  out.values = scale.asDiagonal() * cross * scale.asDiagonal();
  for (Index i = 0; i < d; ++i) out.values(i, i) = 1.0;
  return out;
}

}  // namespace

MomentMatrix second_moment(const Matrix& x, MomentMode mode) {
  const auto n = static_cast<double>(x.rows());
  SLAB_REQUIRE(x.rows() >= 1, "second_moment needs at least one sample");
  SLAB_REQUIRE(mode == MomentMode::kRaw || x.rows() >= 2,
               "centered and correlation moments need at least two samples");
  Matrix cross = Matrix::Zero(x.cols(), x.cols());
  cross.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
  cross.triangularView<Eigen::StrictlyUpper>() = cross.transpose();
  const Vector sums = x.colwise().sum().transpose();
  return finish_moment(std::move(cross), sums, n, mode);
}

MomentMatrix second_moment(const SparseBinaryMatrix& x, std::span<const std::uint32_t> columns,
                           MomentMode mode) {
  SLAB_REQUIRE(x.rows() >= 1, "second_moment needs at least one sample");
  SLAB_REQUIRE(mode == MomentMode::kRaw || x.rows() >= 2,
               "centered and correlation moments need at least two samples");
  std::vector<std::int64_t> local(x.cols(), -1);
  for (std::size_t k = 0; k < columns.size(); ++k) {
    SLAB_REQUIRE(columns[k] < x.cols(), "column out of range");
    SLAB_REQUIRE(local[columns[k]] < 0, "duplicate column in selection");
    local[columns[k]] = static_cast<std::int64_t>(k);
  }
  const auto d = static_cast<Index>(columns.size());
  Matrix cross = Matrix::Zero(d, d);
  Vector sums = Vector::Zero(d);
  std::vector<Index> active;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    active.clear();
    for (const auto c : x.row(r)) {
      if (local[c] >= 0) active.push_back(local[c]);
    }
    for (const Index i : active) {
      sums(i) += 1.0;
      for (const Index j : active) cross(i, j) += 1.0;
    }
  }
  return finish_moment(std::move(cross), sums, static_cast<double>(x.rows()), mode);
}

SpectralDecomposition sym_eig(const Matrix& s, double symmetry_tolerance) {
  SLAB_REQUIRE(s.rows() == s.cols(), "sym_eig needs a square matrix");
  const Index n = s.rows();
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if (n > 0 && (s - s.transpose()).cwiseAbs().maxCoeff() > symmetry_tolerance * scale) {
    throw ContractError("sym_eig input is not symmetric");
  }
  SLAB_REQUIRE(s.allFinite(), "sym_eig input has non-finite entries");

  Matrix a = s;
  Matrix v = Matrix::Identity(n, n);
  const double total = a.squaredNorm();
  int sweep = 0;
  for (; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Index q = 1; q < n; ++q) {
      for (Index p = 0; p < q; ++p) off += a(p, q) * a(p, q);
    }
    if (off <= 1e-30 * total || off == 0.0) break;

    for (Index p = 0; p + 1 < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        // Later sweeps: drop entries already below diagonal round-off.
        if (sweep > 3 && std::abs(app) + 100.0 * std::abs(apq) == std::abs(app) &&
            std::abs(aqq) + 100.0 * std::abs(apq) == std::abs(aqq)) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = a(q, p) = 0.0;
        for (Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index i, Index j) { return a(i, i) > a(j, j); });

  SpectralDecomposition out;
  out.sweeps = sweep;
  out.eigenvalues.resize(n);
  out.eigenvectors.resize(n, n);
  for (Index k = 0; k < n; ++k) {
    const Index src = order[static_cast<std::size_t>(k)];
    out.eigenvalues(k) = a(src, src);
    Vector col = v.col(src);
    Index arg = 0;
    for (Index i = 1; i < n; ++i) {
      if (std::abs(col(i)) > std::abs(col(arg))) arg = i;
    }
    if (col(arg) < 0.0) col = -col;
    out.eigenvectors.col(k) = col;
  }
  return out;
}

Matrix top_m_projector(const SpectralDecomposition& decomposition, Index m) {
  const Index d = decomposition.eigenvectors.rows();
  SLAB_REQUIRE(m >= 1 && m <= d, "projector rank must lie in [1, d]");
  const auto vm = decomposition.eigenvectors.leftCols(m);
  return vm * vm.transpose();
}

std::size_t effective_rank(std::span<const double> eigenvalues, double threshold) {
  SLAB_REQUIRE(threshold > 0.0 && threshold <= 1.0, "threshold must lie in (0, 1]");
  SLAB_REQUIRE(!eigenvalues.empty(), "effective_rank needs a spectrum");
  double total = 0.0;
  for (std::size_t i = 0; i < eigenvalues.size(); ++i) {
    SLAB_REQUIRE(eigenvalues[i] >= 0.0, "eigenvalues must be non-negative");
    SLAB_REQUIRE(i == 0 || eigenvalues[i] <= eigenvalues[i - 1], "eigenvalues must be descending");
    total += eigenvalues[i];
  }
  if (total <= 0.0) throw DataError("effective_rank of an all-zero spectrum is undefined");
  double prefix = 0.0;
  for (std::size_t k = 0; k < eigenvalues.size(); ++k) {
    prefix += eigenvalues[k];
    if (prefix >= threshold * total) return k + 1;
  }
  return eigenvalues.size();
}

double offdiag_frobenius(const Matrix& g) {
  SLAB_REQUIRE(g.rows() == g.cols(), "offdiag_frobenius needs a square matrix");
  double sum = 0.0;
  for (Index j = 0; j < g.cols(); ++j) {
    for (Index i = 0; i < g.rows(); ++i) {
      if (i != j) sum += g(i, j) * g(i, j);
    }
  }
  return std::sqrt(sum);
}

Pca2d pca_2d(const Matrix& points, ComponentPair which) {
  const Index count = points.cols();
  SLAB_REQUIRE(count >= 3, "pca_2d needs at least three points");
  SLAB_REQUIRE(which.first >= 0 && which.second >= 0 && which.first != which.second &&
                   which.first < count && which.second < count,
               "invalid principal component pair");
  const Vector mean = points.rowwise().mean();
  const Matrix centred = points.colwise() - mean;
  // Dual form: the eigenvectors of the point Gram matrix give the projections
  // directly and the problem size is the number of points, not the ambient
  // dimension.
  const Matrix gram = (centred.transpose() * centred) / static_cast<double>(count);
  const Matrix sym = 0.5 * (gram + gram.transpose());
  const auto eig = sym_eig(sym);

  Pca2d out;
  out.coords = Matrix::Zero(count, 2);
  const double lead = std::max(eig.eigenvalues(0), 0.0);
  const std::array<Index, 2> comps{which.first, which.second};
  for (int k = 0; k < 2; ++k) {
    const double lambda = std::max(eig.eigenvalues(comps[k]), 0.0);
    out.variances[k] = lambda;
    if (lambda <= 1e-10 * lead || lambda == 0.0) {
      out.degenerate = true;
      continue;
    }
    out.coords.col(k) = std::sqrt(static_cast<double>(count) * lambda) * eig.eigenvectors.col(comps[k]);
  }
  return out;
}

Matrix correlation_to_chordal(const Matrix& r) {
  SLAB_REQUIRE(r.rows() == r.cols(), "correlation matrix must be square");
  for (Index i = 0; i < r.rows(); ++i) {
    if (std::abs(r(i, i) - 1.0) > 1e-9) {
      throw ContractError("correlation matrix diagonal entry " + std::to_string(i) + " is not 1");
    }
  }
  Matrix d(r.rows(), r.cols());
  for (Index j = 0; j < r.cols(); ++j) {
    for (Index i = 0; i < r.rows(); ++i) {
      d(i, j) = std::sqrt(std::max(0.0, 2.0 * (1.0 - r(i, j))));
    }
  }
  return d;
}

}  // namespace slab::linalg
