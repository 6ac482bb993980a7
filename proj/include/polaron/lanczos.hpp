#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "polaron/errors.hpp"
#include "polaron/grid.hpp"

// Thick-restart Lanczos for the lowest eigenpair of a hermitian operator,
// with full reorthogonalization inside the restart window (desk-scale
// dimensions; the basis block is kept dense for BLAS-2 orthogonalization).

namespace polaron {

struct LanczosOptions {
    double tolerance = 1e-11;   // on the residual ||A x - theta x||
    int max_matvecs = 20000;
    int window = 64;
    int keep = 12;
    std::uint64_t seed = 1;
    std::optional<CVector> initial;
};

struct LanczosResult {
    double eigenvalue = 0.0;
    CVector eigenvector;
    double residual = 0.0;
    int matvecs = 0;
    bool converged = false;
};

template <typename MatVec>
LanczosResult lanczos_smallest(const MatVec& apply, int dim, const LanczosOptions& opts = {}) {
    if (dim < 1) throw ConfigurationError("lanczos: empty space");
    const int window = std::max(3, std::min(opts.window, dim));
    const int keep = std::max(1, std::min(opts.keep, window - 2));

    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    auto random_vector = [&]() {
        CVector v(dim);
        for (int i = 0; i < dim; ++i) v[i] = Complex(dist(rng), dist(rng));
        return v;
    };

    CMatrix B(dim, window + 1);          // orthonormal basis columns
    RMatrix T = RMatrix::Zero(window + 1, window + 1);  // projected matrix
    int m = 0;                           // number of stored basis vectors - 1

    CVector v0 = opts.initial ? *opts.initial : random_vector();
    if (v0.size() != dim) throw ConfigurationError("lanczos: initial vector has wrong size");
    if (v0.norm() == 0.0) v0 = random_vector();
    B.col(0) = v0 / v0.norm();

    auto orthogonalize = [&](CVector& w, int count) {
        for (int pass = 0; pass < 2; ++pass) {
            CVector c = B.leftCols(count).adjoint() * w;
            w.noalias() -= B.leftCols(count) * c;
        }
    };

    LanczosResult best;
    best.residual = std::numeric_limits<double>::infinity();
    int matvecs = 0;

    while (matvecs < opts.max_matvecs) {
        // extend the basis by one Lanczos vector
        CVector w = apply(B.col(m));
        ++matvecs;
        {
            CVector c = B.leftCols(m + 1).adjoint() * w;
            T(m, m) = std::real(c[m]);
            w.noalias() -= B.leftCols(m + 1) * c;
        }
        orthogonalize(w, m + 1);
        const double beta = w.norm();

        bool exhausted = false;
        if (beta > 1e-13 * std::max(1.0, std::abs(T(m, m)))) {
            T(m, m + 1) = beta;
            T(m + 1, m) = beta;
            B.col(m + 1) = w / beta;
        } else if (m + 1 < dim) {
            CVector f = random_vector();
            orthogonalize(f, m + 1);
            const double fn = f.norm();
            if (fn < 1e-12) {
                exhausted = true;
            } else {
                T(m, m + 1) = 0.0;
                T(m + 1, m) = 0.0;
                B.col(m + 1) = f / fn;
            }
        } else {
            exhausted = true;
        }
        ++m;

        const bool full = (m == window) || (m >= dim) || exhausted;
        if (!full && matvecs < opts.max_matvecs) continue;

        // Rayleigh-Ritz on the filled block
        const int mm = std::min(m, dim);
        Eigen::SelfAdjointEigenSolver<RMatrix> es(T.topLeftCorner(mm, mm));
        const RVector& theta = es.eigenvalues();
        const RMatrix& Y = es.eigenvectors();

        CVector x = B.leftCols(mm) * Y.col(0).cast<Complex>();
        x /= x.norm();
        CVector Ax = apply(x);
        ++matvecs;
        const double ray = std::real(x.dot(Ax));
        const double res = (Ax - ray * x).norm();
        if (res < best.residual) {
            best.eigenvalue = ray;
            best.eigenvector = x;
            best.residual = res;
            best.matvecs = matvecs;
        }
        if (best.residual <= opts.tolerance) {
            best.converged = true;
            return best;
        }
        if (exhausted || m >= dim) {
            // whole space spanned: the Ritz value is exact up to rounding
            best.converged =
                best.residual <= std::max(opts.tolerance, 1e-10 * std::max(1.0, std::abs(best.eigenvalue)));
            return best;
        }

        // thick restart: keep the lowest Ritz vectors plus the continuation
        // vector, with the arrowhead coupling in the projected matrix
        const int kk = std::min(keep, mm - 1);
        CMatrix kept = B.leftCols(mm) * Y.leftCols(kk).cast<Complex>();
        const double beta_last = T(mm - 1, mm);
        CVector cont = B.col(mm);
        T.setZero();
        for (int i = 0; i < kk; ++i) {
            T(i, i) = theta[i];
            const double s = beta_last * Y(mm - 1, i);
            T(i, kk) = s;
            T(kk, i) = s;
        }
        B.leftCols(kk) = kept;
        B.col(kk) = cont;
        m = kk;
    }
    return best;
}

}  // namespace polaron
