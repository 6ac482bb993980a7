#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "polaron/errors.hpp"

// Periodic 1-D spatial lattice with spectral derivatives and convolutions.
//
// Conventions (see docs/conventions.md):
//   * grid points x_i = i*h, i = 0..n-1, h = L/n, torus [0,L)
//   * inner product <f,g> = h * sum conj(f_i) g_i  (quadrature weight h)
//   * DFT is unitary on the coefficient vector:
//       fhat_j = n^{-1/2} sum_i f_i exp(-i k_j x_i),  k_j = 2*pi*s(j)/L
//     with s(j) the signed bin index in [-n/2, n/2).  Then the h-weighted
//     Parseval identity ||fhat|| = ||f|| holds exactly.
//   * periodic convolution (f*g)(x_i) = h * sum_l f_l g_{i-l}; in mode space
//     (f*g)hat_j = h*sqrt(n) * fhat_j * ghat_j.

namespace polaron {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using RMatrix = Eigen::MatrixXd;

inline constexpr double pi = std::numbers::pi;

class Grid {
public:
    Grid(int points_per_axis, double box_length)
        : n_(points_per_axis), length_(box_length) {
        if (n_ < 8 || (n_ & (n_ - 1)) != 0)
            throw ConfigurationError("grid: points_per_axis must be a power of two >= 8");
        if (!(length_ > 0.0))
            throw ConfigurationError("grid: box_length must be positive");
    }

    int dimension() const { return 1; }
    int points() const { return n_; }
    double length() const { return length_; }
    double spacing() const { return length_ / n_; }
    double point(int i) const { return i * spacing(); }

    /// Signed dual index of DFT bin b: s in [-n/2, n/2).
    int signed_mode(int bin) const { return bin < n_ / 2 ? bin : bin - n_; }
    /// DFT bin of the signed dual index s.
    int bin_of_mode(int s) const { return s >= 0 ? s : s + n_; }
    /// k_j = 2*pi*s(bin)/L.
    double wavenumber(int bin) const { return 2.0 * pi * signed_mode(bin) / length_; }

    bool operator==(const Grid& o) const {
        return n_ == o.n_ && length_ == o.length_;
    }
    bool operator!=(const Grid& o) const { return !(*this == o); }

private:
    int n_;
    double length_;
};

class Field {
public:
    explicit Field(const Grid& grid) : grid_(grid), values_(CVector::Zero(grid.points())) {}

    Field(const Grid& grid, CVector values) : grid_(grid), values_(std::move(values)) {
        if (values_.size() != grid_.points())
            throw ConfigurationError("field: value array size does not match grid");
    }

    const Grid& grid() const { return grid_; }
    const CVector& values() const { return values_; }
    CVector& values() { return values_; }
    Complex operator[](int i) const { return values_[i]; }
    Complex& operator[](int i) { return values_[i]; }
    int size() const { return values_.size(); }

private:
    Grid grid_;
    CVector values_;
};

inline void require_same_grid(const Field& f, const Field& g, const char* where) {
    if (f.grid() != g.grid())
        throw ConfigurationError(std::string(where) + ": fields live on different grids");
}

/// h-weighted L^2 inner product, antilinear in the first argument.
inline Complex inner_product(const Field& f, const Field& g) {
    require_same_grid(f, g, "inner_product");
    return f.grid().spacing() * f.values().dot(g.values());
}

inline double norm_squared(const Field& f) {
    return f.grid().spacing() * f.values().squaredNorm();
}

inline double norm(const Field& f) { return std::sqrt(norm_squared(f)); }

namespace detail {

/// In-place unitary radix-2 FFT; sign = -1 forward, +1 inverse.
inline void fft_radix2(CVector& a, int sign) {
    const int n = static_cast<int>(a.size());
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    // twiddle table w_j = exp(sign * 2*pi*i * j / n), one polar() per entry
    std::vector<Complex> tw(n / 2);
    for (int j = 0; j < n / 2; ++j) tw[j] = std::polar(1.0, sign * 2.0 * pi * j / n);
    for (int len = 2; len <= n; len <<= 1) {
        const int stride = n / len;
        for (int i = 0; i < n; i += len) {
            for (int k = 0; k < len / 2; ++k) {
                const Complex w = tw[static_cast<size_t>(k) * stride];
                const Complex u = a[i + k];
                const Complex t = w * a[i + k + len / 2];
                a[i + k] = u + t;
                a[i + k + len / 2] = u - t;
            }
        }
    }
    a *= 1.0 / std::sqrt(static_cast<double>(n));
}

}  // namespace detail

/// Unitary DFT: bin j holds the coefficient of mode k_j.
inline Field fourier_transform(const Field& f) {
    CVector a = f.values();
    detail::fft_radix2(a, -1);
    return Field(f.grid(), std::move(a));
}

inline Field inverse_fourier_transform(const Field& f) {
    CVector a = f.values();
    detail::fft_radix2(a, +1);
    return Field(f.grid(), std::move(a));
}

/// Spectral -Laplacian: multiplication by |k|^2 in mode space.
inline Field laplacian_apply(const Field& f) {
    const Grid& g = f.grid();
    CVector a = f.values();
    detail::fft_radix2(a, -1);
    for (int b = 0; b < g.points(); ++b) {
        const double k = g.wavenumber(b);
        a[b] *= k * k;
    }
    detail::fft_radix2(a, +1);
    return Field(g, std::move(a));
}

/// Spectral first derivative (multiplication by ik).
inline Field derivative(const Field& f) {
    const Grid& g = f.grid();
    CVector a = f.values();
    detail::fft_radix2(a, -1);
    for (int b = 0; b < g.points(); ++b) a[b] *= Complex(0.0, g.wavenumber(b));
    // the unpaired Nyquist mode has no conjugate partner; zero it so that
    // real inputs keep a real derivative
    a[g.points() / 2] = 0.0;
    detail::fft_radix2(a, +1);
    return Field(g, std::move(a));
}

/// Periodic convolution with quadrature weight: (f*g)(x) = h sum_y f(y) g(x-y).
inline Field convolve(const Field& f, const Field& g) {
    require_same_grid(f, g, "convolve");
    const Grid& gr = f.grid();
    CVector a = f.values(), b = g.values();
    detail::fft_radix2(a, -1);
    detail::fft_radix2(b, -1);
    const double scale = gr.spacing() * std::sqrt(static_cast<double>(gr.points()));
    a.array() *= b.array();
    a *= scale;
    detail::fft_radix2(a, +1);
    return Field(gr, std::move(a));
}

/// Cross-correlation: (f?g)(y) = h sum_x f(x) g(x-y); mode j picks up
/// h*sqrt(n) * fhat_j * ghat_{-j}.  Coincides with convolve(f,g) for even g.
inline Field correlate(const Field& f, const Field& g) {
    require_same_grid(f, g, "correlate");
    const Grid& gr = f.grid();
    const int n = gr.points();
    CVector a = f.values(), b = g.values();
    detail::fft_radix2(a, -1);
    detail::fft_radix2(b, -1);
    const double scale = gr.spacing() * std::sqrt(static_cast<double>(n));
    CVector c(n);
    for (int j = 0; j < n; ++j) {
        int s = -gr.signed_mode(j);
        if (s == n / 2) s = -n / 2;  // Nyquist is its own reflection
        c[j] = scale * a[j] * b[gr.bin_of_mode(s)];
    }
    detail::fft_radix2(c, +1);
    return Field(gr, std::move(c));
}

/// Translate by delta (periodically), exact on the grid via Fourier phases.
inline Field shift(const Field& f, double delta) {
    const Grid& g = f.grid();
    CVector a = f.values();
    detail::fft_radix2(a, -1);
    for (int b = 0; b < g.points(); ++b)
        a[b] *= std::polar(1.0, -g.wavenumber(b) * delta);
    detail::fft_radix2(a, +1);
    return Field(g, std::move(a));
}

/// Dense matrix of the spectral -Laplacian: K(i,l) = n^{-1} sum_b k_b^2
/// exp(i k_b (x_i - x_l)).  Real symmetric circulant.
inline RMatrix dense_laplacian(const Grid& g) {
    const int n = g.points();
    CVector modes(n);
    for (int b = 0; b < n; ++b) {
        const double k = g.wavenumber(b);
        modes[b] = k * k;
    }
    detail::fft_radix2(modes, +1);  // kernel[t] = n^{-1/2} sum_b k_b^2 e^{i k_b x_t}
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    RMatrix K(n, n);
    for (int i = 0; i < n; ++i)
        for (int l = 0; l < n; ++l) K(i, l) = scale * std::real(modes[(i - l + n) % n]);
    return K;
}

/// Torus distance from x to center.
inline double torus_distance(const Grid& g, double x, double center) {
    double d = std::fmod(std::abs(x - center), g.length());
    return std::min(d, g.length() - d);
}

inline Field field_from(const Grid& g, const std::function<Complex(double)>& fn) {
    CVector v(g.points());
    for (int i = 0; i < g.points(); ++i) v[i] = fn(g.point(i));
    return Field(g, std::move(v));
}

/// Periodized Gaussian amplitude * exp(-dist(x,center)^2 / (2 sigma^2)).
inline Field gaussian(const Grid& g, double amplitude, double center, double sigma) {
    return field_from(g, [&](double x) {
        const double d = torus_distance(g, x, center);
        return Complex(amplitude * std::exp(-d * d / (2.0 * sigma * sigma)), 0.0);
    });
}

/// Complex Gaussian-distributed field, deterministic for a given seed.
inline Field random_field(const Grid& g, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    CVector v(g.points());
    for (int i = 0; i < g.points(); ++i) v[i] = Complex(dist(rng), dist(rng));
    return Field(g, std::move(v));
}

inline Field normalized(const Field& f, double mass = 1.0) {
    const double nrm = norm(f);
    if (nrm == 0.0) throw NumericalFailure("normalized: zero field");
    Field out = f;
    out.values() *= std::sqrt(mass) / nrm;
    return out;
}

inline bool is_real(const Field& f, double tol = 1e-12) {
    return f.values().imag().cwiseAbs().maxCoeff() <= tol;
}

}  // namespace polaron
