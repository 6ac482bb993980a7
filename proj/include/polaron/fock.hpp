#pragma once

#include <Eigen/Sparse>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "polaron/lanczos.hpp"
#include "polaron/pekar.hpp"

// Truncated second-quantized engine: occupation-number basis over a finite
// symmetric mode set, rescaled-CCR ladder operators ([a_j, a_l^+] =
// delta_jl / alpha^2 below the cutoff), Hamiltonian assembly, coherent
// states, and Lanczos ground states.
//
// Mode conventions:
//   * the mode set holds signed dual indices s, k = 2*pi*s/L, closed under
//     s -> -s; the quadrature weight per mode is w = h, which makes
//     sum_j w |vhat(k_j)|^2 = ||v||^2 when every mode is retained (Parseval)
//   * the orthonormal one-mode wave functions are exp(i k x)/sqrt(L); the
//     particle-position-dependent coupling of mode j in the interaction term
//     is sqrt(w) * conj(vhat_j) * exp(-i k_j x)
//   * composite coefficients are grid-major: index = x * fock_dim + F, and
//     states are normalized in the h-weighted norm h * sum |coef|^2 = 1.

namespace polaron {

class ModeSet {
public:
    ModeSet(const Grid& grid, std::vector<int> signed_modes)
        : grid_(grid), signed_(std::move(signed_modes)) {
        for (int s : signed_) {
            if (std::abs(s) >= grid_.points() / 2)
                throw ValidationError("mode set: index beyond the dual lattice (Nyquist excluded)");
            bool has_partner = false;
            for (int t : signed_)
                if (t == -s) has_partner = true;
            if (!has_partner)
                throw ValidationError("mode set: not closed under k -> -k");
        }
        for (size_t a = 0; a < signed_.size(); ++a)
            for (size_t b = a + 1; b < signed_.size(); ++b)
                if (signed_[a] == signed_[b]) throw ValidationError("mode set: duplicate mode");
    }

    const Grid& grid() const { return grid_; }
    int count() const { return static_cast<int>(signed_.size()); }
    int signed_index(int j) const { return signed_[static_cast<size_t>(j)]; }
    int bin(int j) const { return grid_.bin_of_mode(signed_[static_cast<size_t>(j)]); }
    double wavenumber(int j) const { return 2.0 * pi * signed_[static_cast<size_t>(j)] / grid_.length(); }
    /// Dual-lattice quadrature weight (uniform).
    double weight() const { return grid_.spacing(); }

    /// Position of -k_j inside the set.
    int negation(int j) const {
        for (int l = 0; l < count(); ++l)
            if (signed_[static_cast<size_t>(l)] == -signed_[static_cast<size_t>(j)]) return l;
        throw ValidationError("mode set: negation missing");
    }

private:
    Grid grid_;
    std::vector<int> signed_;
};

/// The M lowest-|k| modes forming a negation-closed set: odd M includes the
/// zero mode, even M starts from the +-1 pair.
inline ModeSet make_mode_set(const Grid& grid, int M) {
    if (M < 1 || M > grid.points() - 1)
        throw ConfigurationError("make_mode_set: mode count out of range");
    std::vector<int> s;
    if (M % 2 == 1) s.push_back(0);
    for (int q = 1; static_cast<int>(s.size()) < M; ++q) {
        s.push_back(q);
        s.push_back(-q);
    }
    if (static_cast<int>(s.size()) != M)
        throw ConfigurationError("make_mode_set: cannot close an even count with the zero mode");
    return ModeSet(grid, std::move(s));
}

/// Occupation-number basis with total-excitation cutoff, graded
/// lexicographic enumeration.  Cheap to copy (shared immutable tables).
class FockBasis {
public:
    FockBasis(int modes, int total_cutoff) : impl_(std::make_shared<Impl>(modes, total_cutoff)) {}

    int modes() const { return impl_->modes; }
    int cutoff() const { return impl_->cutoff; }
    int dimension() const { return static_cast<int>(impl_->occupations.size()); }
    const std::vector<int>& occupation(int index) const {
        return impl_->occupations[static_cast<size_t>(index)];
    }
    int total_occupation(int index) const { return impl_->totals[static_cast<size_t>(index)]; }
    int index_of(const std::vector<int>& occ) const {
        auto it = impl_->lookup.find(occ);
        return it == impl_->lookup.end() ? -1 : it->second;
    }
    /// Index after n_mode -> n_mode + 1, or -1 if that leaves the truncation.
    int raised(int index, int mode) const {
        return impl_->raised[static_cast<size_t>(index) * impl_->modes + mode];
    }
    /// Index after n_mode -> n_mode - 1, or -1 if n_mode = 0.
    int lowered(int index, int mode) const {
        return impl_->lowered[static_cast<size_t>(index) * impl_->modes + mode];
    }

    bool operator==(const FockBasis& o) const {
        return impl_->modes == o.impl_->modes && impl_->cutoff == o.impl_->cutoff;
    }

private:
    struct Impl {
        int modes;
        int cutoff;
        std::vector<std::vector<int>> occupations;
        std::vector<int> totals;
        std::map<std::vector<int>, int> lookup;
        std::vector<int> raised;
        std::vector<int> lowered;

        Impl(int M, int N) : modes(M), cutoff(N) {
            if (M < 1) throw ConfigurationError("fock basis: need at least one mode");
            if (N < 0) throw ConfigurationError("fock basis: negative cutoff");
            // dimension is C(M+N, M); refuse before enumerating anything
            double dim_estimate = 1.0;
            for (int i = 1; i <= M; ++i) dim_estimate *= double(N + i) / i;
            if (dim_estimate > 2e6)
                throw CapacityError("fock basis: dimension " + std::to_string(dim_estimate) +
                                    " exceeds the 2e6 budget; limiting parameter: excitation cutoff");
            std::vector<int> occ(static_cast<size_t>(M), 0);
            for (int total = 0; total <= N; ++total) enumerate(occ, 0, total);
            for (size_t i = 0; i < occupations.size(); ++i) lookup[occupations[i]] = static_cast<int>(i);
            raised.assign(occupations.size() * static_cast<size_t>(M), -1);
            lowered.assign(occupations.size() * static_cast<size_t>(M), -1);
            for (size_t i = 0; i < occupations.size(); ++i) {
                std::vector<int> tmp = occupations[i];
                for (int j = 0; j < M; ++j) {
                    tmp[static_cast<size_t>(j)] += 1;
                    auto up = lookup.find(tmp);
                    if (up != lookup.end()) raised[i * static_cast<size_t>(M) + j] = up->second;
                    tmp[static_cast<size_t>(j)] -= 2;
                    if (tmp[static_cast<size_t>(j)] >= 0) {
                        auto down = lookup.find(tmp);
                        if (down != lookup.end()) lowered[i * static_cast<size_t>(M) + j] = down->second;
                    }
                    tmp[static_cast<size_t>(j)] += 1;
                }
            }
        }

        void enumerate(std::vector<int>& occ, int mode, int remaining) {
            if (mode == modes - 1) {
                occ[static_cast<size_t>(mode)] = remaining;
                occupations.push_back(occ);
                int total = 0;
                for (int v : occ) total += v;
                totals.push_back(total);
                return;
            }
            for (int q = 0; q <= remaining; ++q) {
                occ[static_cast<size_t>(mode)] = q;
                enumerate(occ, mode + 1, remaining - q);
            }
            occ[static_cast<size_t>(mode)] = 0;
        }
    };

    std::shared_ptr<const Impl> impl_;
};

class SparseOperator {
public:
    using Triplet = Eigen::Triplet<Complex>;

    SparseOperator() = default;

    static SparseOperator from_triplets(int dim, const std::vector<Triplet>& entries,
                                        bool expect_hermitian) {
        SparseOperator op;
        op.matrix_.resize(dim, dim);
        op.matrix_.setFromTriplets(entries.begin(), entries.end());
        op.matrix_.makeCompressed();
        if (expect_hermitian) op.verify_hermitian();
        return op;
    }

    int dimension() const { return static_cast<int>(matrix_.rows()); }
    std::int64_t nonzeros() const { return matrix_.nonZeros(); }
    bool hermitian() const { return hermitian_; }
    const Eigen::SparseMatrix<Complex>& matrix() const { return matrix_; }

    CVector apply(const CVector& x) const { return matrix_ * x; }
    CVector operator*(const CVector& x) const { return matrix_ * x; }

    CMatrix to_dense() const { return CMatrix(matrix_); }

    double hermiticity_defect() const {
        Eigen::SparseMatrix<Complex> diff =
            matrix_ - Eigen::SparseMatrix<Complex>(matrix_.adjoint());
        double worst = 0.0;
        for (int k = 0; k < diff.outerSize(); ++k)
            for (Eigen::SparseMatrix<Complex>::InnerIterator it(diff, k); it; ++it)
                worst = std::max(worst, std::abs(it.value()));
        return worst;
    }

    void verify_hermitian(double tol = 1e-12) {
        const double defect = hermiticity_defect();
        if (defect > tol)
            throw ValidationError("sparse operator: hermiticity defect " + std::to_string(defect));
        hermitian_ = true;
    }

    SparseOperator plus(const SparseOperator& other) const {
        SparseOperator out;
        out.matrix_ = matrix_ + other.matrix_;
        out.matrix_.makeCompressed();
        out.hermitian_ = hermitian_ && other.hermitian_;
        return out;
    }

private:
    Eigen::SparseMatrix<Complex> matrix_;
    bool hermitian_ = false;
};

/// a_j lowers n_j with amplitude sqrt(n_j)/alpha; returns (a_j, a_j^dagger).
inline std::pair<SparseOperator, SparseOperator> ladder_operators(const FockBasis& basis,
                                                                  int mode, double alpha) {
    if (mode < 0 || mode >= basis.modes())
        throw ConfigurationError("ladder_operators: mode out of range");
    const int D = basis.dimension();
    std::vector<SparseOperator::Triplet> lower, raise;
    for (int i = 0; i < D; ++i) {
        const int n = basis.occupation(i)[static_cast<size_t>(mode)];
        const int down = basis.lowered(i, mode);
        if (down >= 0) lower.emplace_back(down, i, Complex(std::sqrt(double(n)) / alpha, 0.0));
        const int up = basis.raised(i, mode);
        if (up >= 0) raise.emplace_back(up, i, Complex(std::sqrt(double(n + 1)) / alpha, 0.0));
    }
    return {SparseOperator::from_triplets(D, lower, false),
            SparseOperator::from_triplets(D, raise, false)};
}

/// Diagonal with entries (sum_j n_j)/alpha^2.
inline SparseOperator number_operator(const FockBasis& basis, double alpha) {
    const int D = basis.dimension();
    std::vector<SparseOperator::Triplet> entries;
    entries.reserve(static_cast<size_t>(D));
    for (int i = 0; i < D; ++i)
        entries.emplace_back(i, i, Complex(basis.total_occupation(i) / (alpha * alpha), 0.0));
    return SparseOperator::from_triplets(D, entries, true);
}

struct CompositeState {
    Grid grid;
    FockBasis basis;
    double alpha;
    CVector coefficients;  // grid-major, h-weighted norm 1

    Complex& at(int x, int fock) { return coefficients[x * basis.dimension() + fock]; }
    Complex at(int x, int fock) const { return coefficients[x * basis.dimension() + fock]; }

    double norm() const { return std::sqrt(grid.spacing()) * coefficients.norm(); }
    void normalize() { coefficients /= norm(); }
};

inline void require_normalized(const CompositeState& psi, const char* where) {
    if (std::abs(psi.norm() - 1.0) > 1e-10)
        throw ValidationError(std::string(where) + ": state is not normalized");
}

struct CompositeHamiltonian {
    Grid grid;
    ModeSet modes;
    FockBasis basis;
    double alpha;
    SparseOperator particle_term;     // (-Lap + V) (x) 1
    SparseOperator field_term;        // 1 (x) N_alpha
    SparseOperator interaction_term;  // sum_j (c_j(x) a_j^+ + h.c.)
    SparseOperator total;
    double neglected_interaction_weight;  // sum over dropped bins of h |vhat|^2

    int dimension() const { return grid.points() * basis.dimension(); }
};

/// Assemble H = (-Lap+V) (x) 1 + 1 (x) N_alpha + interaction on the
/// composite space.  Fails with CapacityError when the CSR storage would
/// exceed the desk-scale budget.
inline CompositeHamiltonian hamiltonian(const PekarProblem& problem, const ModeSet& modes,
                                        const FockBasis& basis, double alpha) {
    if (modes.grid() != problem.grid)
        throw ConfigurationError("hamiltonian: mode set built on a different grid");
    if (basis.modes() != modes.count())
        throw ConfigurationError("hamiltonian: basis mode count mismatch");
    if (!is_real(problem.v)) throw ValidationError("hamiltonian: v must be real");
    if (!(alpha > 0.0)) throw ValidationError("hamiltonian: alpha must be positive");

    const Grid& g = problem.grid;
    const int n = g.points();
    const int D = basis.dimension();
    const int M = modes.count();
    const std::int64_t nnz_estimate =
        static_cast<std::int64_t>(n) * n * D + 2LL * n * D * (M + 1);
    if (nnz_estimate > 12'000'000)
        throw CapacityError("hamiltonian: estimated nonzeros " + std::to_string(nnz_estimate) +
                            " exceed the 12e6 budget; limiting parameter: grid points x fock dimension");

    const std::int64_t dim = static_cast<std::int64_t>(n) * D;
    using T = SparseOperator::Triplet;

    // particle: dense circulant kinetic block plus the diagonal potential
    SparseOperator particle;
    {
        const RMatrix K = dense_laplacian(g);
        const RVector Vr = problem.V.values().real();
        std::vector<T> trips;
        trips.reserve(static_cast<size_t>(n) * n * D);
        for (int x = 0; x < n; ++x)
            for (int y = 0; y < n; ++y) {
                const double base = K(x, y) + (x == y ? Vr[x] : 0.0);
                if (base == 0.0 && x != y) continue;
                for (int F = 0; F < D; ++F)
                    trips.emplace_back(x * D + F, y * D + F, Complex(base, 0.0));
            }
        particle = SparseOperator::from_triplets(static_cast<int>(dim), trips, true);
    }

    // field: diagonal number operator
    SparseOperator field;
    {
        std::vector<T> trips;
        trips.reserve(static_cast<size_t>(dim));
        for (int x = 0; x < n; ++x)
            for (int F = 0; F < D; ++F)
                trips.emplace_back(x * D + F, x * D + F,
                                   Complex(basis.total_occupation(F) / (alpha * alpha), 0.0));
        field = SparseOperator::from_triplets(static_cast<int>(dim), trips, true);
    }

    const Field vhat = fourier_transform(problem.v);

    // interaction: coupling c_j(x) = sqrt(w) conj(vhat_j) exp(-i k_j x)
    SparseOperator interaction;
    {
        const double sqrt_w = std::sqrt(modes.weight());
        std::vector<T> trips;
        for (int j = 0; j < M; ++j) {
            const Complex vj = vhat[modes.bin(j)];
            const double k = modes.wavenumber(j);
            for (int x = 0; x < n; ++x) {
                const Complex c = sqrt_w * std::conj(vj) * std::polar(1.0, -k * g.point(x));
                for (int F = 0; F < D; ++F) {
                    const int up = basis.raised(F, j);
                    if (up < 0) continue;
                    const int nj = basis.occupation(F)[static_cast<size_t>(j)];
                    const Complex amp = c * std::sqrt(double(nj + 1)) / alpha;
                    trips.emplace_back(x * D + up, x * D + F, amp);
                    trips.emplace_back(x * D + F, x * D + up, std::conj(amp));
                }
            }
        }
        interaction = SparseOperator::from_triplets(static_cast<int>(dim), trips, true);
    }

    double neglected = 0.0;
    for (int b = 0; b < n; ++b) {
        bool kept = false;
        for (int j = 0; j < M; ++j)
            if (modes.bin(j) == b) kept = true;
        if (!kept) neglected += g.spacing() * std::norm(vhat[b]);
    }

    SparseOperator total = particle.plus(field).plus(interaction);
    total.verify_hermitian();
    return CompositeHamiltonian{g,     modes,       basis,       alpha,
                                particle, field,    interaction, total,
                                neglected};
}

struct GroundState {
    double energy;
    CompositeState state;
    double residual;
    int matvecs;
};

/// Lanczos lowest eigenpair of a hermitian sparse operator.
inline LanczosResult ground_state(const SparseOperator& H, double tol,
                                  const std::optional<CVector>& initial = std::nullopt,
                                  int max_matvecs = 20000, std::uint64_t seed = 1) {
    if (!H.hermitian())
        throw ValidationError("ground_state: operator is not flagged hermitian");
    LanczosOptions opts;
    opts.tolerance = tol;
    opts.max_matvecs = max_matvecs;
    opts.seed = seed;
    opts.initial = initial;
    LanczosResult r = lanczos_smallest([&](const CVector& x) { return H * x; }, H.dimension(), opts);
    if (!r.converged)
        throw ConvergenceError("ground_state: lanczos did not reach tolerance; best residual " +
                                   std::to_string(r.residual),
                               r.residual);
    return r;
}

/// Convenience wrapper constructing the normalized CompositeState.
inline GroundState ground_state(const CompositeHamiltonian& H, double tol,
                                const std::optional<CVector>& initial = std::nullopt,
                                int max_matvecs = 20000, std::uint64_t seed = 1) {
    LanczosResult r = ground_state(H.total, tol, initial, max_matvecs, seed);
    CompositeState state{H.grid, H.basis, H.alpha, r.eigenvector};
    state.normalize();
    return GroundState{r.eigenvalue, std::move(state), r.residual, r.matvecs};
}

struct CoherentExpansion {
    CVector coefficients;    // normalized on the truncated basis
    double truncation_error; // coherent mass beyond the cutoff
    bool reliable;           // truncation_error <= 0.01
    CVector amplitudes;      // z_j = alpha sqrt(w) uhat(k_j)
};

/// Truncated coherent state: coefficients prod_j e^{-|z|^2/2} z_j^{n_j}/sqrt(n_j!)
/// with z_j = alpha * uhat(k_j) * sqrt(w_j), renormalized on the basis.
inline CoherentExpansion coherent_state(const Field& u, const ModeSet& modes,
                                        const FockBasis& basis, double alpha) {
    if (u.grid() != modes.grid())
        throw ConfigurationError("coherent_state: field and modes on different grids");
    const int M = modes.count();
    const int D = basis.dimension();
    if (basis.modes() != M) throw ConfigurationError("coherent_state: basis mode count mismatch");

    const Field uhat = fourier_transform(u);
    CVector z(M);
    for (int j = 0; j < M; ++j) z[j] = alpha * std::sqrt(modes.weight()) * uhat[modes.bin(j)];

    const double total_mean = z.squaredNorm();
    CVector coeff(D);
    for (int F = 0; F < D; ++F) {
        Complex c = std::exp(-0.5 * total_mean);
        const std::vector<int>& occ = basis.occupation(F);
        for (int j = 0; j < M; ++j)
            for (int q = 1; q <= occ[static_cast<size_t>(j)]; ++q)
                c *= z[j] / std::sqrt(double(q));
        coeff[F] = c;
    }
    const double captured = coeff.squaredNorm();
    const double tail = std::max(0.0, 1.0 - captured);
    if (captured <= 0.0)
        throw NumericalFailure("coherent_state: captured mass is zero at this cutoff");
    coeff /= std::sqrt(captured);
    return CoherentExpansion{std::move(coeff), tail, tail <= 0.01, std::move(z)};
}

/// Poisson-tail cutoff: N_tot = ceil(alpha^2 ||u||^2 + s alpha ||u|| + s).
inline int cutoff_rule(const Field& u, double alpha, int safety) {
    if (safety < 3) throw ValidationError("cutoff_rule: safety must be >= 3");
    const double nu = norm(u);
    const double value = alpha * alpha * nu * nu + safety * alpha * nu + safety;
    return static_cast<int>(std::ceil(value - 1e-9));
}

/// psi (x) xi(u) as a composite coefficient vector (h-weighted norm 1).
inline CompositeState product_state(const Field& psi, const CoherentExpansion& xi,
                                    const FockBasis& basis, double alpha) {
    const Grid& g = psi.grid();
    const int n = g.points();
    const int D = basis.dimension();
    CVector coef(static_cast<std::int64_t>(n) * D);
    for (int x = 0; x < n; ++x)
        for (int F = 0; F < D; ++F) coef[x * D + F] = psi[x] * xi.coefficients[F];
    CompositeState state{g, basis, alpha, std::move(coef)};
    state.normalize();
    return state;
}

struct TrialEnergy {
    double energy;
    double mode_truncation_weight;  // h sum over dropped bins of |uhat|^2
    double fock_truncation_error;   // coherent tail mass at this cutoff
};

/// Rayleigh quotient of psi (x) xi(u) under the assembled Hamiltonian.
inline TrialEnergy product_trial_energy(const Field& psi, const Field& u,
                                        const CompositeHamiltonian& H) {
    if (std::abs(norm(psi) - 1.0) > 1e-10)
        throw ValidationError("product_trial_energy: psi must be normalized");
    CoherentExpansion xi = coherent_state(u, H.modes, H.basis, H.alpha);
    if (!xi.reliable)
        throw ValidationError("product_trial_energy: coherent truncation error exceeds 0.01");
    CompositeState trial = product_state(psi, xi, H.basis, H.alpha);
    const CVector Hx = H.total * trial.coefficients;
    const double energy = std::real(trial.coefficients.dot(Hx)) / trial.coefficients.squaredNorm();

    const Field uhat = fourier_transform(u);
    double dropped = 0.0;
    for (int b = 0; b < H.grid.points(); ++b) {
        bool kept = false;
        for (int j = 0; j < H.modes.count(); ++j)
            if (H.modes.bin(j) == b) kept = true;
        if (!kept) dropped += H.grid.spacing() * std::norm(uhat[b]);
    }
    return TrialEnergy{energy, dropped, xi.truncation_error};
}

}  // namespace polaron
