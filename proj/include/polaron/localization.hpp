#pragma once

#include <string>
#include <utility>
#include <vector>

#include "polaron/densities.hpp"

// Localized states on the truncated composite space: the doubling isometry
// Y(Q), the q-localization Gamma_q built by conjugation and partial trace,
// the density-matrix identities it satisfies, and the IMS / energy-splitting
// diagnostics.
//
// The particle localizer is a multiplication operator (a real field with
// values in [0,1]); the field localizer is a hermitian M x M contraction,
// canonically the chi_R multiplication compressed to the retained modes and
// spectrally clipped to [0,1].

namespace polaron {

// --- partition of unity ------------------------------------------------------

inline double smoothstep5(double t) { return ((6.0 * t - 15.0) * t + 10.0) * t * t * t; }

struct PartitionOfUnity {
    double radius;             // R: chi = 1 inside, 0 beyond 2R
    double center;
    Field chi, eta;            // real, chi^2 + eta^2 = 1 pointwise
    Field grad_chi, grad_eta;  // spectral derivatives
    double gradient_constant;  // measured R^2 * max(|chi'|^2 + |eta'|^2)
};

/// chi(x) = cos((pi/2) s5(t)), eta = sin(...), t = clamp((dist-R)/R, 0, 1).
/// The angle profile keeps both chi and eta = sqrt(1-chi^2) C^2 smooth; a
/// plain polynomial chi would leave eta only C^1 at the inner edge.
inline PartitionOfUnity make_partition(const Grid& g, double R, double center) {
    if (!(R > 0.0) || R > g.length() / 2.0)
        throw ConfigurationError("make_partition: need 0 < R <= L/2");
    auto profile_t = [&](double x) {
        return std::clamp((torus_distance(g, x, center) - R) / R, 0.0, 1.0);
    };
    Field chi = field_from(g, [&](double x) {
        const double t = profile_t(x);
        if (t <= 0.0) return Complex(1.0, 0.0);
        if (t >= 1.0) return Complex(0.0, 0.0);
        return Complex(std::cos(0.5 * pi * smoothstep5(t)), 0.0);
    });
    Field eta = field_from(g, [&](double x) {
        const double t = profile_t(x);
        if (t <= 0.0) return Complex(0.0, 0.0);
        if (t >= 1.0) return Complex(1.0, 0.0);
        return Complex(std::sin(0.5 * pi * smoothstep5(t)), 0.0);
    });
    Field grad_chi = derivative(chi);
    grad_chi.values() = grad_chi.values().real().cast<Complex>();
    Field grad_eta = derivative(eta);
    grad_eta.values() = grad_eta.values().real().cast<Complex>();
    double peak = 0.0;
    for (int i = 0; i < g.points(); ++i)
        peak = std::max(peak, std::norm(grad_chi[i]) + std::norm(grad_eta[i]));
    return PartitionOfUnity{R,   center,   std::move(chi),      std::move(eta),
                            std::move(grad_chi), std::move(grad_eta), R * R * peak};
}

// --- mode-side localizers ----------------------------------------------------

/// Compression of a multiplication operator to the retained mode subspace:
/// q_{jl} = <phi_j, f phi_l> with phi_j = e^{i k_j x}/sqrt(L).
inline CMatrix compress_to_modes(const Field& f, const ModeSet& modes) {
    if (f.grid() != modes.grid())
        throw ConfigurationError("compress_to_modes: field and modes on different grids");
    const Grid& g = f.grid();
    const int M = modes.count();
    CMatrix q(M, M);
    for (int j = 0; j < M; ++j)
        for (int l = 0; l < M; ++l) {
            Complex acc = 0.0;
            const double dk = modes.wavenumber(l) - modes.wavenumber(j);
            for (int x = 0; x < g.points(); ++x)
                acc += f[x] * std::polar(1.0, dk * g.point(x));
            q(j, l) = acc * g.spacing() / g.length();
        }
    return 0.5 * (q + q.adjoint()).eval();
}

/// Clip a hermitian matrix's spectrum into [0,1].
inline CMatrix clip_spectrum(const CMatrix& q) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(q);
    RVector lam = es.eigenvalues().cwiseMax(0.0).cwiseMin(1.0);
    return es.eigenvectors() * lam.asDiagonal().toDenseMatrix().cast<Complex>() *
           es.eigenvectors().adjoint();
}

/// sqrt(1 - q^2) through the spectral calculus, clipped into [0,1].
inline CMatrix complement_contraction(const CMatrix& q) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(q);
    RVector lam = es.eigenvalues().cwiseMax(0.0).cwiseMin(1.0);
    RVector comp(lam.size());
    for (int i = 0; i < lam.size(); ++i) comp[i] = std::sqrt(std::max(0.0, 1.0 - lam[i] * lam[i]));
    return es.eigenvectors() * comp.asDiagonal().toDenseMatrix().cast<Complex>() *
           es.eigenvectors().adjoint();
}

/// Multiplicativity defect of the compression, max |compress(f^2)-compress(f)^2|;
/// this is the price of localizing field modes on a hard mode truncation.
inline double compression_defect(const Field& f, const ModeSet& modes) {
    Field f2 = f;
    f2.values() = f.values().array().square();
    const CMatrix direct = compress_to_modes(f2, modes);
    const CMatrix squared = compress_to_modes(f, modes) * compress_to_modes(f, modes);
    return (direct - squared).cwiseAbs().maxCoeff();
}

// --- doubling isometry ---------------------------------------------------------

struct DoublingIsometry {
    FockBasis doubled;  // 2M modes, same total cutoff
    CMatrix map;        // D2 x D
    CMatrix q;          // mode contraction
    CMatrix complement; // sqrt(1 - q^2)
};

/// Y(Q): F(M) -> F(2M) ~ F (x) F implementing f -> qf (+) sqrt(1-q^2) f on
/// every excitation; exact isometry on the truncated space (the lift
/// preserves total excitation number).
inline DoublingIsometry doubling_isometry(const CMatrix& q, const FockBasis& basis) {
    const int M = basis.modes();
    if (q.rows() != M || q.cols() != M)
        throw ConfigurationError("doubling_isometry: contraction dimension mismatch");
    if ((q - q.adjoint()).cwiseAbs().maxCoeff() > 1e-12)
        throw ValidationError("doubling_isometry: q must be hermitian");
    {
        Eigen::SelfAdjointEigenSolver<CMatrix> es(q);
        if (es.eigenvalues().minCoeff() < -1e-12 || es.eigenvalues().maxCoeff() > 1.0 + 1e-12)
            throw ValidationError("doubling_isometry: spectrum of q must lie in [0,1]");
    }
    const CMatrix s = complement_contraction(q);

    FockBasis doubled(2 * M, basis.cutoff());
    const int D = basis.dimension(), D2 = doubled.dimension();
    if (static_cast<std::int64_t>(D) * D2 > 50'000'000)
        throw CapacityError("doubling_isometry: dense map would exceed the budget; "
                            "limiting parameter: doubled fock dimension");

    CMatrix Y = CMatrix::Zero(D2, D);
    Y(0, 0) = 1.0;  // vacuum to doubled vacuum
    for (int i = 1; i < D; ++i) {
        int j = 0;
        while (basis.occupation(i)[static_cast<size_t>(j)] == 0) ++j;
        const int parent = basis.lowered(i, j);
        const double nj = basis.occupation(i)[static_cast<size_t>(j)];
        // Y |i> = (1/sqrt(n_j)) ( c^+(q e_j) + d^+(s e_j) ) Y |parent>
        for (int G = 0; G < D2; ++G) {
            const Complex base = Y(G, parent);
            if (base == Complex(0.0)) continue;
            for (int l = 0; l < M; ++l) {
                if (q(l, j) != Complex(0.0)) {
                    const int up = doubled.raised(G, l);
                    if (up >= 0) {
                        const double amp =
                            std::sqrt(double(doubled.occupation(G)[static_cast<size_t>(l)] + 1));
                        Y(up, i) += q(l, j) * amp * base;
                    }
                }
                if (s(l, j) != Complex(0.0)) {
                    const int up = doubled.raised(G, M + l);
                    if (up >= 0) {
                        const double amp = std::sqrt(
                            double(doubled.occupation(G)[static_cast<size_t>(M + l)] + 1));
                        Y(up, i) += s(l, j) * amp * base;
                    }
                }
            }
        }
        Y.col(i) /= std::sqrt(nj);
    }
    return DoublingIsometry{std::move(doubled), std::move(Y), q, s};
}

// --- localization of states ----------------------------------------------------

struct LocalizedState {
    CMatrix gamma_q;  // composite density operator on the original space
    Field q_particle;
    CMatrix q_field;
    double trace;
};

/// Gamma_q via Tr[(A(x)B) Gamma_q] = Tr[Y* (qAq (x) B (x) 1) Y Gamma]:
/// conjugate each spectral component of Gamma through (q_p (x) Y) and trace
/// out the second Fock factor.
inline LocalizedState localize(const CMatrix& Gamma, const Grid& g, const FockBasis& basis,
                               const Field& q_particle, const CMatrix& q_field,
                               std::int64_t capacity = 200000) {
    const int n = g.points(), D = basis.dimension();
    if (Gamma.rows() != n * D || Gamma.cols() != n * D)
        throw ConfigurationError("localize: state dimension mismatch");
    if (q_particle.grid() != g) throw ConfigurationError("localize: q_particle grid mismatch");
    for (int i = 0; i < n; ++i) {
        if (std::abs(std::imag(q_particle[i])) > 1e-12 || std::real(q_particle[i]) < -1e-12 ||
            std::real(q_particle[i]) > 1.0 + 1e-12)
            throw ValidationError("localize: q_particle values must lie in [0,1]");
    }

    DoublingIsometry iso = doubling_isometry(q_field, basis);
    const int D2 = iso.doubled.dimension();
    if (static_cast<std::int64_t>(n) * D2 > capacity)
        throw CapacityError("localize: doubled composite dimension " + std::to_string(
                                static_cast<std::int64_t>(n) * D2) +
                            " exceeds the budget " + std::to_string(capacity) +
                            "; limiting parameter: grid points x doubled fock dimension");

    // index split of the doubled basis: first M occupations -> original basis
    // index, last M occupations -> partial-trace group key
    const int M = basis.modes();
    std::vector<int> m_index(static_cast<size_t>(D2));
    std::map<std::vector<int>, std::vector<int>> groups;  // r-occupation -> doubled indices
    for (int G = 0; G < D2; ++G) {
        const std::vector<int>& occ = iso.doubled.occupation(G);
        std::vector<int> m(occ.begin(), occ.begin() + M);
        std::vector<int> r(occ.begin() + M, occ.end());
        m_index[static_cast<size_t>(G)] = basis.index_of(m);
        groups[r].push_back(G);
    }

    Eigen::SelfAdjointEigenSolver<CMatrix> es(Gamma);
    CMatrix gamma_q = CMatrix::Zero(n * D, n * D);
    const RVector qp = q_particle.values().real();

    for (int e = es.eigenvalues().size() - 1; e >= 0; --e) {
        const double lam = es.eigenvalues()[e];
        if (lam <= 1e-14) continue;
        detail::RowMajorMap C(es.eigenvectors().col(e).data(), n, D);
        CMatrix phi = C * iso.map.transpose();           // n x D2
        phi.array().colwise() *= qp.array().cast<Complex>();
        for (const auto& [rkey, members] : groups) {
            for (int Ga : members)
                for (int Gb : members) {
                    const int ma = m_index[static_cast<size_t>(Ga)];
                    const int mb = m_index[static_cast<size_t>(Gb)];
                    for (int x = 0; x < n; ++x)
                        for (int y = 0; y < n; ++y)
                            gamma_q(x * D + ma, y * D + mb) +=
                                lam * phi(x, Ga) * std::conj(phi(y, Gb));
                }
        }
    }
    LocalizedState out{std::move(gamma_q), q_particle, q_field, 0.0};
    out.trace = std::real(out.gamma_q.trace());
    return out;
}

// --- identity verification -------------------------------------------------------

struct LocalizationIdentityReport {
    double particle_deviation;  // gamma_q vs q gamma q
    double field_deviation;     // field11 of Gamma_q vs q[Tr_part(qGq)]^(1,1)q
    double sigma_deviation;     // sigma_q(f) vs q sigma(qf) q, over mode vectors
    double trace_deviation;     // Tr G - Tr G_q - Tr G_comp
    double trace_q;
    double trace_complement;
    double trace_input;
};

inline LocalizationIdentityReport verify_localization_identities(
    const CMatrix& Gamma, const Grid& g, const FockBasis& basis, const Field& q_particle,
    const CMatrix& q_field, std::int64_t capacity = 200000) {
    const int M = basis.modes();
    LocalizedState loc = localize(Gamma, g, basis, q_particle, q_field, capacity);

    Field q_comp(g);
    for (int i = 0; i < g.points(); ++i) {
        const double v = std::clamp(std::real(q_particle[i]), 0.0, 1.0);
        q_comp[i] = std::sqrt(1.0 - v * v);
    }
    LocalizedState comp = localize(Gamma, g, basis, q_comp, complement_contraction(q_field), capacity);

    LocalizationIdentityReport report{};
    report.trace_input = std::real(Gamma.trace());
    report.trace_q = loc.trace;
    report.trace_complement = comp.trace;
    report.trace_deviation = std::abs(report.trace_input - loc.trace - comp.trace);

    const CMatrix gamma = particle_density(Gamma, g, basis);
    const CMatrix gamma_q = particle_density(loc.gamma_q, g, basis);
    const RVector qp = q_particle.values().real();
    CMatrix rhs = gamma;
    for (int x = 0; x < g.points(); ++x)
        for (int y = 0; y < g.points(); ++y) rhs(x, y) *= qp[x] * qp[y];
    report.particle_deviation = (gamma_q - rhs).cwiseAbs().maxCoeff();

    // field identity
    const int n = g.points(), D = basis.dimension();
    CMatrix Gp = Gamma;
    for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y)
            for (int F = 0; F < D; ++F)
                for (int Fp = 0; Fp < D; ++Fp) Gp(x * D + F, y * D + Fp) *= qp[x] * qp[y];
    const CMatrix lhs_f = field_density11(loc.gamma_q, g, basis);
    const CMatrix rhs_f = q_field * field_density11(Gp, g, basis) * q_field;
    report.field_deviation = (lhs_f - rhs_f).cwiseAbs().maxCoeff();

    // interaction identity, probed with every mode basis vector
    double worst = 0.0;
    for (int j = 0; j < M; ++j) {
        CVector ej = CVector::Zero(M);
        ej[j] = 1.0;
        const CMatrix lhs_s = sigma_of(loc.gamma_q, g, basis, ej, 1.0);
        CMatrix rhs_s = sigma_of(Gamma, g, basis, q_field * ej, 1.0);
        for (int x = 0; x < n; ++x)
            for (int y = 0; y < n; ++y) rhs_s(x, y) *= qp[x] * qp[y];
        worst = std::max(worst, (lhs_s - rhs_s).cwiseAbs().maxCoeff());
    }
    report.sigma_deviation = worst;
    return report;
}

// --- IMS particle splitting -----------------------------------------------------

struct ImsReport {
    double identity_deviation;  // |Tr(Kg) - Tr(xKx g) - Tr(eKe g) - Tr(|grad|^2 g)|
    double gradient_constant;   // measured R^2 max(|chi'|^2+|eta'|^2)
    double gradient_term;       // Tr((|grad chi|^2+|grad eta|^2) gamma)
    double eta_kinetic;         // Tr(-eta Lap eta gamma)
};

inline ImsReport ims_check(const CMatrix& gamma, const PartitionOfUnity& part) {
    const Grid& g = part.chi.grid();
    const int n = g.points();
    if (gamma.rows() != n || gamma.cols() != n)
        throw ConfigurationError("ims_check: gamma dimension mismatch");
    const RMatrix K = dense_laplacian(g);
    const RVector chi = part.chi.values().real();
    const RVector eta = part.eta.values().real();
    RVector gradsq(n);
    for (int i = 0; i < n; ++i)
        gradsq[i] = std::norm(part.grad_chi[i]) + std::norm(part.grad_eta[i]);

    auto sandwich_trace = [&](const RVector& w) {
        Complex acc = 0.0;
        for (int x = 0; x < n; ++x)
            for (int y = 0; y < n; ++y) acc += w[x] * K(x, y) * w[y] * gamma(y, x);
        return std::real(acc);
    };
    const double full = std::real((K.cast<Complex>() * gamma).trace());
    const double chi_part = sandwich_trace(chi);
    const double eta_part = sandwich_trace(eta);
    double grad_term = 0.0;
    for (int x = 0; x < n; ++x) grad_term += gradsq[x] * std::real(gamma(x, x));

    ImsReport report;
    // -Lap = -chi Lap chi - eta Lap eta - |grad chi|^2 - |grad eta|^2
    report.identity_deviation = std::abs(full - chi_part - eta_part + grad_term);
    report.gradient_constant = part.gradient_constant;
    report.gradient_term = grad_term;
    report.eta_kinetic = eta_part;
    return report;
}

// --- energy splitting -------------------------------------------------------------

struct EnergySplitRow {
    double radius;
    double defect;            // Tr(H_V G) - Tr(H_V G_chi) - Tr(H_0 G_eta)
    double mass_chi;          // Tr(G_chi)
    double compression_defect;
    bool capacity_exceeded = false;
    std::string message;
};

/// Split the energy of a (quasi-)ground state between the well window and
/// its complement over a ladder of radii.  Rows that exceed the doubled-space
/// budget are flagged instead of aborting the ladder.
inline std::vector<EnergySplitRow> energy_split_check(const CompositeState& psi,
                                                      const std::vector<double>& radii,
                                                      double center,
                                                      const PekarProblem& problem,
                                                      const ModeSet& modes,
                                                      std::int64_t capacity = 200000) {
    require_normalized(psi, "energy_split_check");
    const Grid& g = psi.grid;
    const CompositeHamiltonian HV = hamiltonian(problem, modes, psi.basis, psi.alpha);
    PekarProblem free_problem(g, Field(g), problem.v, problem.mass);
    const CompositeHamiltonian H0 = hamiltonian(free_problem, modes, psi.basis, psi.alpha);
    const CMatrix HVd = HV.total.to_dense();
    const CMatrix H0d = H0.total.to_dense();

    CMatrix Gamma = g.spacing() * (psi.coefficients * psi.coefficients.adjoint());
    const double full_energy = std::real((HVd * Gamma).trace());

    std::vector<EnergySplitRow> rows;
    for (double R : radii) {
        EnergySplitRow row;
        row.radius = R;
        try {
            PartitionOfUnity part = make_partition(g, R, center);
            const CMatrix q_chi = clip_spectrum(compress_to_modes(part.chi, modes));
            row.compression_defect = compression_defect(part.chi, modes);
            LocalizedState loc_chi = localize(Gamma, g, psi.basis, part.chi, q_chi, capacity);
            LocalizedState loc_eta =
                localize(Gamma, g, psi.basis, part.eta, complement_contraction(q_chi), capacity);
            row.mass_chi = loc_chi.trace;
            row.defect = full_energy - std::real((HVd * loc_chi.gamma_q).trace()) -
                         std::real((H0d * loc_eta.gamma_q).trace());
        } catch (const CapacityError& err) {
            row.capacity_exceeded = true;
            row.message = err.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace polaron
