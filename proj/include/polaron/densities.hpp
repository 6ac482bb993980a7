#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "polaron/fock.hpp"

// Reduced density matrices of composite states, quasi-classical moments and
// their Pekar predictions, sweep diagnostics, and anti-Wick (Husimi) one-mode
// marginals.
//
// Matrix conventions: particle operators are plain n x n matrices acting on
// coefficient vectors; the particle density operator gamma includes the
// quadrature weight (gamma = h * sum_F Psi(.,F) Psi(.,F)^+), so trace(gamma)
// = 1 and trace(gamma * A) is the expectation of A.  The field matrix
// Gamma^(1,1) is stored in unscaled occupations, trace = alpha^2 <N_alpha>;
// the field vector Gamma^(1,0) uses the rescaled annihilators, so a coherent
// state xi(u) gives Gamma^(1,0)_j ~ sqrt(w) uhat(k_j).

namespace polaron {

struct ReducedDensities {
    CMatrix gamma;         // n x n, hermitian, trace 1
    CMatrix field11;       // M x M, hermitian, unscaled occupations
    CVector field10;       // M, <a_j> with rescaled a
    CMatrix sigma_kernel;  // n x M, sigma(x,x;mode j) = <Psi(x,.),(a_j+a_j^+)Psi(x,.)>
};

namespace detail {

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline RowMajorMap as_matrix(const CompositeState& psi) {
    return RowMajorMap(psi.coefficients.data(), psi.grid.points(), psi.basis.dimension());
}

/// Apply a one-mode annihilator columnwise: out(x,.) = a_j |psi(x,.)>.
inline CMatrix apply_annihilator(const CMatrix& C, const FockBasis& basis, int mode,
                                 double alpha) {
    CMatrix out = CMatrix::Zero(C.rows(), C.cols());
    for (int F = 0; F < basis.dimension(); ++F) {
        const int down = basis.lowered(F, mode);
        if (down < 0) continue;
        const double amp = std::sqrt(double(basis.occupation(F)[static_cast<size_t>(mode)])) / alpha;
        out.col(down) += amp * C.col(F);
    }
    return out;
}

inline CMatrix apply_creator(const CMatrix& C, const FockBasis& basis, int mode, double alpha) {
    CMatrix out = CMatrix::Zero(C.rows(), C.cols());
    for (int F = 0; F < basis.dimension(); ++F) {
        const int up = basis.raised(F, mode);
        if (up < 0) continue;
        const double amp =
            std::sqrt(double(basis.occupation(F)[static_cast<size_t>(mode)] + 1)) / alpha;
        out.col(up) += amp * C.col(F);
    }
    return out;
}

/// a(f) = sum_j conj(f_j) a_j for a mode-space vector f.
inline CMatrix apply_field_annihilator(const CMatrix& C, const FockBasis& basis,
                                       const CVector& f, double alpha) {
    CMatrix out = CMatrix::Zero(C.rows(), C.cols());
    for (int j = 0; j < basis.modes(); ++j)
        if (f[j] != Complex(0.0)) out += std::conj(f[j]) * apply_annihilator(C, basis, j, alpha);
    return out;
}

}  // namespace detail

inline ReducedDensities reduce(const CompositeState& psi) {
    require_normalized(psi, "reduce");
    const Grid& g = psi.grid;
    const FockBasis& basis = psi.basis;
    const double h = g.spacing();
    const int M = basis.modes();
    const CMatrix C = detail::as_matrix(psi);

    ReducedDensities out;
    out.gamma = h * (C * C.adjoint());
    out.gamma = 0.5 * (out.gamma + out.gamma.adjoint()).eval();

    std::vector<CMatrix> lowered;
    lowered.reserve(static_cast<size_t>(M));
    for (int j = 0; j < M; ++j)
        lowered.push_back(detail::apply_annihilator(C, basis, j, psi.alpha));

    out.field11.resize(M, M);
    out.field10.resize(M);
    for (int j = 0; j < M; ++j) {
        out.field10[j] = h * (C.conjugate().cwiseProduct(lowered[static_cast<size_t>(j)])).sum();
        for (int l = 0; l < M; ++l) {
            // unscaled <c_l^+ c_j> = alpha^2 <a_l^+ a_j>
            out.field11(j, l) =
                psi.alpha * psi.alpha * h *
                (lowered[static_cast<size_t>(l)].conjugate().cwiseProduct(lowered[static_cast<size_t>(j)]))
                    .sum();
        }
    }

    out.sigma_kernel.resize(g.points(), M);
    for (int j = 0; j < M; ++j) {
        CMatrix plus = lowered[static_cast<size_t>(j)] + detail::apply_creator(C, basis, j, psi.alpha);
        for (int x = 0; x < g.points(); ++x)
            out.sigma_kernel(x, j) = C.row(x).conjugate().cwiseProduct(plus.row(x)).sum();
    }
    return out;
}

// --- mixed-state reducers (dense composite density operators) --------------

/// Particle density of a dense composite density operator (h-convention,
/// trace(Gamma) = 1): gamma(x,y) = sum_F Gamma[(x,F),(y,F)].
inline CMatrix particle_density(const CMatrix& Gamma, const Grid& g, const FockBasis& basis) {
    const int n = g.points(), D = basis.dimension();
    CMatrix gamma = CMatrix::Zero(n, n);
    for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y)
            for (int F = 0; F < D; ++F) gamma(x, y) += Gamma(x * D + F, y * D + F);
    return gamma;
}

/// Field (1,1) matrix of a dense composite state, unscaled occupations.
inline CMatrix field_density11(const CMatrix& Gamma, const Grid& g, const FockBasis& basis) {
    const int n = g.points(), D = basis.dimension(), M = basis.modes();
    CMatrix out = CMatrix::Zero(M, M);
    // <c_l^+ c_j> = sum_x Tr( Gamma(x,x) c_l^+ c_j ):
    // Tr(Gamma(x,x) c_l^+ c_j) = sum_{F,F'} Gamma[(x,F),(x,F')] (c_l^+ c_j)_{F',F}
    for (int j = 0; j < M; ++j)
        for (int l = 0; l < M; ++l) {
            Complex acc = 0.0;
            for (int x = 0; x < n; ++x)
                for (int F = 0; F < D; ++F) {
                    const int down = basis.lowered(F, j);
                    if (down < 0) continue;
                    // c_j |F> = sqrt(n_j) |down>; then c_l^+ |down> = ... |F''>
                    const double a1 = std::sqrt(double(basis.occupation(F)[static_cast<size_t>(j)]));
                    const int up = basis.raised(down, l);
                    if (up < 0) continue;
                    const double a2 =
                        std::sqrt(double(basis.occupation(down)[static_cast<size_t>(l)] + 1));
                    acc += Gamma(x * D + F, x * D + up) * a1 * a2;
                }
            out(j, l) = acc;
        }
    return out;
}

/// sigma(f) as an n x n particle-operator kernel: (sigma(f))(x,y) =
/// Tr_F[ Gamma(x,y) (a^+(f) + a(f)) ] with rescaled ladder operators.
inline CMatrix sigma_of(const CMatrix& Gamma, const Grid& g, const FockBasis& basis,
                        const CVector& f, double alpha) {
    const int n = g.points(), D = basis.dimension(), M = basis.modes();
    if (f.size() != M) throw ConfigurationError("sigma_of: mode vector size mismatch");
    // dense (a^+(f) + a(f)) on the fock factor
    CMatrix op = CMatrix::Zero(D, D);
    for (int j = 0; j < M; ++j) {
        if (f[j] == Complex(0.0)) continue;
        for (int F = 0; F < D; ++F) {
            const int up = basis.raised(F, j);
            if (up >= 0)
                op(up, F) += f[j] *
                             std::sqrt(double(basis.occupation(F)[static_cast<size_t>(j)] + 1)) / alpha;
            const int down = basis.lowered(F, j);
            if (down >= 0)
                op(down, F) += std::conj(f[j]) *
                               std::sqrt(double(basis.occupation(F)[static_cast<size_t>(j)])) / alpha;
        }
    }
    CMatrix out = CMatrix::Zero(n, n);
    for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y) {
            Complex acc = 0.0;
            for (int F = 0; F < D; ++F)
                for (int Fp = 0; Fp < D; ++Fp) acc += Gamma(x * D + F, y * D + Fp) * op(Fp, F);
            out(x, y) = acc;
        }
    return out;
}

// --- moments ----------------------------------------------------------------

struct MomentRequest {
    CMatrix observable;              // n x n particle operator
    std::vector<CVector> annihilate; // f_1..f_k, mode-space vectors
    std::vector<CVector> create;     // g_1..g_l, mode-space vectors
    bool allow_higher = false;       // opt-in beyond k + l = 2
};

/// sqrt(k! l!) <Psi, A (x) a^+(g_1)..a^+(g_l) a(f_1)..a(f_k) Psi>.
inline Complex moment(const CompositeState& psi, const MomentRequest& req) {
    require_normalized(psi, "moment");
    const int k = static_cast<int>(req.annihilate.size());
    const int l = static_cast<int>(req.create.size());
    if (k + l > 2 && !req.allow_higher)
        throw ValidationError("moment: k+l > 2 requires the explicit opt-in flag");
    if (req.observable.rows() != psi.grid.points() || req.observable.cols() != psi.grid.points())
        throw ConfigurationError("moment: observable dimension mismatch");

    const CMatrix C = detail::as_matrix(psi);
    CMatrix right = C;
    for (int i = k - 1; i >= 0; --i)
        right = detail::apply_field_annihilator(right, psi.basis, req.annihilate[static_cast<size_t>(i)],
                                                psi.alpha);
    CMatrix left = C;
    for (int i = l - 1; i >= 0; --i)
        left = detail::apply_field_annihilator(left, psi.basis, req.create[static_cast<size_t>(i)],
                                               psi.alpha);

    double fact = 1.0;
    for (int q = 2; q <= k; ++q) fact *= q;
    for (int q = 2; q <= l; ++q) fact *= q;

    const CMatrix applied = req.observable * right;
    return std::sqrt(fact) * psi.grid.spacing() *
           left.conjugate().cwiseProduct(applied).sum();
}

/// Mode-space amplitudes of a classical field: u_j = sqrt(w) uhat(k_j).
inline CVector mode_amplitudes(const Field& u, const ModeSet& modes) {
    const Field uhat = fourier_transform(u);
    CVector z(modes.count());
    for (int j = 0; j < modes.count(); ++j)
        z[j] = std::sqrt(modes.weight()) * uhat[modes.bin(j)];
    return z;
}

/// Right-hand side of the convergence statement for a point mass at the
/// computed minimizer: <psi,A psi> prod <f_i, u_psi> prod <u_psi, g_i>.
inline Complex pekar_prediction(const PekarResult& result, const MomentRequest& req,
                                const ModeSet& modes) {
    const Field psi = normalized(result.psi);
    const double h = psi.grid().spacing();
    const CVector u = mode_amplitudes(result.u_psi, modes);
    Complex value = h * psi.values().dot(req.observable * psi.values());
    for (const CVector& f : req.annihilate) value *= f.dot(u);
    for (const CVector& g : req.create) value *= u.dot(g);
    return value;
}

// --- sweep diagnostics -------------------------------------------------------

/// ||A - B||_1 by dense hermitian eigendecomposition.
inline double trace_distance(const CMatrix& A, const CMatrix& B) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(A - B);
    return es.eigenvalues().cwiseAbs().sum();
}

/// Projector onto a normalized field, as a particle density operator.
inline CMatrix pure_density(const Field& psi) {
    const Field p = normalized(psi);
    return p.grid().spacing() * (p.values() * p.values().adjoint());
}

struct ProbeSet {
    std::vector<MomentRequest> probes;
    std::vector<std::string> names;

    /// Fixed fixture: identity, a position window, and first-order moments of
    /// the two lowest nonzero modes (one paired with the window observable).
    /// The zero mode is deliberately not probed: its sector decouples as a
    /// displaced oscillator, so its moment is exact at every alpha and the
    /// error is pure truncation noise.
    static ProbeSet standard(const Grid& g, const ModeSet& modes) {
        ProbeSet set;
        const int n = g.points();
        MomentRequest identity{CMatrix::Identity(n, n), {}, {}, false};
        set.probes.push_back(identity);
        set.names.push_back("identity");

        CMatrix window = CMatrix::Zero(n, n);
        for (int i = 0; i < n; ++i)
            if (torus_distance(g, g.point(i), g.length() / 2.0) <= g.length() / 8.0)
                window(i, i) = 1.0;
        set.probes.push_back(MomentRequest{window, {}, {}, false});
        set.names.push_back("window");

        const int j1 = modes.count() > 1 ? 1 : 0;
        const int j2 = modes.count() > 2 ? 2 : j1;
        CVector e1 = CVector::Zero(modes.count());
        e1[j1] = 1.0;
        set.probes.push_back(MomentRequest{CMatrix::Identity(n, n), {e1}, {}, false});
        set.names.push_back("a(mode1)");

        CVector e2 = CVector::Zero(modes.count());
        e2[j2] = 1.0;
        set.probes.push_back(MomentRequest{window, {e2}, {}, false});
        set.names.push_back("window_a(mode2)");
        return set;
    }
};

struct ConvergenceRow {
    double alpha;
    double trace_distance;
    std::vector<double> moment_errors;
    double mass_window_eighth;  // Tr[chi gamma chi], window radius L/8
    double mass_window_quarter; // window radius L/4
};

struct ConvergenceTable {
    std::vector<std::string> moment_names;
    std::vector<ConvergenceRow> rows;
    bool trace_distance_strictly_decreasing = false;
    bool moment_errors_strictly_decreasing = false;
    bool mass_non_decreasing = false;
};

/// Mass of gamma inside the smooth window of radius R centered at the well.
/// chi is the same profile the localization module uses.
inline double window_mass(const CMatrix& gamma, const Field& chi) {
    double mass = 0.0;
    for (int i = 0; i < chi.size(); ++i)
        mass += std::real(gamma(i, i)) * std::norm(chi[i]);
    return mass;
}

inline ConvergenceTable convergence_report(
    const std::vector<std::pair<double, CompositeState>>& sweep, const PekarResult& pekar,
    const ModeSet& modes, const ProbeSet& probes, const Field& window_eighth,
    const Field& window_quarter) {
    if (sweep.empty()) throw ValidationError("convergence_report: empty sweep");
    for (size_t i = 0; i + 1 < sweep.size(); ++i)
        if (!(sweep[i].first < sweep[i + 1].first))
            throw ValidationError("convergence_report: alpha values must strictly increase");
    for (const auto& [alpha, state] : sweep) {
        // the excitation cutoff may grow with alpha; grid and mode count must match
        if (state.grid != sweep.front().second.grid ||
            state.basis.modes() != sweep.front().second.basis.modes())
            throw ValidationError("convergence_report: sweep entries use different discretizations");
    }

    const CMatrix target = pure_density(pekar.psi);
    ConvergenceTable table;
    table.moment_names = probes.names;
    for (const auto& [alpha, state] : sweep) {
        ReducedDensities red = reduce(state);
        ConvergenceRow row;
        row.alpha = alpha;
        row.trace_distance = trace_distance(red.gamma, target);
        for (size_t p = 0; p < probes.probes.size(); ++p) {
            const Complex got = moment(state, probes.probes[p]);
            const Complex want = pekar_prediction(pekar, probes.probes[p], modes);
            row.moment_errors.push_back(std::abs(got - want));
        }
        row.mass_window_eighth = window_mass(red.gamma, window_eighth);
        row.mass_window_quarter = window_mass(red.gamma, window_quarter);
        table.rows.push_back(std::move(row));
    }

    table.trace_distance_strictly_decreasing = table.rows.size() > 1;
    table.moment_errors_strictly_decreasing = table.rows.size() > 1;
    table.mass_non_decreasing = table.rows.size() > 1;
    for (size_t i = 0; i + 1 < table.rows.size(); ++i) {
        if (!(table.rows[i + 1].trace_distance < table.rows[i].trace_distance))
            table.trace_distance_strictly_decreasing = false;
        for (size_t p = 0; p < table.rows[i].moment_errors.size(); ++p) {
            // the identity probe is exactly zero for every alpha; skip it
            if (table.moment_names[p] == "identity") continue;
            if (!(table.rows[i + 1].moment_errors[p] < table.rows[i].moment_errors[p]))
                table.moment_errors_strictly_decreasing = false;
        }
        if (table.rows[i + 1].mass_window_eighth < table.rows[i].mass_window_eighth - 1e-12 ||
            table.rows[i + 1].mass_window_quarter < table.rows[i].mass_window_quarter - 1e-12)
            table.mass_non_decreasing = false;
    }
    if (table.rows.size() <= 1) {
        table.trace_distance_strictly_decreasing = false;
        table.moment_errors_strictly_decreasing = false;
        table.mass_non_decreasing = false;
    }
    return table;
}

// --- anti-Wick / Husimi ------------------------------------------------------

struct HusimiSpec {
    int mode = 0;             // probe mode, index into the ModeSet
    double extent = 4.0;      // half-width of the quadrature square (u-plane)
    int cells_per_side = 101;
    Complex center = 0.0;     // center of the quadrature square (u-plane)
};

struct HusimiReport {
    int mode;
    Complex center;
    double extent;
    double cell_size;
    RMatrix density;     // q(u) at cell centers; row = re index, col = im index
    double total_mass;   // sum q * cell_area
    bool coarse_grid_warning;
};

/// One-mode occupation density matrix rho_j (tracing out particle and the
/// other modes); dimension (N_tot + 1)^2.
inline CMatrix one_mode_density(const CompositeState& psi, int mode) {
    require_normalized(psi, "one_mode_density");
    const FockBasis& basis = psi.basis;
    const int D = basis.dimension(), N = basis.cutoff();
    const CMatrix C = detail::as_matrix(psi);
    // group basis indices by the occupations of the other modes
    std::map<std::vector<int>, std::vector<std::pair<int, int>>> groups;  // rest -> (n_mode, F)
    for (int F = 0; F < D; ++F) {
        std::vector<int> rest = basis.occupation(F);
        const int nj = rest[static_cast<size_t>(mode)];
        rest[static_cast<size_t>(mode)] = 0;
        groups[rest].emplace_back(nj, F);
    }
    CMatrix rho = CMatrix::Zero(N + 1, N + 1);
    const double h = psi.grid.spacing();
    for (const auto& [rest, members] : groups)
        for (const auto& [m, F] : members)
            for (const auto& [mp, Fp] : members)
                rho(m, mp) += h * C.col(Fp).dot(C.col(F));
    return rho;
}

/// Husimi density of the one-mode marginal in the u-plane (z = alpha u):
/// q(u) = (alpha^2/pi) <xi(alpha u)| rho_j |xi(alpha u)>.
inline HusimiReport husimi_marginal(const CompositeState& psi, int mode, const HusimiSpec& spec) {
    if (mode < 0 || mode >= psi.basis.modes())
        throw ConfigurationError("husimi_marginal: probe mode out of range");
    const double alpha = psi.alpha;
    const CMatrix rho = one_mode_density(psi, mode);
    const int N = psi.basis.cutoff();
    const int cells = spec.cells_per_side;
    const double cell = 2.0 * spec.extent / cells;

    HusimiReport report;
    report.mode = mode;
    report.center = spec.center;
    report.extent = spec.extent;
    report.cell_size = cell;
    report.coarse_grid_warning = cell > 0.5 / alpha;
    report.density.resize(cells, cells);

    std::vector<double> inv_sqrt_fact(static_cast<size_t>(N) + 1, 1.0);
    for (int q = 1; q <= N; ++q)
        inv_sqrt_fact[static_cast<size_t>(q)] = inv_sqrt_fact[static_cast<size_t>(q) - 1] / std::sqrt(double(q));

    double total = 0.0;
    CVector overlap(N + 1);
    for (int a = 0; a < cells; ++a) {
        for (int b = 0; b < cells; ++b) {
            const Complex u = spec.center + Complex(-spec.extent + (a + 0.5) * cell,
                                                    -spec.extent + (b + 0.5) * cell);
            const Complex z = alpha * u;
            // <m|z> = e^{-|z|^2/2} z^m / sqrt(m!)
            Complex zm = 1.0;
            for (int m = 0; m <= N; ++m) {
                overlap[m] = zm * inv_sqrt_fact[static_cast<size_t>(m)];
                zm *= z;
            }
            const double gauss = std::exp(-std::norm(z));
            const double q = alpha * alpha / pi * gauss * std::real(overlap.dot(rho * overlap));
            report.density(a, b) = q;
            total += q * cell * cell;
        }
    }
    report.total_mass = total;
    return report;
}

/// Quadrature mass inside |u - center| <= radius.
inline double mass_within(const HusimiReport& report, Complex center, double radius) {
    const int cells = report.density.rows();
    double mass = 0.0;
    for (int a = 0; a < cells; ++a)
        for (int b = 0; b < cells; ++b) {
            const Complex u = report.center + Complex(-report.extent + (a + 0.5) * report.cell_size,
                                                      -report.extent + (b + 0.5) * report.cell_size);
            if (std::abs(u - center) <= radius)
                mass += report.density(a, b) * report.cell_size * report.cell_size;
        }
    return mass;
}

}  // namespace polaron
