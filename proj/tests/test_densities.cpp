#include <catch2/catch_amalgamated.hpp>

#include "polaron/densities.hpp"

using namespace polaron;

namespace {

struct Setup {
    Grid grid;
    ModeSet modes;
    FockBasis basis;
    PekarProblem problem;
};

Setup make_setup(int n = 16, double L = 8.0, int M = 3, int cutoff = 3) {
    Grid g(n, L);
    Field V = gaussian(g, -0.5, L / 2.0, L / 10.0);
    Field v = gaussian(g, 0.4, 0.0, L / 10.0);
    return Setup{g, make_mode_set(g, M), FockBasis(M, cutoff), PekarProblem(g, V, v, 1.0)};
}

CompositeState random_state(const Setup& s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    CVector coef(s.grid.points() * s.basis.dimension());
    for (int i = 0; i < coef.size(); ++i) coef[i] = Complex(dist(rng), dist(rng));
    CompositeState psi{s.grid, s.basis, 1.5, std::move(coef)};
    psi.normalize();
    return psi;
}

CompositeState product_with_coherent(const Setup& s, const Field& psi_field, const Field& u,
                                     double alpha) {
    CoherentExpansion xi = coherent_state(u, s.modes, s.basis, alpha);
    return product_state(normalized(psi_field), xi, s.basis, alpha);
}

}  // namespace

TEST_CASE("reduce of a vacuum product state") {
    Setup s = make_setup();
    Field psi = normalized(gaussian(s.grid, 1.0, 4.0, 0.8));
    CompositeState state = product_with_coherent(s, psi, Field(s.grid), 2.0);
    ReducedDensities red = reduce(state);

    const CMatrix expect = s.grid.spacing() * (psi.values() * psi.values().adjoint());
    CHECK((red.gamma - expect).cwiseAbs().maxCoeff() < 1e-13);
    CHECK(red.field11.cwiseAbs().maxCoeff() < 1e-14);
    CHECK(red.field10.cwiseAbs().maxCoeff() < 1e-14);
    CHECK(red.sigma_kernel.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("reduce of a coherent product state reproduces the field amplitudes") {
    Setup s = make_setup(16, 8.0, 3, 10);
    Field psi = normalized(gaussian(s.grid, 1.0, 4.0, 0.9));
    Field u = field_from(s.grid, [&](double x) {
        return Complex(0.25 + 0.15 * std::cos(2.0 * pi * x / s.grid.length()), 0.0);
    });
    const double alpha = 1.2;
    CompositeState state = product_with_coherent(s, psi, u, alpha);
    ReducedDensities red = reduce(state);

    const CVector amps = mode_amplitudes(u, s.modes);
    for (int j = 0; j < s.modes.count(); ++j)
        CHECK(std::abs(red.field10[j] - amps[j]) < 1e-6 + 1e-2 * std::abs(amps[j]));
}

TEST_CASE("reduce validates normalization and keeps gamma a density matrix") {
    Setup s = make_setup();
    CompositeState state = random_state(s, 5);
    ReducedDensities red = reduce(state);
    CHECK(std::abs(red.gamma.trace() - Complex(1.0)) < 1e-10);
    CHECK((red.gamma - red.gamma.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(red.gamma);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12);
    Eigen::SelfAdjointEigenSolver<CMatrix> ef(red.field11);
    CHECK(ef.eigenvalues().minCoeff() >= -1e-12);

    // trace(field11) = alpha^2 <N_alpha>
    SparseOperator N = number_operator(s.basis, state.alpha);
    double occ = 0.0;
    detail::RowMajorMap C(state.coefficients.data(), s.grid.points(), s.basis.dimension());
    for (int x = 0; x < s.grid.points(); ++x)
        occ += s.grid.spacing() * std::real(C.row(x).conjugate().cwiseProduct(
                                                (N.matrix() * C.row(x).transpose()).transpose())
                                                .sum());
    CHECK(std::abs(std::real(red.field11.trace()) - state.alpha * state.alpha * occ) < 1e-10);

    state.coefficients *= 2.0;
    CHECK_THROWS_AS(reduce(state), ValidationError);
}

TEST_CASE("moment consistency with the reduced matrices and the dense oracle") {
    Setup s = make_setup();
    CompositeState state = random_state(s, 11);
    ReducedDensities red = reduce(state);

    std::mt19937_64 rng(3);
    std::normal_distribution<double> dist(0.0, 1.0);
    CMatrix A(s.grid.points(), s.grid.points());
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < A.cols(); ++j) A(i, j) = Complex(dist(rng), dist(rng));
    A = ((A + A.adjoint()) / 2.0).eval();

    MomentRequest zero{A, {}, {}, false};
    CHECK(std::abs(moment(state, zero) - (red.gamma * A).trace()) < 1e-12);

    // dense oracle for a k=1, l=1 moment
    CVector f = CVector::Zero(s.modes.count());
    f[1] = Complex(0.7, -0.2);
    CVector gvec = CVector::Zero(s.modes.count());
    gvec[2] = Complex(0.4, 0.9);
    MomentRequest req{A, {f}, {gvec}, false};
    const Complex got = moment(state, req);

    const int n = s.grid.points(), D = s.basis.dimension();
    CMatrix af = CMatrix::Zero(D, D), ag = CMatrix::Zero(D, D);
    for (int j = 0; j < s.modes.count(); ++j) {
        auto [aj, adagj] = ladder_operators(s.basis, j, state.alpha);
        af += std::conj(f[j]) * aj.to_dense();
        ag += gvec[j] * adagj.to_dense();
    }
    CMatrix big = CMatrix::Zero(n * D, n * D);
    const CMatrix fock_part = ag * af;
    for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y)
            for (int F = 0; F < D; ++F)
                for (int Fp = 0; Fp < D; ++Fp)
                    big(x * D + F, y * D + Fp) += A(x, y) * fock_part(F, Fp);
    const Complex oracle = std::sqrt(1.0) * s.grid.spacing() *
                           state.coefficients.dot(big * state.coefficients);
    CHECK(std::abs(got - oracle) < 1e-12);

    // range guard
    MomentRequest too_high{A, {f, f}, {gvec}, false};
    CHECK_THROWS_AS(moment(state, too_high), ValidationError);
    too_high.allow_higher = true;
    CHECK_NOTHROW(moment(state, too_high));
}

TEST_CASE("coherent product states match the factorized moment prediction") {
    Setup s = make_setup(16, 8.0, 3, 12);
    Field psi = normalized(gaussian(s.grid, 1.0, 4.0, 0.9));
    Field u = field_from(s.grid, [&](double x) {
        return Complex(0.2 + 0.1 * std::cos(2.0 * pi * x / s.grid.length()), 0.0);
    });
    const double alpha = 1.4;
    CompositeState state = product_with_coherent(s, psi, u, alpha);

    CMatrix A = CMatrix::Zero(s.grid.points(), s.grid.points());
    for (int i = 0; i < A.rows(); ++i)
        A(i, i) = std::cos(2.0 * pi * s.grid.point(i) / s.grid.length());

    CVector f = CVector::Zero(s.modes.count());
    f[0] = 1.0;
    MomentRequest req{A, {f}, {}, false};
    const Complex got = moment(state, req);

    const CVector amps = mode_amplitudes(u, s.modes);
    const Complex apsi = s.grid.spacing() * psi.values().dot(A * psi.values());
    const Complex predict = f.dot(amps) * apsi;
    CHECK(std::abs(got - predict) < 1e-6 + 5e-2 * std::abs(predict));
}

TEST_CASE("sigma kernel is consistent and summable") {
    Setup s = make_setup();
    CompositeState state = random_state(s, 23);
    ReducedDensities red = reduce(state);

    // contraction against a weight reproduces a direct expectation
    const int j = 1;
    Field w = gaussian(s.grid, 1.0, 3.0, 1.0);
    auto [aj, adagj] = ladder_operators(s.basis, j, state.alpha);
    detail::RowMajorMap C(state.coefficients.data(), s.grid.points(), s.basis.dimension());
    CMatrix applied = (aj.to_dense() + adagj.to_dense());
    Complex direct = 0.0;
    for (int x = 0; x < s.grid.points(); ++x)
        direct += s.grid.spacing() * std::real(w[x]) *
                  (C.row(x).conjugate().cwiseProduct((applied * C.row(x).transpose()).transpose()))
                      .sum();
    Complex via_sigma = 0.0;
    for (int x = 0; x < s.grid.points(); ++x)
        via_sigma += s.grid.spacing() * std::real(w[x]) * red.sigma_kernel(x, j);
    CHECK(std::abs(direct - via_sigma) < 1e-12);

    // discrete summability bound with C = 4
    SparseOperator N = number_operator(s.basis, state.alpha);
    double occ = 0.0;
    for (int x = 0; x < s.grid.points(); ++x)
        occ += s.grid.spacing() *
               std::real(C.row(x).conjugate().cwiseProduct((N.matrix() * C.row(x).transpose()).transpose()).sum());
    double lhs = 0.0;
    for (int x = 0; x < s.grid.points(); ++x)
        lhs += s.grid.spacing() * std::sqrt(red.sigma_kernel.row(x).squaredNorm());
    CHECK(lhs <= 4.0 * (1.0 + occ));
}

TEST_CASE("pekar prediction closed forms") {
    Setup s = make_setup(32, 16.0, 3, 3);
    Field V = gaussian(s.grid, -0.5, 8.0, 1.5);
    Field v = gaussian(s.grid, 0.5, 0.0, 1.5);
    PekarProblem p(s.grid, V, v, 1.0);
    PekarResult r = minimize(p);

    const int n = s.grid.points();
    MomentRequest identity{CMatrix::Identity(n, n), {}, {}, false};
    CHECK(std::abs(pekar_prediction(r, identity, s.modes) - Complex(1.0)) < 1e-12);

    CMatrix window = CMatrix::Zero(n, n);
    double direct = 0.0;
    for (int i = 0; i < n; ++i)
        if (torus_distance(s.grid, s.grid.point(i), 8.0) <= 2.0) {
            window(i, i) = 1.0;
            direct += s.grid.spacing() * std::norm(r.psi[i]);
        }
    MomentRequest win{window, {}, {}, false};
    CHECK(std::abs(pekar_prediction(r, win, s.modes) - direct) < 1e-12);

    CVector e1 = CVector::Zero(s.modes.count());
    e1[1] = 1.0;
    MomentRequest second{window, {e1}, {e1}, false};
    const CVector amps = mode_amplitudes(r.u_psi, s.modes);
    CHECK(std::abs(pekar_prediction(r, second, s.modes) - std::norm(amps[1]) * direct) < 1e-12);
}

TEST_CASE("diagnostics are phase invariant") {
    Setup s = make_setup();
    CompositeState state = random_state(s, 31);
    ReducedDensities base = reduce(state);
    MomentRequest probe{CMatrix::Identity(s.grid.points(), s.grid.points()), {}, {}, false};
    const Complex m0 = moment(state, probe);

    CompositeState rotated = state;
    rotated.coefficients *= std::polar(1.0, 1.3);
    ReducedDensities rot = reduce(rotated);
    CHECK((rot.gamma - base.gamma).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((rot.field11 - base.field11).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(moment(rotated, probe) - m0) < 1e-12);
}

TEST_CASE("trace distance of orthogonal pure states is 2") {
    Grid g(16, 8.0);
    Field a = normalized(gaussian(g, 1.0, 2.0, 0.5));
    Field b = normalized(gaussian(g, 1.0, 6.0, 0.5));
    CHECK(trace_distance(pure_density(a), pure_density(a)) < 1e-13);
    CHECK(trace_distance(pure_density(a), pure_density(b)) == Catch::Approx(2.0).margin(1e-6));
}

TEST_CASE("decoupled sweep converges to the linear ground state immediately") {
    Grid g(16, 8.0);
    Field V = gaussian(g, -0.8, 4.0, 0.8);
    PekarProblem p(g, V, Field(g), 1.0);
    ModeSet modes = make_mode_set(g, 3);
    PekarResult pek = minimize(p);

    std::vector<std::pair<double, CompositeState>> sweep;
    for (double alpha : {1.0, 2.0}) {
        FockBasis basis(3, 2);
        CompositeHamiltonian H = hamiltonian(p, modes, basis, alpha);
        GroundState gs = ground_state(H, 1e-11, std::nullopt, 40000, 5);
        sweep.emplace_back(alpha, gs.state);
    }

    ProbeSet probes = ProbeSet::standard(g, modes);
    Field chi8 = field_from(g, [&](double x) {
        return Complex(torus_distance(g, x, 4.0) <= 1.0 ? 1.0 : 0.0, 0.0);
    });
    ConvergenceTable table =
        convergence_report(sweep, pek, modes, probes, chi8, chi8);
    REQUIRE(table.rows.size() == 2);
    for (const auto& row : table.rows) CHECK(row.trace_distance < 1e-7);

    // single-alpha sweep: one row, no verdicts
    std::vector<std::pair<double, CompositeState>> single(sweep.begin(), sweep.begin() + 1);
    ConvergenceTable one = convergence_report(single, pek, modes, probes, chi8, chi8);
    CHECK(one.rows.size() == 1);
    CHECK_FALSE(one.trace_distance_strictly_decreasing);

    // decreasing alphas are rejected
    std::swap(sweep[0], sweep[1]);
    CHECK_THROWS_AS(convergence_report(sweep, pek, modes, probes, chi8, chi8), ValidationError);
}

TEST_CASE("husimi marginal of the vacuum is the closed-form gaussian") {
    Setup s = make_setup(16, 8.0, 3, 4);
    Field psi = normalized(gaussian(s.grid, 1.0, 4.0, 0.8));
    CompositeState state = product_with_coherent(s, psi, Field(s.grid), 1.0);

    HusimiSpec spec;
    spec.mode = 0;
    spec.extent = 5.0;
    spec.cells_per_side = 81;
    HusimiReport rep = husimi_marginal(state, 0, spec);
    CHECK_FALSE(rep.coarse_grid_warning);

    double worst = 0.0;
    for (int a = 0; a < spec.cells_per_side; ++a)
        for (int b = 0; b < spec.cells_per_side; ++b) {
            const Complex u = Complex(-spec.extent + (a + 0.5) * rep.cell_size,
                                      -spec.extent + (b + 0.5) * rep.cell_size);
            worst = std::max(worst, std::abs(rep.density(a, b) - std::exp(-std::norm(u)) / pi));
        }
    CHECK(worst < 1e-6);
    CHECK(rep.total_mass == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("husimi marginal of a coherent state peaks at its amplitude") {
    Setup s = make_setup(16, 8.0, 3, 14);
    Field psi = normalized(gaussian(s.grid, 1.0, 4.0, 0.8));
    Field u = field_from(s.grid, [&](double x) {
        return Complex(0.3 + 0.2 * std::cos(2.0 * pi * x / s.grid.length()), 0.0);
    });
    const double alpha = 1.3;
    CompositeState state = product_with_coherent(s, psi, u, alpha);
    const CVector amps = mode_amplitudes(u, s.modes);

    const int j = 1;
    HusimiSpec spec;
    spec.mode = j;
    spec.center = amps[j];
    spec.extent = 4.0 / alpha + 1.0;
    spec.cells_per_side = 101;
    HusimiReport rep = husimi_marginal(state, j, spec);

    // closed form: q(u) = (alpha^2/pi) exp(-alpha^2 |u - amp|^2)
    double worst = 0.0;
    for (int a = 0; a < spec.cells_per_side; ++a)
        for (int b = 0; b < spec.cells_per_side; ++b) {
            const Complex uu = spec.center + Complex(-spec.extent + (a + 0.5) * rep.cell_size,
                                                     -spec.extent + (b + 0.5) * rep.cell_size);
            const double expect =
                alpha * alpha / pi * std::exp(-alpha * alpha * std::norm(uu - amps[j]));
            worst = std::max(worst, std::abs(rep.density(a, b) - expect));
        }
    CHECK(worst < 1e-6);
    CHECK(mass_within(rep, amps[j], 3.0 / alpha) > 0.99);
    CHECK(rep.total_mass == Catch::Approx(1.0).margin(1e-4));

    // a grid coarser than 0.5/alpha raises the warning
    HusimiSpec coarse = spec;
    coarse.cells_per_side = 10;
    CHECK(husimi_marginal(state, j, coarse).coarse_grid_warning);
}
