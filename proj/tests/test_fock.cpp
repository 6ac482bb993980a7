#include <catch2/catch_amalgamated.hpp>

#include "polaron/fock.hpp"

using namespace polaron;

namespace {

long binomial(int n, int k) {
    long r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

PekarProblem small_problem(int n = 16, double L = 8.0, double well = -0.5, double amp = 0.4) {
    Grid g(n, L);
    Field V = well == 0.0 ? Field(g) : gaussian(g, well, L / 2.0, L / 10.0);
    Field v = gaussian(g, amp, 0.0, L / 10.0);
    return PekarProblem(g, V, v, 1.0);
}

// independent dense assembly through explicit Kronecker products
CMatrix dense_oracle_hamiltonian(const PekarProblem& p, const ModeSet& modes,
                                 const FockBasis& basis, double alpha) {
    const Grid& g = p.grid;
    const int n = g.points(), D = basis.dimension(), M = modes.count();
    CMatrix hpart = dense_laplacian(g).cast<Complex>();
    hpart.diagonal() += p.V.values().real().cast<Complex>();

    CMatrix H = CMatrix::Zero(n * D, n * D);
    for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y)
            for (int F = 0; F < D; ++F) H(x * D + F, y * D + F) += hpart(x, y);

    for (int x = 0; x < n; ++x)
        for (int F = 0; F < D; ++F)
            H(x * D + F, x * D + F) += basis.total_occupation(F) / (alpha * alpha);

    const Field vhat = fourier_transform(p.v);
    for (int j = 0; j < M; ++j) {
        CMatrix adag = CMatrix::Zero(D, D);
        for (int F = 0; F < D; ++F) {
            const int up = basis.raised(F, j);
            if (up >= 0)
                adag(up, F) = std::sqrt(double(basis.occupation(F)[static_cast<size_t>(j)] + 1)) / alpha;
        }
        for (int x = 0; x < n; ++x) {
            const Complex c = std::sqrt(modes.weight()) * std::conj(vhat[modes.bin(j)]) *
                              std::polar(1.0, -modes.wavenumber(j) * g.point(x));
            for (int F = 0; F < D; ++F)
                for (int Fp = 0; Fp < D; ++Fp) {
                    H(x * D + Fp, x * D + F) += c * adag(Fp, F);
                    H(x * D + F, x * D + Fp) += std::conj(c * adag(Fp, F));
                }
        }
    }
    return H;
}

}  // namespace

TEST_CASE("mode sets are negation closed and reject bad input") {
    Grid g(16, 8.0);
    ModeSet three = make_mode_set(g, 3);
    CHECK(three.count() == 3);
    CHECK(three.signed_index(0) == 0);
    CHECK(three.negation(1) == 2);

    ModeSet two = make_mode_set(g, 2);
    CHECK(two.signed_index(0) == 1);
    CHECK(two.signed_index(1) == -1);

    CHECK_THROWS_AS(ModeSet(g, {0, 1}), ValidationError);        // not closed
    CHECK_THROWS_AS(ModeSet(g, {8, -8}), ValidationError);       // nyquist
    CHECK_THROWS_AS(ModeSet(g, {1, -1, 1}), ValidationError);    // duplicate
    CHECK_THROWS_AS(make_mode_set(g, 0), ConfigurationError);
}

TEST_CASE("fock basis enumeration is graded lexicographic with binomial dimension") {
    FockBasis basis(3, 4);
    CHECK(basis.dimension() == binomial(3 + 4, 3));
    CHECK(basis.total_occupation(0) == 0);
    for (int i = 1; i < basis.dimension(); ++i)
        CHECK(basis.total_occupation(i) >= basis.total_occupation(i - 1));
    // within a graded block the tuples are lexicographically sorted
    for (int i = 1; i < basis.dimension(); ++i) {
        if (basis.total_occupation(i) != basis.total_occupation(i - 1)) continue;
        CHECK(std::lexicographical_compare(basis.occupation(i - 1).begin(),
                                           basis.occupation(i - 1).end(),
                                           basis.occupation(i).begin(), basis.occupation(i).end()));
    }
    for (int i = 0; i < basis.dimension(); ++i)
        CHECK(basis.index_of(basis.occupation(i)) == i);
}

TEST_CASE("annihilation kills the vacuum and number operators are diagonal") {
    FockBasis basis(2, 3);
    const double alpha = 1.7;
    auto [a0, adag0] = ladder_operators(basis, 0, alpha);

    CVector vacuum = CVector::Zero(basis.dimension());
    vacuum[0] = 1.0;
    CHECK((a0 * vacuum).norm() == 0.0);

    // a^+ a is diagonal with entries n_j / alpha^2
    CMatrix num = (adag0.to_dense() * a0.to_dense());
    for (int i = 0; i < basis.dimension(); ++i) {
        for (int l = 0; l < basis.dimension(); ++l) {
            const double expect =
                (i == l) ? basis.occupation(i)[0] / (alpha * alpha) : 0.0;
            CHECK(std::abs(num(i, l) - expect) < 1e-14);
        }
    }
}

TEST_CASE("rescaled CCR hold below the cutoff") {
    FockBasis basis(2, 4);
    const double alpha = std::sqrt(2.0);
    for (int j = 0; j < 2; ++j) {
        for (int l = 0; l < 2; ++l) {
            auto [aj, adagj] = ladder_operators(basis, j, alpha);
            auto [al, adagl] = ladder_operators(basis, l, alpha);
            CMatrix comm = aj.to_dense() * adagl.to_dense() - adagl.to_dense() * aj.to_dense();
            const double delta = (j == l) ? 1.0 / (alpha * alpha) : 0.0;
            for (int F = 0; F < basis.dimension(); ++F) {
                if (basis.total_occupation(F) > basis.cutoff() - 1) continue;
                CVector e = CVector::Zero(basis.dimension());
                e[F] = 1.0;
                CVector r = comm * e;
                r[F] -= delta;
                CHECK(r.cwiseAbs().maxCoeff() <= 1e-14);
            }
        }
    }
}

TEST_CASE("number operator eigenvalues") {
    FockBasis basis(3, 3);
    const double alpha = 2.0;
    SparseOperator N = number_operator(basis, alpha);
    CVector vacuum = CVector::Zero(basis.dimension());
    vacuum[0] = 1.0;
    CHECK(std::abs((N * vacuum).dot(vacuum)) == 0.0);

    std::vector<int> occ = {0, 1, 0};
    const int idx = basis.index_of(occ);
    CVector one = CVector::Zero(basis.dimension());
    one[idx] = 1.0;
    CHECK(std::abs((N * one).dot(one) - 1.0 / (alpha * alpha)) < 1e-15);
}

TEST_CASE("quadrature weights reproduce the interaction norm over the full mode set") {
    Grid g(32, 8.0);
    Field v = gaussian(g, 0.6, 0.0, 1.0);
    ModeSet all = make_mode_set(g, g.points() - 1);  // everything but nyquist
    Field vhat = fourier_transform(v);
    double covered = 0.0;
    for (int j = 0; j < all.count(); ++j) covered += all.weight() * std::norm(vhat[all.bin(j)]);
    const double nyquist = g.spacing() * std::norm(vhat[g.points() / 2]);
    CHECK(std::abs(covered + nyquist - norm_squared(v)) <= 1e-12 * norm_squared(v));
}

TEST_CASE("hamiltonian is hermitian, decouples at v=0, and matches the dense oracle") {
    PekarProblem p = small_problem();
    ModeSet modes = make_mode_set(p.grid, 3);
    FockBasis basis(3, 2);
    CompositeHamiltonian H = hamiltonian(p, modes, basis, 1.3);
    CHECK(H.total.hermitian());
    CHECK(H.total.hermiticity_defect() <= 1e-12);

    CMatrix oracle = dense_oracle_hamiltonian(p, modes, basis, 1.3);
    CHECK((H.total.to_dense() - oracle).cwiseAbs().maxCoeff() < 1e-12);

    // v = 0: block diagonal, spectrum = spec(-Lap+V) + {sum n}/alpha^2
    PekarProblem free(p.grid, p.V, Field(p.grid), 1.0);
    const double alpha = 1.0;
    FockBasis tiny(1, 2);
    ModeSet one = make_mode_set(p.grid, 1);
    CompositeHamiltonian Hf = hamiltonian(free, one, tiny, alpha);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(Hf.total.to_dense());

    CMatrix hp = dense_laplacian(p.grid).cast<Complex>();
    hp.diagonal() += p.V.values().real().cast<Complex>();
    Eigen::SelfAdjointEigenSolver<CMatrix> part(hp);
    std::vector<double> expected;
    for (int i = 0; i < p.grid.points(); ++i)
        for (int q = 0; q <= 2; ++q) expected.push_back(part.eigenvalues()[i] + q / (alpha * alpha));
    std::sort(expected.begin(), expected.end());
    for (int i = 0; i < es.eigenvalues().size(); ++i)
        CHECK(std::abs(es.eigenvalues()[i] - expected[static_cast<size_t>(i)]) < 1e-10);
}

TEST_CASE("free hamiltonian has ground energy zero on the uniform state") {
    Grid g(16, 8.0);
    PekarProblem p(g, Field(g), Field(g), 1.0);
    ModeSet modes = make_mode_set(g, 1);
    FockBasis basis(1, 2);
    CompositeHamiltonian H = hamiltonian(p, modes, basis, 1.0);
    GroundState gs = ground_state(H, 1e-12);
    CHECK(std::abs(gs.energy) < 1e-11);
}

TEST_CASE("lanczos matches dense diagonalization on a small interacting instance") {
    PekarProblem p = small_problem(16, 8.0, -0.8, 0.6);
    ModeSet modes = make_mode_set(p.grid, 2);
    FockBasis basis(2, 3);
    CompositeHamiltonian H = hamiltonian(p, modes, basis, 1.0);
    REQUIRE(H.dimension() <= 2000);

    Eigen::SelfAdjointEigenSolver<CMatrix> dense(H.total.to_dense());
    GroundState gs = ground_state(H, 1e-12, std::nullopt, 40000, 7);
    CHECK(std::abs(gs.energy - dense.eigenvalues()[0]) < 1e-10);
}

TEST_CASE("ground_state rejects operators without the hermitian flag") {
    std::vector<SparseOperator::Triplet> t{{0, 1, Complex(1.0, 0.0)}};
    SparseOperator bad = SparseOperator::from_triplets(2, t, false);
    CHECK_THROWS_AS(ground_state(bad, 1e-10), ValidationError);
    CHECK_THROWS_AS(bad.verify_hermitian(), ValidationError);
}

TEST_CASE("ground_state non-convergence carries the best residual") {
    PekarProblem p = small_problem(16, 8.0, -0.8, 0.6);
    ModeSet modes = make_mode_set(p.grid, 2);
    FockBasis basis(2, 3);
    CompositeHamiltonian H = hamiltonian(p, modes, basis, 1.0);
    try {
        ground_state(H, 1e-30, std::nullopt, 40, 7);  // unreachable tolerance
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& err) {
        CHECK(err.best_residual > 1e-30);
        CHECK(std::isfinite(err.best_residual));
    }
}

TEST_CASE("trial energy rejects unreliable coherent truncations") {
    Grid g(16, 8.0);
    PekarProblem p(g, Field(g), gaussian(g, 0.5, 0.0, 1.0), 1.0);
    ModeSet modes = make_mode_set(g, 3);
    FockBasis tiny(3, 1);  // far too small for the displacement below
    CompositeHamiltonian H = hamiltonian(p, modes, tiny, 2.0);
    Field u = field_from(g, [&](double x) {
        return Complex(1.5 + std::cos(2.0 * pi * x / g.length()), 0.0);
    });
    Field psi = normalized(gaussian(g, 1.0, 4.0, 1.0));
    CHECK(coherent_state(u, modes, tiny, 2.0).truncation_error > 0.01);
    CHECK_THROWS_AS(product_trial_energy(psi, u, H), ValidationError);
}

TEST_CASE("v = 0 ground state is the linear ground state with a vacuum field") {
    PekarProblem p = small_problem(32, 8.0, -0.8, 0.0);
    PekarProblem free(p.grid, p.V, Field(p.grid), 1.0);
    ModeSet modes = make_mode_set(p.grid, 3);
    FockBasis basis(3, 3);
    CompositeHamiltonian H = hamiltonian(free, modes, basis, 1.0);
    GroundState gs = ground_state(H, 1e-12, std::nullopt, 40000, 99);

    CMatrix hp = dense_laplacian(p.grid).cast<Complex>();
    hp.diagonal() += p.V.values().real().cast<Complex>();
    Eigen::SelfAdjointEigenSolver<CMatrix> part(hp);
    CHECK(std::abs(gs.energy - part.eigenvalues()[0]) < 1e-10);

    // vacuum weight of the field component
    const int D = basis.dimension();
    double vacuum_weight = 0.0;
    for (int x = 0; x < p.grid.points(); ++x)
        vacuum_weight += p.grid.spacing() * std::norm(gs.state.at(x, 0));
    CHECK(vacuum_weight >= 1.0 - 1e-10);
    (void)D;
}

TEST_CASE("coherent state edge cases and expectations") {
    Grid g(32, 8.0);
    ModeSet modes = make_mode_set(g, 3);
    FockBasis basis(3, 12);

    CoherentExpansion vac = coherent_state(Field(g), modes, basis, 2.0);
    CHECK(vac.truncation_error == 0.0);
    CHECK(std::abs(vac.coefficients[0] - 1.0) < 1e-15);

    // u supported on the retained modes
    Field u = field_from(g, [&](double x) {
        return Complex(0.3 + 0.2 * std::cos(2.0 * pi * x / g.length()), 0.0);
    });
    const double alpha = 1.5;
    CoherentExpansion xi = coherent_state(u, modes, basis, alpha);
    CHECK(xi.reliable);

    // <N_alpha> = ||u||^2 within the reported tail
    SparseOperator N = number_operator(basis, alpha);
    const double occ = std::real(xi.coefficients.dot(N * xi.coefficients));
    CHECK(std::abs(occ - norm_squared(u)) <=
          10.0 * xi.truncation_error * (1.0 + alpha * alpha * norm_squared(u)) + 1e-12);

    // <xi, a(f) xi> = <f, z/alpha> for f a mode-space vector
    for (int j = 0; j < modes.count(); ++j) {
        auto [aj, adagj] = ladder_operators(basis, j, alpha);
        const Complex got = xi.coefficients.dot(aj * xi.coefficients);
        const Complex expect = xi.amplitudes[j] / alpha;
        CHECK(std::abs(got - expect) <=
              20.0 * std::sqrt(xi.truncation_error) * std::abs(expect) + 1e-9);
    }
}

TEST_CASE("cutoff rule arithmetic") {
    Grid g(16, 4.0);
    CHECK(cutoff_rule(Field(g), 3.0, 4) == 4);

    // uniform u with ||u||^2 = 1
    Field u = field_from(g, [&](double) { return Complex(1.0 / std::sqrt(g.length()), 0.0); });
    CHECK(std::abs(norm_squared(u) - 1.0) < 1e-14);
    CHECK(cutoff_rule(u, 2.0, 4) == 16);  // 4 + 8 + 4

    // doubling alpha quadruples the leading term
    const int n1 = cutoff_rule(u, 2.0, 4), n2 = cutoff_rule(u, 4.0, 4);
    CHECK(n2 - 4 * 4.0 - 4 == Catch::Approx(4.0 * (n1 - 2 * 4.0 - 4)));
    CHECK_THROWS_AS(cutoff_rule(u, 1.0, 2), ValidationError);
}

TEST_CASE("trial energy reduces to the particle energy when u = 0 and v = 0") {
    Grid g(16, 8.0);
    Field V = gaussian(g, -0.5, 4.0, 0.8);
    PekarProblem p(g, V, Field(g), 1.0);
    ModeSet modes = make_mode_set(g, 1);
    FockBasis basis(1, 2);
    CompositeHamiltonian H = hamiltonian(p, modes, basis, 1.0);
    Field psi = normalized(random_field(g, 3));
    TrialEnergy t = product_trial_energy(psi, Field(g), H);
    const double lin = std::real(inner_product(psi, laplacian_apply(psi))) +
                       g.spacing() * (V.values().real().array() * psi.values().cwiseAbs2().array()).sum();
    CHECK(t.energy == Catch::Approx(lin).margin(1e-11));
    CHECK(t.fock_truncation_error == 0.0);
}

TEST_CASE("trial energy agrees with the classical product energy on a packet interaction") {
    // cosine packet supported exactly on the three retained modes
    Grid g(32, 8.0);
    Field V = gaussian(g, -0.4, 4.0, 0.8);
    Field v = field_from(g, [&](double x) {
        return Complex(0.4 * (1.0 + std::cos(2.0 * pi * x / g.length())), 0.0);
    });
    PekarProblem p(g, V, v, 1.0);
    ModeSet modes = make_mode_set(g, 3);

    Field psi = normalized(gaussian(g, 1.0, 4.0, 1.0));
    Field u = field_configuration(psi, v);
    const int cutoff = cutoff_rule(u, 1.0, 6);
    FockBasis basis(3, cutoff);
    CompositeHamiltonian H = hamiltonian(p, modes, basis, 1.0);
    CHECK(H.neglected_interaction_weight < 1e-24);

    TrialEnergy t = product_trial_energy(psi, u, H);
    CHECK(t.mode_truncation_weight < 1e-24);
    const double classical = product_energy(psi, u, p);
    CHECK(std::abs(t.energy - classical) <= 1e-7 + 100.0 * t.fock_truncation_error);

    // the trial state is a variational upper bound for the ground state
    GroundState gs = ground_state(H, 1e-8, product_state(psi, coherent_state(u, modes, basis, 1.0),
                                                         basis, 1.0).coefficients);
    CHECK(gs.energy <= t.energy + 1e-8);
}

TEST_CASE("capacity guard trips on oversized assemblies") {
    Grid g(256, 32.0);
    Field V = gaussian(g, -0.5, 16.0, 2.0);
    Field v = gaussian(g, 0.5, 0.0, 2.0);
    PekarProblem p(g, V, v, 1.0);
    ModeSet modes = make_mode_set(g, 3);
    FockBasis basis(3, 12);
    CHECK_THROWS_AS(hamiltonian(p, modes, basis, 1.0), CapacityError);
}
