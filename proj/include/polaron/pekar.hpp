#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "polaron/grid.hpp"

// Classical Pekar problem on the periodic grid: energy functional, optimal
// field configuration, sphere-constrained minimization, and the mixed-state
// generalization.
//
// Sign conventions, locked by unit tests:
//   * the effective pair interaction enters the functional with a minus sign,
//     E(psi) = <psi,(-Lap+V)psi> - <|psi|^2, W * |psi|^2>
//   * u_psi(y) = -h sum_x |psi(x)|^2 v(x-y), i.e. minus the cross-correlation
//     of the density with the form factor (equal to -|psi|^2 * v for even v)
//   * W has modes What_j = h*sqrt(n)*|vhat_j|^2 >= 0, so W is real and even
//     for every real v.

namespace polaron {

struct PekarProblem {
    Grid grid;
    Field V;    // external potential, real, <= 0, decaying toward box edges
    Field v;    // interaction form factor, real
    double mass;

    PekarProblem(const Grid& g, Field V_, Field v_, double m)
        : grid(g), V(std::move(V_)), v(std::move(v_)), mass(m) {
        if (V.grid() != grid || v.grid() != grid)
            throw ConfigurationError("pekar: V and v must live on the problem grid");
        if (!is_real(V)) throw ValidationError("pekar: V must be real");
        if (!is_real(v)) throw ValidationError("pekar: v must be real");
        if (V.values().real().maxCoeff() > 1e-12)
            throw ValidationError("pekar: V must be non-positive");
        const double vmax = V.values().real().cwiseAbs().maxCoeff();
        const int n = grid.points();
        const double edge = std::max(std::abs(V[0]), std::abs(V[n - 1]));
        if (vmax > 0.0 && edge > 1e-3 * vmax)
            throw ValidationError("pekar: |V| at the box edge exceeds 1e-3 * max|V|");
        if (!(mass > 0.0)) throw ValidationError("pekar: mass must be positive");
    }

    bool potential_is_zero() const {
        return V.values().cwiseAbs().maxCoeff() == 0.0;
    }
};

struct MinimizeOptions {
    int max_iterations = 50000;
    double tolerance = 1e-8;          // sphere-tangent gradient residual
    double energy_tolerance = 1e-12;  // energy change per iteration
    double initial_step = 0.5;
    std::uint64_t seed = 0;
    std::optional<Field> initial_guess;
};

struct PekarResult {
    Field psi;
    double energy;
    Field u_psi;
    double gradient_residual;
    int iterations;
    bool converged;
    std::vector<double> energy_trace;  // accepted energy after each iteration
};

/// W = v (cross-)correlated with itself; What_j = h*sqrt(n)*|vhat_j|^2 >= 0.
inline Field effective_potential(const Field& v) {
    if (!is_real(v)) throw ValidationError("effective_potential: v must be real");
    Field W = correlate(v, v);
    W.values() = W.values().real().cast<Complex>();
    return W;
}

/// Optimal field configuration u_psi(y) = -h sum_x |psi(x)|^2 v(x-y).
inline Field field_configuration(const Field& psi, const Field& v) {
    require_same_grid(psi, v, "field_configuration");
    Field rho(psi.grid(), psi.values().cwiseAbs2().cast<Complex>());
    Field u = correlate(rho, v);
    u.values() *= -1.0;
    if (is_real(v)) u.values() = u.values().real().cast<Complex>();
    return u;
}

/// <psi,(-Lap+V)psi> + ||u||^2 + h sum_y (u+conj(u))(y) (rho ? v)(y).
inline double product_energy(const Field& psi, const Field& u, const PekarProblem& problem) {
    require_same_grid(psi, problem.V, "product_energy");
    require_same_grid(u, problem.V, "product_energy");
    const double h = problem.grid.spacing();
    const double kinetic = std::real(inner_product(psi, laplacian_apply(psi)));
    const double potential =
        h * (problem.V.values().real().array() * psi.values().cwiseAbs2().array()).sum();
    Field rho(psi.grid(), psi.values().cwiseAbs2().cast<Complex>());
    const Field g = correlate(rho, problem.v);  // (x -> y) smeared density
    double interaction = 0.0;
    for (int i = 0; i < psi.size(); ++i)
        interaction += h * std::real((u[i] + std::conj(u[i])) * g[i]);
    return kinetic + potential + norm_squared(u) + interaction;
}

/// Pekar functional E(psi) = <psi,(-Lap+V)psi> - <rho, W*rho>.
inline double pekar_energy(const Field& psi, const PekarProblem& problem) {
    require_same_grid(psi, problem.V, "pekar_energy");
    const double h = problem.grid.spacing();
    const double kinetic = std::real(inner_product(psi, laplacian_apply(psi)));
    const double potential =
        h * (problem.V.values().real().array() * psi.values().cwiseAbs2().array()).sum();
    Field rho(psi.grid(), psi.values().cwiseAbs2().cast<Complex>());
    const Field W = effective_potential(problem.v);
    const Field Wrho = convolve(W, rho);
    const double interaction =
        -h * (rho.values().real().array() * Wrho.values().real().array()).sum();
    return kinetic + potential + interaction;
}

/// Unconstrained L^2 gradient 2(-Lap+V)psi - 4(W*rho)psi.
inline Field pekar_gradient(const Field& psi, const PekarProblem& problem) {
    require_same_grid(psi, problem.V, "pekar_gradient");
    Field rho(psi.grid(), psi.values().cwiseAbs2().cast<Complex>());
    const Field W = effective_potential(problem.v);
    const Field Wrho = convolve(W, rho);
    Field grad = laplacian_apply(psi);
    grad.values() = 2.0 * (grad.values().array() + problem.V.values().real().array() * psi.values().array()) -
                    4.0 * Wrho.values().real().array() * psi.values().array();
    return grad;
}

namespace detail {

/// Translate so the circular centroid of |psi|^2 sits at the box center.
inline Field pin_centroid(const Field& psi) {
    const Grid& g = psi.grid();
    Complex z = 0.0;
    for (int i = 0; i < g.points(); ++i)
        z += std::norm(psi[i]) * std::polar(1.0, 2.0 * pi * g.point(i) / g.length());
    if (std::abs(z) < 1e-14) return psi;  // uniform density, nothing to pin
    double c = std::arg(z) * g.length() / (2.0 * pi);
    if (c < 0.0) c += g.length();
    return shift(psi, g.length() / 2.0 - c);
}

struct PekarEvaluator {
    const PekarProblem& problem;
    RVector kinetic_multiplier;  // |k|^2 per DFT bin
    RVector interaction_multiplier;  // (h sqrt(n))^2 |vhat|^2 per bin
    RVector Vr;
    double h;

    explicit PekarEvaluator(const PekarProblem& p) : problem(p) {
        const Grid& g = p.grid;
        const int n = g.points();
        h = g.spacing();
        kinetic_multiplier.resize(n);
        for (int b = 0; b < n; ++b) {
            const double k = g.wavenumber(b);
            kinetic_multiplier[b] = k * k;
        }
        const Field vhat = fourier_transform(p.v);
        const double c = h * std::sqrt(static_cast<double>(n));
        interaction_multiplier = (c * c) * vhat.values().cwiseAbs2();
        Vr = p.V.values().real();
    }

    // energy and gradient in one pass
    double energy_and_gradient(const Field& psi, Field& grad) const {
        const Grid& g = problem.grid;
        CVector psihat = psi.values();
        fft_radix2(psihat, -1);
        CVector kin_mode = psihat.array() * kinetic_multiplier.array().cast<Complex>();
        CVector kin = kin_mode;
        fft_radix2(kin, +1);
        const double kinetic = h * std::real(psi.values().dot(kin));

        RVector rho = psi.values().cwiseAbs2();
        const double potential = h * (Vr.array() * rho.array()).sum();

        CVector rhohat = rho.cast<Complex>();
        fft_radix2(rhohat, -1);
        CVector wr = rhohat.array() * interaction_multiplier.array().cast<Complex>();
        fft_radix2(wr, +1);
        RVector Wrho = wr.real();
        const double interaction = -h * (rho.array() * Wrho.array()).sum();

        grad = Field(g, 2.0 * (kin.array() + Vr.array().cast<Complex>() * psi.values().array()) -
                            4.0 * Wrho.array().cast<Complex>() * psi.values().array());
        return kinetic + potential + interaction;
    }

    double energy(const Field& psi) const {
        Field scratch(problem.grid);
        return energy_and_gradient(psi, scratch);
    }

    // descent direction: -(1 + |k|^2)^{-1} r in mode space
    Field precondition(const Field& r) const {
        CVector rhat = r.values();
        fft_radix2(rhat, -1);
        for (int b = 0; b < rhat.size(); ++b)
            rhat[b] /= 1.0 + kinetic_multiplier[b];
        fft_radix2(rhat, +1);
        Field d(problem.grid, std::move(rhat));
        d.values() *= -1.0;
        return d;
    }
};

}  // namespace detail

/// Projected gradient descent with backtracking line search on the mass
/// sphere (preconditioned by (1-Lap)^{-1}, i.e. semi-implicit imaginary time).
inline PekarResult minimize(const PekarProblem& problem, const MinimizeOptions& opts = {}) {
    const Grid& g = problem.grid;
    const double m = problem.mass;
    const bool pin = problem.potential_is_zero();
    detail::PekarEvaluator eval(problem);

    Field psi(g);
    if (opts.initial_guess) {
        psi = normalized(*opts.initial_guess, m);
    } else {
        double center = g.length() / 2.0;
        if (!pin) {
            int imin = 0;
            problem.V.values().real().minCoeff(&imin);
            center = g.point(imin);
        }
        psi = normalized(gaussian(g, 1.0, center, g.length() / 16.0), m);
    }
    if (pin) psi = normalized(detail::pin_centroid(psi), m);

    Field grad(g);
    double energy = eval.energy_and_gradient(psi, grad);
    double step = opts.initial_step;
    double residual = std::numeric_limits<double>::infinity();
    int iter = 0;
    bool converged = false;
    std::vector<double> trace{energy};

    Field best_psi = psi;
    double best_energy = energy;
    double best_residual = residual;

    for (; iter < opts.max_iterations; ++iter) {
        if (!std::isfinite(energy))
            throw NumericalFailure("pekar minimize: energy is not finite");

        // sphere-tangent residual
        const double mu = std::real(inner_product(psi, grad)) / m;
        Field r = grad;
        r.values() -= mu * psi.values();
        residual = norm(r);

        const double tie = 1e-12 * (1.0 + std::abs(best_energy));
        if (energy < best_energy - tie ||
            (energy <= best_energy + tie && residual < best_residual)) {
            best_psi = psi;
            best_energy = energy;
            best_residual = residual;
        }
        if (residual <= opts.tolerance && iter > 0) {
            converged = true;
            break;
        }

        const Field d = eval.precondition(r);
        const double slope = std::real(inner_product(r, d));  // < 0

        double t = std::min(step * 2.0, 10.0);
        // once the energy decrease per step drops below the floating-point
        // resolution of E, the Armijo test is noise; switch to accepting on
        // residual decrease, which stays measurable down to ~1e-12
        const bool endgame = std::abs(slope) * t < 1e-13 * (1.0 + std::abs(energy));
        bool accepted = false;
        Field cand(g);
        Field cand_grad(g);
        double cand_energy = 0.0;
        while (t > 1e-15) {
            cand = psi;
            cand.values() += t * d.values();
            cand = normalized(cand, m);
            if (pin) cand = normalized(detail::pin_centroid(cand), m);
            if (!endgame) {
                cand_energy = eval.energy(cand);
                if (cand_energy <= energy + 1e-4 * t * slope) {
                    accepted = true;
                    break;
                }
            } else {
                cand_energy = eval.energy_and_gradient(cand, cand_grad);
                const double mu_c = std::real(inner_product(cand, cand_grad)) / m;
                Field rc = cand_grad;
                rc.values() -= mu_c * cand.values();
                if (norm(rc) <= residual * (1.0 - 1e-3)) {
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if (!accepted) break;  // numerical floor reached

        const double previous = energy;
        psi = cand;
        if (endgame) {
            grad = cand_grad;
            energy = cand_energy;
        } else {
            energy = eval.energy_and_gradient(psi, grad);
        }
        step = t;
        trace.push_back(energy);

        if (std::abs(previous - energy) <= opts.energy_tolerance && residual <= opts.tolerance) {
            converged = true;
            ++iter;
            break;
        }
    }

    // recompute final diagnostics through the public formulas
    Field r = pekar_gradient(best_psi, problem);
    const double mu = std::real(inner_product(best_psi, r)) / m;
    r.values() -= mu * best_psi.values();
    PekarResult result{best_psi,
                       pekar_energy(best_psi, problem),
                       field_configuration(best_psi, problem.v),
                       norm(r),
                       iter,
                       converged || norm(r) <= opts.tolerance,
                       std::move(trace)};
    return result;
}

// ---------------------------------------------------------------------------
// Mixed states

struct MixedState {
    RVector weights;              // lambda_j >= 0, sum = mass, sorted descending
    std::vector<Field> orbitals;  // orthonormal in the h-weighted inner product
};

inline void validate(const MixedState& state, double mass) {
    const int r = static_cast<int>(state.orbitals.size());
    if (state.weights.size() != r) throw ValidationError("mixed state: weight/orbital count mismatch");
    if (state.weights.minCoeff() < -1e-14) throw ValidationError("mixed state: negative weight");
    if (std::abs(state.weights.sum() - mass) > 1e-12 * std::max(1.0, mass))
        throw ValidationError("mixed state: weights do not sum to the mass");
    for (int j = 0; j < r; ++j)
        for (int l = j; l < r; ++l) {
            const Complex gram = inner_product(state.orbitals[j], state.orbitals[l]);
            const double target = (j == l) ? 1.0 : 0.0;
            if (std::abs(gram - target) > 1e-10)
                throw ValidationError("mixed state: orbitals are not orthonormal");
        }
}

/// sum_j lambda_j <u_j,(-Lap+V)u_j> - <rho_gamma, W*rho_gamma>.
inline double mixed_pekar_energy(const MixedState& gamma, const PekarProblem& problem) {
    validate(gamma, problem.mass);
    const double h = problem.grid.spacing();
    double linear = 0.0;
    RVector rho = RVector::Zero(problem.grid.points());
    for (size_t j = 0; j < gamma.orbitals.size(); ++j) {
        const Field& u = gamma.orbitals[j];
        require_same_grid(u, problem.V, "mixed_pekar_energy");
        const double lam = gamma.weights[static_cast<int>(j)];
        linear += lam * (std::real(inner_product(u, laplacian_apply(u))) +
                         h * (problem.V.values().real().array() * u.values().cwiseAbs2().array()).sum());
        rho += lam * u.values().cwiseAbs2();
    }
    Field rho_field(problem.grid, rho.cast<Complex>());
    const Field W = effective_potential(problem.v);
    const Field Wrho = convolve(W, rho_field);
    return linear - h * (rho.array() * Wrho.values().real().array()).sum();
}

struct MixedResult {
    MixedState state;
    double energy;
    double lambda_ratio;  // lambda_2 / lambda_1 diagnostic (0 for rank one)
    int iterations;
    bool converged;
};

/// Alternating minimization at fixed rank r: orbital update by diagonalizing
/// the linearized operator h - 2 W*rho, weight update damped toward the
/// simplex vertex that minimizes the (concave-in-lambda) energy.
inline MixedResult minimize_mixed(const PekarProblem& problem, int rank,
                                  const MinimizeOptions& opts = {}) {
    if (rank < 1) throw ValidationError("minimize_mixed: rank must be >= 1");
    const Grid& g = problem.grid;
    const int n = g.points();
    const double h = g.spacing();
    const double m = problem.mass;

    if (rank == 1) {
        PekarResult r1 = minimize(problem, opts);
        MixedState state;
        state.weights = RVector::Constant(1, m);
        state.orbitals.push_back(normalized(r1.psi, 1.0));
        return MixedResult{std::move(state), r1.energy, 0.0, r1.iterations, r1.converged};
    }

    const CMatrix K = dense_laplacian(g).cast<Complex>();
    const Field W = effective_potential(problem.v);
    RVector Vr = problem.V.values().real();

    // initial orbitals: lowest eigenvectors of -Lap + V
    CMatrix h0 = K;
    h0.diagonal() += Vr.cast<Complex>();
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h0);
    std::vector<Field> orbitals;
    for (int j = 0; j < rank; ++j)
        orbitals.emplace_back(g, (es.eigenvectors().col(j) / std::sqrt(h)).eval());
    RVector lambda = RVector::Constant(rank, m / rank);

    auto pack = [&](const RVector& lam, const std::vector<Field>& orbs) {
        MixedState s;
        s.weights = lam;
        s.orbitals = orbs;
        return s;
    };

    double energy = mixed_pekar_energy(pack(lambda, orbitals), problem);
    double beta = 0.5;
    int iter = 0;
    bool converged = false;
    const int max_iter = std::min(opts.max_iterations, 400);

    for (; iter < max_iter; ++iter) {
        RVector rho = RVector::Zero(n);
        for (int j = 0; j < rank; ++j) rho += lambda[j] * orbitals[static_cast<size_t>(j)].values().cwiseAbs2();
        Field rho_field(g, rho.cast<Complex>());
        RVector Wrho = convolve(W, rho_field).values().real();

        CMatrix heff = K;
        heff.diagonal() += (Vr - 2.0 * Wrho).cast<Complex>();
        Eigen::SelfAdjointEigenSolver<CMatrix> step(heff);
        std::vector<Field> new_orbitals;
        for (int j = 0; j < rank; ++j)
            new_orbitals.emplace_back(g, (step.eigenvectors().col(j) / std::sqrt(h)).eval());

        // exact lambda step is a simplex vertex (the energy is concave in
        // lambda); pick the best vertex, then damp toward it
        int best_vertex = 0;
        double best_vertex_energy = std::numeric_limits<double>::infinity();
        for (int j = 0; j < rank; ++j) {
            RVector vert = RVector::Zero(rank);
            vert[j] = m;
            const double e = mixed_pekar_energy(pack(vert, new_orbitals), problem);
            if (e < best_vertex_energy) {
                best_vertex_energy = e;
                best_vertex = j;
            }
        }
        RVector target = RVector::Zero(rank);
        target[best_vertex] = m;
        RVector new_lambda = (1.0 - beta) * lambda + beta * target;

        const double new_energy = mixed_pekar_energy(pack(new_lambda, new_orbitals), problem);
        if (!std::isfinite(new_energy))
            throw NumericalFailure("minimize_mixed: energy is not finite");
        if (new_energy > energy + 1e-13 * std::max(1.0, std::abs(energy))) {
            beta = std::max(0.05, beta * 0.5);
        }
        const double change = std::abs(new_energy - energy);
        lambda = new_lambda;
        orbitals = std::move(new_orbitals);
        energy = new_energy;

        RVector sorted = lambda;
        std::sort(sorted.begin(), sorted.end(), std::greater<double>());
        const double ratio = sorted[0] > 0.0 ? sorted[1] / sorted[0] : 0.0;
        if (ratio <= 1e-7 && change <= 1e-13 * std::max(1.0, std::abs(energy))) {
            converged = true;
            ++iter;
            break;
        }
    }

    // sort descending; exact weight ties broken by the lexicographic order of
    // the orbitals' Fourier coefficients so the output is reproducible
    std::vector<int> order(rank);
    for (int j = 0; j < rank; ++j) order[static_cast<size_t>(j)] = j;
    std::vector<CVector> modes(static_cast<size_t>(rank));
    for (int j = 0; j < rank; ++j) modes[static_cast<size_t>(j)] = fourier_transform(orbitals[static_cast<size_t>(j)]).values();
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (lambda[a] != lambda[b]) return lambda[a] > lambda[b];
        const CVector &ma = modes[static_cast<size_t>(a)], &mb = modes[static_cast<size_t>(b)];
        for (int c = 0; c < ma.size(); ++c) {
            if (std::abs(ma[c] - mb[c]) <= 1e-12) continue;
            if (std::real(ma[c]) != std::real(mb[c])) return std::real(ma[c]) < std::real(mb[c]);
            return std::imag(ma[c]) < std::imag(mb[c]);
        }
        return false;
    });
    MixedState final_state;
    final_state.weights.resize(rank);
    for (int j = 0; j < rank; ++j) {
        final_state.weights[j] = lambda[order[static_cast<size_t>(j)]];
        final_state.orbitals.push_back(orbitals[static_cast<size_t>(order[static_cast<size_t>(j)])]);
    }
    const double ratio = final_state.weights[0] > 0.0 ? final_state.weights[1] / final_state.weights[0] : 0.0;
    return MixedResult{std::move(final_state), energy, ratio, iter, converged};
}

struct BindingGap {
    double energy_with_potential;  // E_Pek^(V)(m)
    double energy_free;            // E_Pek^(0)(m)
    PekarResult result_with_potential;
    PekarResult result_free;
};

/// Minimize with V and with V = 0; the bound state must not lie above the
/// translation-invariant one.
inline BindingGap binding_gap(const PekarProblem& problem, const MinimizeOptions& opts = {}) {
    PekarResult with_potential = minimize(problem, opts);
    PekarProblem free_problem(problem.grid, Field(problem.grid), problem.v, problem.mass);
    PekarResult free_result = minimize(free_problem, opts);
    if (with_potential.energy > free_result.energy + std::max(opts.tolerance, 1e-8))
        throw NumericalFailure("binding_gap: E_V > E_0, variational ordering violated");
    return BindingGap{with_potential.energy, free_result.energy,
                      std::move(with_potential), std::move(free_result)};
}

}  // namespace polaron
