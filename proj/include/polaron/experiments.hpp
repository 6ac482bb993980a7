#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "polaron/config.hpp"
#include "polaron/io.hpp"
#include "polaron/localization.hpp"
#include "polaron/version.hpp"

// Experiment drivers behind the CLI subcommands.  Each writes its artifacts
// under the output directory and returns the in-memory record so tests can
// drive them in-process.  Exit codes: 0 ok, 2 invalid config, 3 solver did
// not converge (mapped by the CLI).

namespace polaron {

namespace fs = std::filesystem;

inline int worker_count() {
    const char* env = std::getenv("POLARON_WORKERS");
    if (!env) return 1;
    const int w = std::atoi(env);
    return std::max(1, std::min(w, 16));
}

inline double well_center(const ExperimentConfig& config) {
    return config.potential_family == "zero" ? config.grid_length / 2.0 : config.potential_center;
}

namespace detail {

inline std::string format_cell(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

}  // namespace detail

// --- pekar-min ------------------------------------------------------------------

struct PekarRun {
    PekarResult result;
    fs::path json_path;
    fs::path trace_path;
};

inline PekarRun run_pekar(const ExperimentConfig& config, const fs::path& out_dir) {
    PekarProblem problem = config.make_problem();
    PekarResult result = minimize(problem, config.pekar_options());

    Json doc;
    doc["version"] = version();
    doc["config_hash"] = config.hash();
    doc["converged"] = result.converged;
    doc["energy"] = result.energy;
    doc["residual"] = result.gradient_residual;
    doc["iterations"] = result.iterations;
    doc["psi"] = json_complex_array(result.psi.values());
    doc["u_psi"] = json_complex_array(result.u_psi.values());

    PekarRun run{std::move(result), out_dir / "pekar_result.json", out_dir / "pekar_trace.csv"};
    write_text(run.json_path, doc.dump(2) + "\n");

    std::ostringstream csv;
    csv << csv_header(config.hash(), version());
    csv << "iteration,energy\n";
    for (size_t i = 0; i < run.result.energy_trace.size(); ++i)
        csv << i << "," << detail::format_cell(run.result.energy_trace[i]) << "\n";
    write_text(run.trace_path, csv.str());
    return run;
}

// --- alpha-sweep ------------------------------------------------------------------

struct SweepRow {
    double alpha = 0.0;
    bool ok = false;
    std::string error;
    int cutoff = 0;
    double energy_alpha = 0.0;
    double energy_trial = 0.0;
    double trace_distance = 0.0;
    std::vector<double> moment_errors;
    double mass_window_eighth = 0.0;
    double mass_window_quarter = 0.0;
    double coherent_tail = 0.0;
    double neglected_weight = 0.0;
    double lanczos_residual = 0.0;
    double wall_seconds = 0.0;
};

struct SweepRecord {
    std::string config_hash;
    double energy_pekar = 0.0;
    std::optional<PekarResult> pekar;
    std::vector<std::string> moment_names;
    std::vector<SweepRow> rows;
    std::vector<std::shared_ptr<CompositeState>> states;  // aligned with rows (null on error)
    bool variational_bound_ok = false;
    bool energy_gap_strictly_decreasing = false;
    bool trace_distance_strictly_decreasing = false;
    bool moment_errors_strictly_decreasing = false;
    bool mass_non_decreasing = false;
    fs::path csv_path;
    fs::path json_path;
};

inline SweepRecord run_sweep(const ExperimentConfig& config, const fs::path& out_dir) {
    PekarProblem problem = config.make_problem();
    const Grid& g = problem.grid;
    PekarResult pekar = minimize(problem, config.pekar_options());
    if (!pekar.converged)
        throw ConvergenceError("alpha-sweep: pekar solver did not converge", pekar.gradient_residual);

    ModeSet modes = make_mode_set(g, config.modes);
    ProbeSet probes = ProbeSet::standard(g, modes);
    const double center = well_center(config);
    PartitionOfUnity window8 = make_partition(g, g.length() / 8.0, center);
    PartitionOfUnity window4 = make_partition(g, g.length() / 4.0, center);

    SweepRecord record;
    record.config_hash = config.hash();
    record.energy_pekar = pekar.energy;
    record.moment_names = probes.names;

    auto run_one = [&](double alpha) {
        SweepRow row;
        row.alpha = alpha;
        std::shared_ptr<CompositeState> state;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            row.cutoff = cutoff_rule(pekar.u_psi, alpha, config.cutoff_safety);
            FockBasis basis(config.modes, row.cutoff);
            CompositeHamiltonian H = hamiltonian(problem, modes, basis, alpha);
            row.neglected_weight = H.neglected_interaction_weight;

            Field psi_unit = normalized(pekar.psi);
            TrialEnergy trial = product_trial_energy(psi_unit, pekar.u_psi, H);
            row.energy_trial = trial.energy;
            row.coherent_tail = trial.fock_truncation_error;

            CoherentExpansion xi = coherent_state(pekar.u_psi, modes, basis, alpha);
            CompositeState seed = product_state(psi_unit, xi, basis, alpha);
            GroundState gs =
                ground_state(H, config.lanczos_tolerance, seed.coefficients,
                             config.lanczos_max_matvecs, config.seed);
            row.energy_alpha = gs.energy;
            row.lanczos_residual = gs.residual;
            state = std::make_shared<CompositeState>(std::move(gs.state));

            ReducedDensities red = reduce(*state);
            row.trace_distance = trace_distance(red.gamma, pure_density(pekar.psi));
            for (const auto& probe : probes.probes) {
                const Complex got = moment(*state, probe);
                const Complex want = pekar_prediction(pekar, probe, modes);
                row.moment_errors.push_back(std::abs(got - want));
            }
            row.mass_window_eighth = window_mass(red.gamma, window8.chi);
            row.mass_window_quarter = window_mass(red.gamma, window4.chi);
            row.ok = true;
        } catch (const CapacityError& err) {
            row.error = err.what();
        } catch (const ConvergenceError& err) {
            row.error = err.what();
        }
        row.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return std::make_pair(row, state);
    };

    const int workers = worker_count();
    if (workers <= 1) {
        for (double alpha : config.alphas) {
            auto [row, state] = run_one(alpha);
            record.rows.push_back(std::move(row));
            record.states.push_back(std::move(state));
        }
    } else {
        for (size_t base = 0; base < config.alphas.size(); base += static_cast<size_t>(workers)) {
            std::vector<std::future<std::pair<SweepRow, std::shared_ptr<CompositeState>>>> batch;
            for (size_t i = base; i < std::min(config.alphas.size(), base + workers); ++i)
                batch.push_back(std::async(std::launch::async, run_one, config.alphas[i]));
            for (auto& fut : batch) {
                auto [row, state] = fut.get();
                record.rows.push_back(std::move(row));
                record.states.push_back(std::move(state));
            }
        }
    }

    // persist the ground states for reuse across runs
    for (size_t i = 0; i < record.states.size(); ++i)
        if (record.states[i])
            save_composite_state(out_dir / ("state_" + std::to_string(i) + ".plrn"),
                                 *record.states[i], config.hash_u64());

    // verdicts over the rows that completed
    std::vector<const SweepRow*> ok_rows;
    for (const auto& row : record.rows)
        if (row.ok) ok_rows.push_back(&row);
    record.variational_bound_ok = !ok_rows.empty();
    for (const SweepRow* row : ok_rows)
        if (!(row->energy_alpha <= row->energy_trial + 1e-8)) record.variational_bound_ok = false;
    const bool enough = ok_rows.size() >= 2;
    record.energy_gap_strictly_decreasing = enough;
    record.trace_distance_strictly_decreasing = enough;
    record.moment_errors_strictly_decreasing = enough;
    record.mass_non_decreasing = enough;
    for (size_t i = 0; i + 1 < ok_rows.size(); ++i) {
        const SweepRow &a = *ok_rows[i], &b = *ok_rows[i + 1];
        if (!(std::abs(b.energy_alpha - record.energy_pekar) <
              std::abs(a.energy_alpha - record.energy_pekar)))
            record.energy_gap_strictly_decreasing = false;
        if (!(b.trace_distance < a.trace_distance))
            record.trace_distance_strictly_decreasing = false;
        for (size_t p = 0; p < a.moment_errors.size(); ++p) {
            if (record.moment_names[p] == "identity") continue;
            if (!(b.moment_errors[p] < a.moment_errors[p]))
                record.moment_errors_strictly_decreasing = false;
        }
        if (b.mass_window_eighth < a.mass_window_eighth - 1e-12 ||
            b.mass_window_quarter < a.mass_window_quarter - 1e-12)
            record.mass_non_decreasing = false;
    }

    record.pekar = std::move(pekar);

    // CSV
    std::ostringstream csv;
    csv << csv_header(record.config_hash, version());
    csv << "alpha,cutoff,energy_alpha,energy_pekar,energy_trial,abs_energy_gap,trace_distance";
    for (const auto& name : record.moment_names) csv << ",moment_err_" << name;
    csv << ",mass_window_eighth,mass_window_quarter,coherent_tail,neglected_weight,"
           "lanczos_residual,wall_seconds,error\n";
    for (const auto& row : record.rows) {
        std::vector<std::string> cells;
        cells.push_back(detail::format_cell(row.alpha));
        cells.push_back(std::to_string(row.cutoff));
        if (row.ok) {
            cells.push_back(detail::format_cell(row.energy_alpha));
            cells.push_back(detail::format_cell(record.energy_pekar));
            cells.push_back(detail::format_cell(row.energy_trial));
            cells.push_back(detail::format_cell(std::abs(row.energy_alpha - record.energy_pekar)));
            cells.push_back(detail::format_cell(row.trace_distance));
            for (double err : row.moment_errors) cells.push_back(detail::format_cell(err));
            cells.push_back(detail::format_cell(row.mass_window_eighth));
            cells.push_back(detail::format_cell(row.mass_window_quarter));
            cells.push_back(detail::format_cell(row.coherent_tail));
            cells.push_back(detail::format_cell(row.neglected_weight));
            cells.push_back(detail::format_cell(row.lanczos_residual));
            cells.push_back(detail::format_cell(row.wall_seconds));
            cells.push_back("");
        } else {
            for (int skip = 0; skip < 5 + static_cast<int>(record.moment_names.size()) + 5; ++skip)
                cells.push_back("");
            cells.push_back(detail::format_cell(row.wall_seconds));
            cells.push_back("\"" + row.error + "\"");
        }
        for (size_t i = 0; i < cells.size(); ++i) csv << (i ? "," : "") << cells[i];
        csv << "\n";
    }
    csv << "# verdict variational_bound_ok=" << (record.variational_bound_ok ? "true" : "false")
        << "\n";
    csv << "# verdict abs_energy_gap_strictly_decreasing="
        << (record.energy_gap_strictly_decreasing ? "true" : "false") << "\n";
    csv << "# verdict trace_distance_strictly_decreasing="
        << (record.trace_distance_strictly_decreasing ? "true" : "false") << "\n";
    csv << "# verdict moment_errors_strictly_decreasing="
        << (record.moment_errors_strictly_decreasing ? "true" : "false") << "\n";
    csv << "# verdict mass_non_decreasing=" << (record.mass_non_decreasing ? "true" : "false")
        << "\n";
    record.csv_path = out_dir / "sweep.csv";
    write_text(record.csv_path, csv.str());

    // JSON summary (no wall times; byte-stable across runs)
    Json doc;
    doc["version"] = version();
    doc["config_hash"] = record.config_hash;
    doc["energy_pekar"] = record.energy_pekar;
    doc["verdicts"] = Json{{"variational_bound_ok", record.variational_bound_ok},
                           {"abs_energy_gap_strictly_decreasing", record.energy_gap_strictly_decreasing},
                           {"trace_distance_strictly_decreasing", record.trace_distance_strictly_decreasing},
                           {"moment_errors_strictly_decreasing", record.moment_errors_strictly_decreasing},
                           {"mass_non_decreasing", record.mass_non_decreasing}};
    Json rows = Json::array();
    for (const auto& row : record.rows) {
        Json r;
        r["alpha"] = row.alpha;
        r["ok"] = row.ok;
        if (row.ok) {
            r["cutoff"] = row.cutoff;
            r["energy_alpha"] = row.energy_alpha;
            r["energy_trial"] = row.energy_trial;
            r["trace_distance"] = row.trace_distance;
            r["mass_window_eighth"] = row.mass_window_eighth;
            r["mass_window_quarter"] = row.mass_window_quarter;
            r["coherent_tail"] = row.coherent_tail;
            r["neglected_weight"] = row.neglected_weight;
        } else {
            r["error"] = row.error;
        }
        rows.push_back(std::move(r));
    }
    doc["rows"] = std::move(rows);
    record.json_path = out_dir / "sweep_summary.json";
    write_text(record.json_path, doc.dump(2) + "\n");
    return record;
}

// --- localize-check ------------------------------------------------------------------

struct LocalizationRun {
    std::vector<std::pair<double, std::vector<EnergySplitRow>>> ladders;  // per alpha
    LocalizationIdentityReport identities;          // on the largest-alpha state
    LocalizationIdentityReport smoke_identities;    // q = 1 smoke case
    bool any_capacity_exceeded = false;
    bool mass_non_decreasing_in_alpha = true;
    fs::path csv_path;
    fs::path json_path;
};

inline LocalizationRun run_localization(const ExperimentConfig& config, const fs::path& out_dir) {
    PekarProblem problem = config.make_problem();
    const Grid& g = problem.grid;
    PekarResult pekar = minimize(problem, config.pekar_options());
    ModeSet modes = make_mode_set(g, config.modes);
    const double center = well_center(config);

    LocalizationRun run;
    std::shared_ptr<CompositeState> last_state;
    for (double alpha : config.alphas) {
        const int cutoff = cutoff_rule(pekar.u_psi, alpha, config.cutoff_safety);
        FockBasis basis(config.modes, cutoff);
        CompositeHamiltonian H = hamiltonian(problem, modes, basis, alpha);
        CoherentExpansion xi = coherent_state(pekar.u_psi, modes, basis, alpha);
        CompositeState seed = product_state(normalized(pekar.psi), xi, basis, alpha);
        GroundState gs = ground_state(H, config.lanczos_tolerance, seed.coefficients,
                                      config.lanczos_max_matvecs, config.seed);
        last_state = std::make_shared<CompositeState>(std::move(gs.state));
        auto rows = energy_split_check(*last_state, config.localization_radii, center, problem,
                                       modes);
        for (const auto& row : rows)
            if (row.capacity_exceeded) run.any_capacity_exceeded = true;
        run.ladders.emplace_back(alpha, std::move(rows));
    }

    // mass-in-window monotonicity in alpha at fixed R
    for (size_t r = 0; r < config.localization_radii.size(); ++r)
        for (size_t i = 0; i + 1 < run.ladders.size(); ++i) {
            const auto& a = run.ladders[i].second[r];
            const auto& b = run.ladders[i + 1].second[r];
            if (a.capacity_exceeded || b.capacity_exceeded) continue;
            if (b.mass_chi < a.mass_chi - 1e-12) run.mass_non_decreasing_in_alpha = false;
        }

    // identity checks on the last state
    {
        const Grid& sg = last_state->grid;
        CMatrix Gamma = sg.spacing() *
                        (last_state->coefficients * last_state->coefficients.adjoint());
        PartitionOfUnity part = make_partition(sg, config.localization_radii.front(), center);
        CMatrix q_field = clip_spectrum(compress_to_modes(part.chi, modes));
        run.identities =
            verify_localization_identities(Gamma, sg, last_state->basis, part.chi, q_field);
        Field ones = field_from(sg, [](double) { return Complex(1.0, 0.0); });
        run.smoke_identities = verify_localization_identities(
            Gamma, sg, last_state->basis, ones, CMatrix::Identity(config.modes, config.modes));
    }

    std::ostringstream csv;
    csv << csv_header(config.hash(), version());
    csv << "alpha,radius,defect,mass_chi,compression_defect,capacity_exceeded,error\n";
    for (const auto& [alpha, rows] : run.ladders)
        for (const auto& row : rows) {
            csv << detail::format_cell(alpha) << "," << detail::format_cell(row.radius) << ",";
            if (row.capacity_exceeded) {
                csv << ",,," << "true" << ",\"" << row.message << "\"\n";
            } else {
                csv << detail::format_cell(row.defect) << "," << detail::format_cell(row.mass_chi)
                    << "," << detail::format_cell(row.compression_defect) << ",false,\n";
            }
        }
    csv << "# verdict mass_non_decreasing_in_alpha="
        << (run.mass_non_decreasing_in_alpha ? "true" : "false") << "\n";
    run.csv_path = out_dir / "localization_ladder.csv";
    write_text(run.csv_path, csv.str());

    auto identity_json = [](const LocalizationIdentityReport& rep) {
        return Json{{"particle_deviation", rep.particle_deviation},
                    {"field_deviation", rep.field_deviation},
                    {"sigma_deviation", rep.sigma_deviation},
                    {"trace_deviation", rep.trace_deviation},
                    {"trace_q", rep.trace_q},
                    {"trace_complement", rep.trace_complement}};
    };
    Json doc;
    doc["version"] = version();
    doc["config_hash"] = config.hash();
    doc["identities"] = identity_json(run.identities);
    doc["smoke_identities"] = identity_json(run.smoke_identities);
    doc["any_capacity_exceeded"] = run.any_capacity_exceeded;
    doc["mass_non_decreasing_in_alpha"] = run.mass_non_decreasing_in_alpha;
    run.json_path = out_dir / "localization_identities.json";
    write_text(run.json_path, doc.dump(2) + "\n");
    return run;
}

// --- husimi ------------------------------------------------------------------

struct HusimiRun {
    struct Row {
        double alpha;
        Complex predicted;
        double total_mass;
        double mass_near_prediction;
        bool coarse_warning;
    };
    std::vector<Row> rows;
    bool concentration_increasing = true;
    std::vector<fs::path> matrix_paths;
    fs::path json_path;
};

inline HusimiRun run_husimi(const ExperimentConfig& config, const fs::path& out_dir) {
    if (config.husimi_mode < 0 || config.husimi_mode >= config.modes)
        throw ConfigError("config: husimi.mode out of range");
    PekarProblem problem = config.make_problem();
    const Grid& g = problem.grid;
    PekarResult pekar = minimize(problem, config.pekar_options());
    ModeSet modes = make_mode_set(g, config.modes);
    const CVector amps = mode_amplitudes(pekar.u_psi, modes);
    const Complex predicted = amps[config.husimi_mode];

    HusimiRun run;
    int index = 0;
    for (double alpha : config.alphas) {
        const int cutoff = cutoff_rule(pekar.u_psi, alpha, config.cutoff_safety);
        FockBasis basis(config.modes, cutoff);
        CompositeHamiltonian H = hamiltonian(problem, modes, basis, alpha);
        CoherentExpansion xi = coherent_state(pekar.u_psi, modes, basis, alpha);
        CompositeState seed = product_state(normalized(pekar.psi), xi, basis, alpha);
        GroundState gs = ground_state(H, config.lanczos_tolerance, seed.coefficients,
                                      config.lanczos_max_matvecs, config.seed);

        HusimiSpec spec;
        spec.mode = config.husimi_mode;
        spec.center = predicted;
        spec.extent = config.husimi_extent / alpha;
        spec.cells_per_side = config.husimi_cells;
        HusimiReport rep = husimi_marginal(gs.state, config.husimi_mode, spec);

        HusimiRun::Row row;
        row.alpha = alpha;
        row.predicted = predicted;
        row.total_mass = rep.total_mass;
        row.mass_near_prediction = mass_within(rep, predicted, 3.0 / alpha);
        row.coarse_warning = rep.coarse_grid_warning;
        run.rows.push_back(row);

        // gnuplot-compatible matrix: blocks of "re im q" separated by blanks
        std::ostringstream mat;
        mat << "# schema=1\n# config_hash=" << config.hash() << "\n# version=" << version()
            << "\n# alpha=" << detail::format_cell(alpha) << " mode=" << config.husimi_mode
            << "\n";
        for (int a = 0; a < rep.density.rows(); ++a) {
            for (int b = 0; b < rep.density.cols(); ++b) {
                const Complex u = rep.center + Complex(-rep.extent + (a + 0.5) * rep.cell_size,
                                                       -rep.extent + (b + 0.5) * rep.cell_size);
                mat << detail::format_cell(std::real(u)) << " " << detail::format_cell(std::imag(u))
                    << " " << detail::format_cell(rep.density(a, b)) << "\n";
            }
            mat << "\n";
        }
        fs::path mpath = out_dir / ("husimi_" + std::to_string(index) + ".dat");
        write_text(mpath, mat.str());
        run.matrix_paths.push_back(mpath);
        ++index;
    }

    for (size_t i = 0; i + 1 < run.rows.size(); ++i)
        if (!(run.rows[i + 1].mass_near_prediction > run.rows[i].mass_near_prediction))
            run.concentration_increasing = false;
    if (run.rows.size() <= 1) run.concentration_increasing = false;

    Json doc;
    doc["version"] = version();
    doc["config_hash"] = config.hash();
    doc["mode"] = config.husimi_mode;
    doc["predicted_amplitude"] = Json{{"re", std::real(predicted)}, {"im", std::imag(predicted)}};
    Json rows = Json::array();
    for (const auto& row : run.rows)
        rows.push_back(Json{{"alpha", row.alpha},
                            {"total_mass", row.total_mass},
                            {"mass_near_prediction", row.mass_near_prediction},
                            {"coarse_grid_warning", row.coarse_warning}});
    doc["rows"] = std::move(rows);
    doc["concentration_increasing"] = run.concentration_increasing;
    run.json_path = out_dir / "husimi_summary.json";
    write_text(run.json_path, doc.dump(2) + "\n");
    return run;
}

}  // namespace polaron
