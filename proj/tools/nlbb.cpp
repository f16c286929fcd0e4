// Command-line front end: derive constants, solve the mild equations, sample
// backbone trees, run the verification suite, regenerate summaries.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "nlbb/checks.hpp"
#include "nlbb/dressing.hpp"
#include "nlbb/stats.hpp"

namespace fs = std::filesystem;
using namespace nlbb;

namespace {

ExperimentConfig load_config(const std::string& path, std::int64_t seed_override,
                             std::int64_t rep_override, int threads_override) {
    ExperimentConfig cfg = path.empty() ? ExperimentConfig::reference()
                                        : ExperimentConfig::load(path);
    if (seed_override >= 0) cfg.simulation.seed = static_cast<std::uint64_t>(seed_override);
    if (rep_override > 0) {
        cfg.simulation.replicates = static_cast<int>(rep_override);
        for (auto& c : cfg.checks) c.params.erase("replicates");
    }
    if (threads_override > 0) cfg.simulation.threads = threads_override;
    cfg.rehash();
    return cfg;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
    const fs::path p = fs::path(dir) / name;
    std::ofstream out(p);
    if (!out) throw ConfigError("cannot write " + p.string());
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"backbone decomposition toolkit for superprocesses with non-local branching"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_dir = "out";
    std::int64_t seed_override = -1, rep_override = -1;
    int threads_override = 0;
    app.add_option("--config,-c", config_path, "configuration file (JSON)");
    app.add_option("--out,-o", out_dir, "output directory");
    app.add_option("--seed", seed_override, "override the master seed");
    app.add_option("--replicates", rep_override, "override replicate counts");
    app.add_option("--threads", threads_override, "worker threads (0 = auto)");

    auto* cmd_derive = app.add_subcommand("derive", "derive constants and offspring laws");
    auto* cmd_solve = app.add_subcommand("solve", "solve the mild equations, write columnar fields");
    double solve_f = 0.5, solve_h = 0.2, solve_T = 1.0;
    bool solve_grid = false;
    cmd_solve->add_option("--data-f", solve_f, "constant data f");
    cmd_solve->add_option("--data-h", solve_h, "constant data h");
    cmd_solve->add_option("--T", solve_T, "horizon");
    cmd_solve->add_flag("--grid", solve_grid, "solve on the spatial grid instead of scalar mode");
    auto* cmd_sim = app.add_subcommand("simulate", "sample backbone trees and dressed states");
    int sim_trees = 10;
    double sim_T = 1.0;
    bool sim_dress = false;
    cmd_sim->add_option("--trees", sim_trees, "number of trees to sample");
    cmd_sim->add_option("--T", sim_T, "horizon");
    cmd_sim->add_flag("--dress", sim_dress, "also run particle dressing per tree");
    auto* cmd_verify = app.add_subcommand("verify", "run the verification suite");
    auto* cmd_report = app.add_subcommand("report", "regenerate the summary from results.tsv");
    std::string report_in;
    cmd_report->add_option("--results", report_in, "results.tsv path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentConfig cfg = load_config(config_path, seed_override, rep_override,
                                           threads_override);

        if (cmd_derive->parsed()) {
            std::cout << "config " << cfg.config_hash << "\n" << run_derive_report(cfg);
            return 0;
        }

        if (cmd_solve->parsed()) {
            ensure_dir(out_dir);
            const DerivedConstants consts = derive_constants(cfg.mechanism);
            if (!solve_grid) {
                const SolutionField ustar =
                    solve_u_star_scalar(cfg.mechanism, consts, solve_f, solve_T, cfg.solver);
                const SolutionField u =
                    solve_u_scalar(cfg.mechanism, consts, solve_f, solve_T, cfg.solver);
                const SolutionField v = solve_v_scalar(cfg.mechanism, consts, solve_h, ustar,
                                                       cfg.solver);
                auto fu = open_out(out_dir, "u.tsv");
                write_columnar(u, fu);
                auto fus = open_out(out_dir, "u_star.tsv");
                write_columnar(ustar, fus);
                auto fv = open_out(out_dir, "exp_neg_v.tsv");
                write_columnar(v, fv);
            } else {
                const GridSpec grid = cfg.solver.grid();
                const GridFunction f = GridFunction::constant(grid, solve_f);
                const GridFunction h = GridFunction::constant(grid, solve_h);
                const SolutionField ustar = solve_u_star_grid(cfg.mechanism, consts, cfg.motion,
                                                              cfg.displacement, f, solve_T,
                                                              cfg.solver);
                const SolutionField v = solve_v_grid(cfg.mechanism, consts, cfg.motion,
                                                     cfg.displacement, h, ustar, cfg.solver);
                auto fus = open_out(out_dir, "u_star.tsv");
                write_columnar(ustar, fus);
                auto fv = open_out(out_dir, "exp_neg_v.tsv");
                write_columnar(v, fv);
            }
            std::cout << "fields written to " << out_dir << "\n";
            return 0;
        }

        if (cmd_sim->parsed()) {
            ensure_dir(out_dir);
            const DerivedConstants consts = derive_constants(cfg.mechanism);
            const OffspringLaws laws = offspring_laws(cfg.mechanism, consts);
            const TreeParams tp{cfg.simulation.tree_dt, cfg.simulation.population_cap};
            const AtomicMeasure nu = AtomicMeasure::unit_atom(make_point(0.0));
            auto ft = open_out(out_dir, "trees.txt");
            std::size_t capped = 0;
            double mass_sum = 0.0;
            for (int i = 0; i < sim_trees; ++i) {
                Rng rng(cfg.simulation.seed, fnv1a64("simulate") + i);
                try {
                    BackboneTree tree = sample_tree(nu, sim_T, cfg.mechanism, consts, laws,
                                                    cfg.motion, cfg.displacement, tp, rng);
                    serialize_tree(tree, ft);
                    if (sim_dress) {
                        const auto events = sample_immigration_events(
                            tree, sim_T, cfg.mechanism, consts, cfg.simulation.mass_floor, rng);
                        const AtomicMeasure mu = AtomicMeasure::unit_atom(make_point(0.0));
                        const ParticleParams pp{cfg.simulation.epsilon,
                                                cfg.simulation.population_cap,
                                                cfg.simulation.mass_floor};
                        const DressedState state =
                            particle_dressing(tree, events, sim_T, mu, cfg.mechanism, consts,
                                              cfg.motion, cfg.displacement, pp, rng);
                        mass_sum += state.total_mass();
                    }
                } catch (const PopulationExplosion&) {
                    ++capped;
                }
            }
            std::cout << "sampled " << sim_trees << " trees (cap hit: " << capped << ")";
            if (sim_dress) std::cout << ", mean dressed mass " << mass_sum / sim_trees;
            std::cout << "\n";
            return 0;
        }

        if (cmd_verify->parsed()) {
            ensure_dir(out_dir);
            const auto records = run_verify(cfg);
            auto fr = open_out(out_dir, "results.tsv");
            write_results_tsv(records, fr);
            auto fsum = open_out(out_dir, "summary.txt");
            write_summary(records, fsum);
            write_summary(records, std::cout);
            return all_pass(records) ? 0 : 1;
        }

        if (cmd_report->parsed()) {
            std::ifstream in(report_in);
            if (!in) throw ConfigError("cannot open " + report_in);
            const auto records = read_results_tsv(in);
            write_summary(records, std::cout);
            return all_pass(records) ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
