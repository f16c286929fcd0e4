// Acceptance suite: runs every verification check at full size, maps the
// records onto the numbered criteria, and prints one pass/fail line each.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "nlbb/checks.hpp"

using namespace nlbb;

namespace {

struct Criterion {
    int number;
    std::string prefix;  // record-name prefix mapped to this criterion
    std::string title;
    double runtime_budget_sec;  // 0 = no budget
};

const std::vector<Criterion> criteria = {
    {1, "constants/", "derived constants and offspring laws", 1.0},
    {2, "conditioning_identity/", "conditioned vs shifted mild equations", 60.0},
    {3, "scalar_oracle/", "scalar flow oracle and extinction proxy", 60.0},
    {4, "joint_laplace_mc/", "joint Laplace functional, analytic dressing", 600.0},
    {5, "poissonization_identity/", "Poissonization identity, solver route", 60.0},
    {6, "poissonization_mc/", "Poissonization identity, simulation route", 600.0},
    {7, "backbone_laws/", "backbone lifetime, split, offspring, growth", 600.0},
    {8, "subordinator/", "immigration subordinator representations", 60.0},
    {9, "particle_mass/", "particle dressing total-mass law", 1200.0},
};

std::string results_text(const std::vector<ReportRecord>& records) {
    std::ostringstream os;
    write_results_tsv(records, os);
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    try {
        ExperimentConfig cfg =
            argc > 1 ? ExperimentConfig::load(argv[1]) : ExperimentConfig::reference();
        const std::string out_dir = argc > 2 ? argv[2] : "acceptance_out";
        std::filesystem::create_directories(out_dir);

        const auto records = run_verify(cfg);
        {
            std::ofstream fr(out_dir + "/results.tsv");
            write_results_tsv(records, fr);
            std::ofstream fs(out_dir + "/summary.txt");
            write_summary(records, fs);
        }

        bool ok = true;
        for (const auto& crit : criteria) {
            bool pass = true;
            int matched = 0;
            double runtime = 0.0;
            for (const auto& r : records) {
                if (r.name.rfind(crit.prefix, 0) != 0) continue;
                ++matched;
                pass = pass && r.pass;
                runtime = std::max(runtime, r.runtime_sec);
            }
            if (matched == 0) pass = false;
            bool budget_ok = crit.runtime_budget_sec <= 0.0 || runtime <= crit.runtime_budget_sec;
            pass = pass && budget_ok;
            ok = ok && pass;
            std::cout << (pass ? "[PASS] " : "[FAIL] ") << "criterion " << crit.number << ": "
                      << crit.title << " (" << matched << " gates, "
                      << static_cast<int>(runtime * 1000) / 1000.0 << " s";
            if (!budget_ok) std::cout << ", over budget " << crit.runtime_budget_sec << " s";
            std::cout << ")\n";
        }

        // criterion 10: byte-identical reports for a fixed seed, exercised on
        // a reduced replicate pool (the stream mechanism is size independent)
        {
            ExperimentConfig small = cfg;
            small.simulation.replicates = 2500;
            for (auto& c : small.checks) {
                c.params.erase("replicates");
                if (c.name == "particle_mass") c.params["replicates"] = 400;
            }
            small.rehash();
            const std::string run1 = results_text(run_verify(small));
            const std::string run2 = results_text(run_verify(small));
            const bool pass = !run1.empty() && run1 == run2;
            ok = ok && pass;
            std::cout << (pass ? "[PASS] " : "[FAIL] ")
                      << "criterion 10: byte-identical reports under a fixed seed\n";
            std::ofstream fd(out_dir + "/determinism_run.tsv");
            fd << run1;
        }

        std::cout << (ok ? "ACCEPTANCE: ALL CRITERIA PASS" : "ACCEPTANCE: FAILURES PRESENT")
                  << "\n";
        return ok ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "acceptance suite aborted: " << e.what() << "\n";
        return 2;
    }
}
