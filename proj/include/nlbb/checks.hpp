#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "nlbb/config.hpp"

namespace nlbb {

struct ReportRecord {
    std::string name;
    double target = 0.0;
    std::string provenance;  // closed-form | solver | identity | info
    double estimate = 0.0;
    double se = 0.0;
    std::string tol_rule;    // the pass criterion, self-contained
    bool pass = false;
    double runtime_sec = 0.0;  // wall clock; human summary only
    std::string config_hash;
};

// Runs the requested checks of the verification suite. Monte Carlo checks are
// replicate-parallel with counter-based streams keyed by (seed, check,
// replicate); results are merged in replicate order, so outputs do not depend
// on the thread count. Module errors become failed records.
std::vector<ReportRecord> run_verify(const ExperimentConfig& cfg);

// Derives constants and laws for the config's own mechanism; returns a
// human-readable table. Throws on invalid mechanisms.
std::string run_derive_report(const ExperimentConfig& cfg);

// Machine-readable results, one record per line. Deterministic for a fixed
// (config, seed): wall-clock runtimes are not part of this artifact.
void write_results_tsv(const std::vector<ReportRecord>& records, std::ostream& os);
// Human-readable summary with runtimes.
void write_summary(const std::vector<ReportRecord>& records, std::ostream& os);
std::vector<ReportRecord> read_results_tsv(std::istream& is);

bool all_pass(const std::vector<ReportRecord>& records);

}  // namespace nlbb
