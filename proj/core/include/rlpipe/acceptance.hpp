#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace rlpipe {

// End-to-end verification suite: every formula-level and system-level claim
// the library is built around, pinned to fixed seeds and tolerances. The CLI
// `accept` subcommand and the acceptance test binary both run this.

struct CriterionResult {
    int index = 0;
    std::string name;
    bool passed = false;
    std::string detail;
};

struct AcceptanceReport {
    std::vector<CriterionResult> criteria;
    bool all_passed = true;
};

/// Runs all criteria, printing one PASS/FAIL line per criterion to `out`.
AcceptanceReport run_acceptance(std::ostream& out);

} // namespace rlpipe
