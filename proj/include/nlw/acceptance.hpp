#pragma once

// Acceptance suite: one PASS/FAIL line per criterion. Shared by the
// acceptance_tests binary and `workbench verify`.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace nlw {

struct AcceptanceOptions {
  /// IDX directory for the MNIST subset. Empty: $WORKBENCH_DATA_DIR, then the
  /// subset shipped with the source tree.
  std::filesystem::path data_dir;
  /// Scratch space for the determinism criterion. Empty: a temp directory.
  std::filesystem::path scratch;
  /// Criterion ids to run; empty runs all of them.
  std::vector<int> only;
};

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

/// Runs the selected criteria, printing each result line to `out` as soon as
/// it is known.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options, std::ostream& out);

std::string format_result_line(const CriterionResult& r);

}  // namespace nlw
