#pragma once

// Command-line front end: restore, diagnose, simulate.
//
// Exit codes: 0 success, 2 input error, 3 numerical or solver failure.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fisherlens/model_core.hpp"

namespace fisherlens::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitSolver = 3;

inline constexpr const char* kReportSchemaVersion = "1.0";

/// 2 for input/validation kinds, 3 for solver kinds.
int exit_code_for(ErrorKind kind);

struct ProblemOptions {
  double alpha = 0.5;
  double alpha_low = 0.01;
  double alpha_high = 0.99;
  std::string method;  // empty: command default
  std::uint64_t seed = 0;
  double rank_rel_tol = kDefaultRankRelTol;
};

struct ProblemFile {
  Matrix psf;
  Vector noise_mean;
  Matrix noise_cov;
  std::optional<Vector> image;
  std::optional<Vector> true_object;
  ProblemOptions options;
};

/// Loads a problem JSON document. CSV payloads are resolved relative to the
/// document's directory. Throws Error(Parse | validation kinds).
ProblemFile load_problem(const std::filesystem::path& path);

/// Numeric CSV: ',' separated, '.' decimal, '#' comments, blank lines
/// skipped, optional header row of names. Ragged rows are rejected.
Matrix read_csv_matrix(const std::filesystem::path& path);
/// A single row or a single column.
Vector read_csv_vector(const std::filesystem::path& path);

/// Shortest round-trip decimal form.
std::string format_double(double v);

void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& header,
               const std::vector<Vector>& columns);

/// Entry point shared by the binary and the tests.
int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err);

}  // namespace fisherlens::cli
