#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mrp {

/// Finite-difference checks of every analytic gradient in the library.
enum class GradSuite { kKabsch, kSoftInlier, kVcre, kChain };

const char* suite_name(GradSuite suite);
/// Throws ValidationError for an unknown name.
GradSuite parse_suite(const std::string& name);
const std::vector<GradSuite>& all_suites();

/// 1e-4 for the single-operation suites, 1e-3 for the end-to-end chain.
double default_tolerance(GradSuite suite);

struct GradcheckOptions {
  int instances = 100;
  std::optional<double> tolerance;  // overrides every suite's default
  /// Suite whose analytic gradient gets a deliberate error (fault injection).
  std::optional<GradSuite> inject;
  double step = 1e-6;
  void validate() const;
  bool operator==(const GradcheckOptions&) const = default;
};

struct GradcheckRow {
  GradSuite suite = GradSuite::kKabsch;
  int instances = 0;
  int failures = 0;
  double max_error = 0.0;  // worst relative error over instances
  double tolerance = 0.0;
  bool passed() const { return failures == 0; }
};

/// Relative error ||a - b|| / max(||a||, ||b||, floor).
double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                      double floor = 1e-10);

GradcheckRow run_suite(GradSuite suite, const GradcheckOptions& options, std::uint64_t seed);
std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& options, std::uint64_t seed);

}  // namespace mrp
