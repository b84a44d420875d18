#include <doctest.h>

#include "mrp/errors.hpp"
#include "mrp/gradcheck.hpp"

using namespace mrp;

TEST_CASE("suite names") {
  for (GradSuite s : all_suites()) CHECK(parse_suite(suite_name(s)) == s);
  CHECK(all_suites().size() == 4);
  CHECK_THROWS_AS(parse_suite("nope"), ValidationError);
  CHECK(default_tolerance(GradSuite::kKabsch) == 1e-4);
  CHECK(default_tolerance(GradSuite::kChain) == 1e-3);
  CHECK(relative_error({1.0, 2.0}, {1.0, 2.0}) == 0.0);
  CHECK(relative_error({0.0}, {1e-12}) == doctest::Approx(1e-2));
}

TEST_CASE("default run passes every suite") {
  const auto rows = run_gradcheck(GradcheckOptions{}, 0);
  REQUIRE(rows.size() == 4);
  for (const auto& row : rows) {
    INFO(suite_name(row.suite), " max error ", row.max_error);
    CHECK(row.instances == 100);
    CHECK(row.passed());
    CHECK(row.max_error < row.tolerance);
  }
}

TEST_CASE("fault injection fails only the injected suite") {
  for (GradSuite target : all_suites()) {
    GradcheckOptions opts;
    opts.instances = 3;
    opts.inject = target;
    for (const auto& row : run_gradcheck(opts, 1)) {
      INFO(suite_name(row.suite));
      CHECK(row.passed() == (row.suite != target));
      if (row.suite == target) CHECK(row.failures == 3);
    }
  }
}

TEST_CASE("tolerance below the finite-difference noise floor fails") {
  GradcheckOptions opts;
  opts.instances = 5;
  opts.tolerance = 1e-12;
  for (const auto& row : run_gradcheck(opts, 2)) {
    INFO(suite_name(row.suite));
    CHECK(!row.passed());
    CHECK(row.tolerance == 1e-12);
  }
}

TEST_CASE("runs are deterministic") {
  GradcheckOptions opts;
  opts.instances = 4;
  const auto a = run_suite(GradSuite::kKabsch, opts, 9);
  const auto b = run_suite(GradSuite::kKabsch, opts, 9);
  CHECK(a.max_error == b.max_error);
  opts.instances = 0;
  CHECK_THROWS_AS(opts.validate(), ValidationError);
}
