#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aae/gradcheck.hpp"

using namespace aae;

TEST_CASE("primitive suite passes the finite-difference oracle") {
  CheckSummary s = gradcheck_primitives(12345, 1e-4);
  for (const auto& f : s.failures) MESSAGE(f);
  CHECK(s.ok());
  CHECK(s.checks >= 20);
  CHECK(s.worst_err < 1e-4);
}

TEST_CASE("random composites pass") {
  CheckSummary s = gradcheck_composites(777, 50, 1e-4);
  for (const auto& f : s.failures) MESSAGE(f);
  CHECK(s.ok());
  CHECK(s.checks == 50);
}

TEST_CASE("tiny-model input gradients pass") {
  CheckSummary s = gradcheck_model(31, 3, 1e-4);
  for (const auto& f : s.failures) MESSAGE(f);
  CHECK(s.ok());
}

TEST_CASE("ctc dp/gradient agrees with the enumeration oracle") {
  CheckSummary s = ctc_oracle_check(5, 100);
  for (const auto& f : s.failures) MESSAGE(f);
  CHECK(s.ok());
  CHECK(s.checks >= 100);
}

TEST_CASE("different seeds still pass") {
  CHECK(gradcheck_composites(1, 10, 1e-4).ok());
  CHECK(gradcheck_composites(2, 10, 1e-4).ok());
  CHECK(ctc_oracle_check(99, 20).ok());
}
