#include <doctest.h>

#include "gradient_suite.hpp"

using namespace saf;
using namespace saf::test;

TEST_CASE("every gradient case passes finite differences on 100 instances") {
  for (const GradCase& c : gradient_cases()) {
    std::mt19937_64 rng(20240611);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) worst = std::max(worst, c.run(rng));
    INFO(c.name << " worst relative error " << worst);
    CHECK(worst <= 1e-4);
  }
}
