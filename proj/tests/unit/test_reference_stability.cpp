#include "doctest.h"

#include <iostream>

#include "stochep/expfam.hpp"
#include "stochep/harness/config.hpp"
#include "stochep/harness/reference.hpp"

using namespace stochep;
using namespace stochep::harness;

// Desk-scale HLR references from two master seeds, several minutes each.
TEST_CASE("HLR reference agrees across master seeds") {
  const ExperimentConfig c = load_config(std::string(STOCHEP_SOURCE_DIR) + "/configs/hlr-synthetic.json");
  const ExperimentProblem p = build_problem(c);
  const NaturalParams a = compute_reference(c, p, 11, &std::cerr);
  const NaturalParams b = compute_reference(c, p, 12, &std::cerr);
  const double kl_ab = kl_divergence(a, b);
  const double kl_ba = kl_divergence(b, a);
  std::cout << "KL(a || b) = " << kl_ab << ", KL(b || a) = " << kl_ba << "\n";
  CHECK(kl_ab < 1e-3);
  CHECK(kl_ba < 1e-3);
}
