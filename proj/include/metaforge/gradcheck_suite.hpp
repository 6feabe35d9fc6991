// SPDX-License-Identifier: Apache-2.0
//
// Seeded central-difference sweeps over every autodiff primitive and over
// the full sequence loss of small models. Used by the `gradcheck` CLI
// subcommand and the acceptance suite.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metaforge/autodiff.hpp"

namespace metaforge::ad {

struct SuiteResult {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t instances = 0;
  bool pass = false;
};

// One sweep per primitive, `instances` random instances each.
std::vector<SuiteResult> primitive_gradcheck_suite(std::size_t instances,
                                                   std::uint64_t seed,
                                                   double h, double tol);

// sequence_nll gradients of dim-4 models (with and without mask, both model
// variants, attention on and off) against central differences.
SuiteResult model_gradcheck_suite(std::size_t instances, std::uint64_t seed,
                                  double h, double tol);

}  // namespace metaforge::ad
