// SPDX-License-Identifier: Apache-2.0
//
// Plain data carriers shared by the search, estimation and simulation layers.

#ifndef KINDISC_DATASET_HPP
#define KINDISC_DATASET_HPP

#include <string>
#include <vector>

#include "kindisc/common.hpp"

namespace kindisc {

/// Generic regression table: rows of input assignments and scalar targets.
/// Concentration surrogates use a single input (time); rate models use one
/// input per species.
struct FitData {
  std::vector<std::string> variable_names;
  std::vector<std::vector<double>> inputs;  // inputs[i][v]
  std::vector<double> targets;              // targets[i]

  std::size_t rows() const { return targets.size(); }

  void validate() const {
    if (inputs.size() != targets.size())
      throw StructuralError("FitData: inputs/targets row mismatch");
    for (const auto& row : inputs)
      if (row.size() != variable_names.size())
        throw StructuralError("FitData: row width does not match variable names");
  }
};

/// One simulated batch-reactor experiment: sampled times and noisy species
/// concentrations, plus where it came from.
struct ExperimentDataset {
  int id = 0;
  std::vector<double> initial_state;                // designed x0 per species [M]
  std::vector<double> times;                        // strictly increasing, [h]
  std::vector<std::vector<double>> measurements;    // [time][species], [M]
  std::string provenance;                           // "designed" | "mbdoe_round_<k>"

  std::size_t sample_count() const { return times.size(); }
  std::size_t species_count() const { return initial_state.size(); }
};

}  // namespace kindisc

#endif  // KINDISC_DATASET_HPP
