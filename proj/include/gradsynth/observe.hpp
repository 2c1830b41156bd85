#pragma once

// Observation losses: the log-likelihood of an expected output under a final
// machine state, and the batch loss minimized during training (negative total
// log-likelihood, optionally reduced by an entropy bonus over the parameter
// distributions).

#include <vector>

#include "gradsynth/autodiff.hpp"
#include "gradsynth/machine.hpp"
#include "gradsynth/values.hpp"

namespace gradsynth {

// Log-likelihood of `expected` under the observed register of `s`.  Scalars
// read the matching register slot.  Lists walk the pointer chain, scoring one
// element distribution per expected element, and finally require the
// terminating pointer to be null.
ad::NodeId observe_log_likelihood(LiftedMachine& m, const LiftedState& s,
                                  const TaskOutput& expected);

// Runs every example and sums the negative log-likelihoods; when the spec
// carries an entropy weight, high-entropy parameter slots reduce the loss.
ad::NodeId batch_loss(LiftedMachine& m, const ParamNodes& params,
                      const std::vector<Example>& batch);

}  // namespace gradsynth
