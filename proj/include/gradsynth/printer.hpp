#pragma once

// Renders discretized programs as readable listings:
//   - immutable combinator variants as let-bindings with an indented lambda
//     block for the loop body (closed by the body's result binding),
//   - mutable combinator variants as register assignments, the loop printed
//     as a combinator assignment or as a plain for-loop for the foreach
//     template,
//   - assembly variants as a numbered instruction listing (branch targets
//     refer to those numbers).
// Lines that a liveness analysis finds not contributing to the observed
// register are rendered as `--` comments.  Assembly listings are printed
// without dead-code marking: which lines execute depends on the data.

#include <string>
#include <vector>

#include "gradsynth/discrete.hpp"
#include "gradsynth/models.hpp"

namespace gradsynth {

// `input_names` must either be empty (default names: a single list prints as
// l, several as l1, l2, ...; scalars as k, k1, ...) or name every input.
std::string print_program(const ModelSpec& spec, const DecodedProgram& prog,
                          const std::vector<std::string>& input_names = {});

std::string print_program(const ModelSpec& spec, const ParamLayout& layout,
                          const ConcreteProgram& prog,
                          const std::vector<std::string>& input_names = {});

}  // namespace gradsynth
