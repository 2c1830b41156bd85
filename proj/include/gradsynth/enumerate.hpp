#pragma once

// Enumerative baseline: depth-first search over the parameter slots for the
// first concrete program consistent with every example.
//
// Immutable variants are searched demand-first and shortest-first: slots are
// assigned from the observed register backwards, a binding whose register no
// assigned reader consumes is pinned to noop, programs are explored in rounds
// of increasing non-noop line count, and typed variants additionally restrict
// each argument to the registers that can actually carry the requested kind
// plus one canonical zero/null source (reading any other mismatched register
// yields the same zero).  Mutable and assembly variants fall back to a plain
// forward scan that still pins slots the chosen instruction ignores (unused
// arguments, the output of a non-writing instruction, branch targets of
// non-jumps, the condition of anything but ite, loop slots of other
// combinators).  Both searches visit a canonical subspace that preserves
// every distinct program behaviour.

#include <cstdint>
#include <optional>
#include <vector>

#include "gradsynth/models.hpp"
#include "gradsynth/values.hpp"

namespace gradsynth {

struct EnumerationResult {
  std::optional<ConcreteProgram> program;  // first consistent program found
  uint64_t nodes = 0;                      // slot assignments + evaluations
  bool exhausted = false;                  // budget ran out before the space did
};

// Searches spec's program space for a program that reproduces every example.
// `node_budget` bounds the work deterministically: each slot assignment and
// each candidate evaluation costs one node, and the search stops (exhausted)
// when the budget runs out.
EnumerationResult enumerate_programs(const ModelSpec& spec,
                                     const std::vector<Example>& examples,
                                     uint64_t node_budget);

}  // namespace gradsynth
