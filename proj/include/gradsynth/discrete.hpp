#pragma once

// The discrete machine: runs one concrete program on concrete inputs.
//
// This is the ground truth the lifted machine must agree with on point-mass
// parameters, the evaluator used to score discretized programs on held-out
// examples, and the inner loop of the enumerative baseline.  Every semantic
// decision here mirrors the lifted interpreter: fresh-cell allocation per
// timestep (or the stack pointer for model A), liveness-gated effects inside
// loop bodies, per-iteration rebinding of loop-local names, and zero/null
// results for reads through null pointers.

#include <vector>

#include "gradsynth/models.hpp"
#include "gradsynth/values.hpp"

namespace gradsynth {

struct ConcreteReg {
  int i = 0;  // int slot (untyped variants keep their single value here)
  int p = 0;  // pointer slot
  int b = 0;  // bool slot
  bool operator==(const ConcreteReg&) const = default;
};

struct ConcreteCell {
  int data = 0;
  int next = 0;
  bool operator==(const ConcreteCell&) const = default;
};

struct ConcreteState {
  std::vector<ConcreteReg> regs;
  std::vector<ConcreteCell> heap;
  int ip = 0;
  int sp = 0;
  int alloc_base = 0;
};

// Program with every slot resolved to its chosen value (register ids,
// instruction codes, branch targets, combinator).
struct DecodedLine {
  Instr instr = Instr::Noop;
  int out = -1;
  int arg1 = -1;
  int arg2 = -1;
  int cond = -1;
  int branch = -1;
};

struct DecodedProgram {
  std::vector<DecodedLine> lines;
  Comb comb = Comb::Foreach;
  int loop1 = -1;
  int loop2 = -1;
  int acc_init = -1;
  int comb_out = -1;
};

DecodedProgram decode(const ModelSpec& spec, const ParamLayout& layout,
                      const ConcreteProgram& prog);

ConcreteState discrete_run(const ModelSpec& spec, const DecodedProgram& prog,
                           const std::vector<TaskValue>& inputs);

// Reads the observed register as a task output.  List outputs follow the
// pointer chain for at most heap-many cells; a longer (cyclic) chain yields
// a sentinel that compares unequal to any well-formed expectation.
TaskOutput read_output(const ModelSpec& spec, const ConcreteState& s, OutputKind kind);

}  // namespace gradsynth
