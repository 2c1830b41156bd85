#pragma once

// The lifted machine: builds the computation graph that runs a distribution
// over programs on concrete inputs.
//
// Discrete machine state (registers, heap cells, instruction pointer, stack
// pointer) is replaced by one distribution per component, and every discrete
// transition by its expectation under the program parameters.  Uncertain
// writes become convex blends of "written" and "kept"; heap allocation either
// follows a distribution-valued stack pointer (model A) or is tied to the
// timestep (all other variants), in which case each cell is written by at
// most one step and updates reduce to disjoint accumulation.

#include <array>
#include <map>
#include <vector>

#include "gradsynth/autodiff.hpp"
#include "gradsynth/models.hpp"
#include "gradsynth/values.hpp"

namespace gradsynth {

// What an instruction reads and produces.  Argument kinds matter only for the
// typed variants (untyped variants read the single value slot).
struct InstrInfo {
  const char* name;
  int arity;            // register arguments consumed (0..2)
  ValueKind arg1;
  ValueKind arg2;
  enum class Res { Int, Ptr, Bool, Copy, None } res;  // Copy: ite forwards a register
  bool writes;          // writes a register under mutable semantics
  bool jumps;           // consults the branch target
};

const InstrInfo& instr_info(Instr i);
inline const char* instr_name(Instr i) { return instr_info(i).name; }

// Register value as graph nodes.  Typed variants use all three slots (each an
// independently normalized distribution; non-result slots hold point masses
// at zero).  Untyped variants use slot 0 only.
struct RegNodes {
  std::array<ad::NodeId, 3> slot{ad::kNoNode, ad::kNoNode, ad::kNoNode};
  ad::NodeId operator[](ValueKind k) const { return slot[static_cast<size_t>(k)]; }
  ad::NodeId& operator[](ValueKind k) { return slot[static_cast<size_t>(k)]; }
};

struct CellNodes {
  ad::NodeId data = ad::kNoNode;  // element distribution (int domain)
  ad::NodeId next = ad::kNoNode;  // successor distribution (pointer domain)
};

struct LiftedState {
  std::vector<RegNodes> regs;   // real registers (no pseudo registers)
  std::vector<CellNodes> heap;  // index k holds address k + 1; address 0 is null
  ad::NodeId ip = ad::kNoNode;  // assembly variants: length P + 1, last = halted
  ad::NodeId sp = ad::kNoNode;  // model A: length H + 2, last = heap full
  int alloc_base = 0;           // input cells consumed; step t allocates alloc_base + t
};

// One distribution node per parameter slot, aligned with ParamLayout::slots.
struct ParamNodes {
  std::vector<ad::NodeId> slots;
};

// Fixed distributions (e.g. a point-mass program) as constant leaves.
ParamNodes param_nodes_from_values(ad::Tape& tape, const ParamLayout& layout,
                                   const ParamValues& values);

// Trainable parameters: one logit leaf per slot, wrapped in softmax.
struct ParamGraph {
  std::vector<ad::NodeId> logits;  // parameter leaves, one per slot
  ParamNodes dists;
};
ParamGraph make_param_graph(ad::Tape& tape, const ParamLayout& layout);

class LiftedMachine {
 public:
  LiftedMachine(ad::Tape& tape, const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }
  ad::Tape& tape() { return tape_; }

  // Encodes inputs: lists laid out head-first from address 1, scalars in
  // registers, everything else point masses at zero/null.
  LiftedState initial_state(const std::vector<TaskValue>& inputs);

  // Runs the full schedule and returns the final state.
  LiftedState run(const ParamNodes& params, const std::vector<TaskValue>& inputs);

  // One assembly timestep (exposed for the blur/equivalence tests).
  LiftedState assembly_step(const LiftedState& s, const ParamNodes& params, int t);

  // Heap reads under an address distribution; address 0 contributes a point
  // mass at zero.  Used by list observation as well as head/tail.
  ad::NodeId gather_data(const LiftedState& s, ad::NodeId ptr);
  ad::NodeId gather_next(const LiftedState& s, ad::NodeId ptr);

  RegNodes observed(const LiftedState& s) const { return s.regs[spec_.observed_reg()]; }

  // Cached constant point mass (interned so repeated zeros share one leaf).
  ad::NodeId cpoint(int n, int index);

 private:
  struct Pseudo {
    RegNodes ele1, ele2, acc, idx;
    bool live_gate = false;    // gate mutable writes by this iteration's liveness
    ad::NodeId live = ad::kNoNode;
  };
  struct LineOut {
    RegNodes full;             // every instruction contributes (noop gives zeros)
    RegNodes write;            // writers only; paired with wmass
    ad::NodeId wmass = ad::kNoNode;
  };

  RegNodes zero_reg();
  ad::NodeId zero_slot(ValueKind k);
  RegNodes read_reg(const LiftedState& s, const Pseudo* pseudo, int id) const;
  RegNodes mix_regs(const LiftedState& s, const Pseudo* pseudo, const SlotDesc& slot,
                    ad::NodeId dist);
  ad::NodeId truth_gate(const RegNodes& cond);  // length 2: [falsy, truthy]
  void gather_terms(std::vector<ad::Term>& out, const LiftedState& s, ad::NodeId ptr,
                    bool next_field, std::array<ad::Factor, 2> extra, int n_extra);

  // Structured execution.
  LineOut exec_line(LiftedState& s, const ParamNodes& params, int line, int t,
                    const Pseudo* pseudo, bool need_full);
  void write_mutable(LiftedState& s, ad::NodeId out_dist, const LineOut& lo,
                     const Pseudo* pseudo);
  struct CombRun {
    LiftedState state;
    RegNodes result;
  };
  CombRun run_comb(Comb c, const LiftedState& start, const ParamNodes& params,
                   const std::vector<Step>& body_steps);
  LiftedState run_structured(const ParamNodes& params, const std::vector<TaskValue>& inputs);
  LiftedState run_assembly(const ParamNodes& params, const std::vector<TaskValue>& inputs);

  // Slot access under the variant's register representation (untyped variants
  // keep their single value in slot 0 regardless of the nominal kind).
  ad::NodeId val(const RegNodes& r, ValueKind k) const {
    return spec_.typed() ? r[k] : r.slot[0];
  }
  void set_val(RegNodes& r, ValueKind k, ad::NodeId n) const {
    if (spec_.typed())
      r[k] = n;
    else
      r.slot[0] = n;
  }
  RegNodes blend(ad::NodeId live, const RegNodes& on, const RegNodes& off);

  ad::Tape& tape_;
  ModelSpec spec_;
  ParamLayout layout_;
  // Lifted arithmetic/compare tables for the machine's domains.
  int tbl_add_ = -1, tbl_inc_ = -1, tbl_dec_ = -1;
  int tbl_eq_ = -1, tbl_gt_ = -1, tbl_and_ = -1, tbl_or_ = -1;
  int tbl_sp_shift_ = -1, tbl_sp_embed_ = -1;  // model A allocation
  int tbl_branch_pad_ = -1;                    // branch targets [0,P) into ip domain [0,P]
  std::map<std::pair<int, int>, ad::NodeId> points_;
  std::vector<int> line_reg_;  // immutable: template line -> register id (-1 otherwise)
  // Parameter slot indices per line (-1 when the slot does not exist).
  std::vector<int> idx_instr_, idx_out_, idx_arg1_, idx_arg2_, idx_cond_, idx_branch_;
  int idx_loop1_ = -1, idx_loop2_ = -1, idx_accinit_ = -1, idx_comb_ = -1, idx_combout_ = -1;
};

}  // namespace gradsynth
