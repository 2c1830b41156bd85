#pragma once

// Model variants and their parameter layouts.
//
// Seven variants of one machine: the baseline assembly model A (mutable
// registers, distribution-valued instruction pointer and stack pointer), and
// the restricted variants obtained from three structural ideas —
//   fixed heap allocation (+F): one heap cell per timestep,
//   loop templates (+L / combinators): prefix, loop body, suffix,
//   immutability (+I): one write-once register per line,
//   types (+T): separate int/pointer/bool slots per register.
//
//   A     assembly, untyped, mutable sp
//   A+F   assembly, untyped, allocation tied to the timestep
//   A+L   foreach template, untyped, mutable registers
//   C     combinator template (mapi/zipWithi/foldli), untyped, mutable
//   C+I   combinators, untyped, immutable registers
//   C+T   combinators, typed, mutable
//   C+T+I combinators, typed, immutable

#include <string>
#include <vector>

#include "gradsynth/values.hpp"

namespace gradsynth {

enum class Variant { A, AF, AL, C, CI, CT, CTI };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

constexpr bool is_assembly(Variant v) { return v == Variant::A || v == Variant::AF; }
constexpr bool is_structured(Variant v) { return !is_assembly(v); }
constexpr bool is_immutable(Variant v) { return v == Variant::CI || v == Variant::CTI; }
constexpr bool is_typed(Variant v) { return v == Variant::CT || v == Variant::CTI; }
constexpr bool has_mutable_sp(Variant v) { return v == Variant::A; }

enum class Comb { Foreach, Mapi, ZipWithi, Foldli };
const char* comb_name(Comb c);

enum class Instr : int {
  Cons, Head, Tail, Add, Inc, Dec, Eq, Gt, And, Or, Zero, One, Noop, Ite,
  Jz, Jnz, Return,  // assembly variants only
};
inline constexpr int kStructuredInstrCount = 14;
inline constexpr int kAssemblyInstrCount = 17;

struct TemplateShape {
  int prefix = 0;
  int body = 0;
  int suffix = 0;
  int lines() const { return prefix + body + suffix; }
};

// Register roles, used for naming, scoping and the pretty-printer.
enum class RegRole { Input, Machine, Prefix, Body, CombOut, Suffix, Ele1, Ele2, Acc, Idx };

struct RegInfo {
  RegRole role;
  int line = -1;  // owning template line (immutable registers)
  std::string name;
};

enum class SlotKind { Instr, Out, Arg1, Arg2, Cond, Branch, Loop1, Loop2, AccInit, CombChoice, CombOut };
const char* slot_kind_name(SlotKind k);

struct SlotDesc {
  SlotKind kind;
  int line = -1;             // template/program line; -1 for loop-level slots
  std::vector<int> choices;  // register ids / line targets / instr codes / comb codes
  std::string name;
};

struct ParamLayout {
  std::vector<SlotDesc> slots;
  double log10_program_space = 0.0;
  int find(SlotKind kind, int line) const;  // -1 when absent
};

// Probability vectors per slot, aligned with ParamLayout::slots.
struct ParamValues {
  std::vector<Dist> slots;
};

// One discrete choice per slot (index into SlotDesc::choices).
struct ConcreteProgram {
  std::vector<int> choice;
};

struct Step {
  enum class Kind { Asm, Prefix, Body, Suffix };
  Kind kind;
  int line;  // global line index (assembly: always -1, the ip decides)
  int iter;  // body iteration, -1 otherwise
  int t;     // 1-based timestep; +F allocation address is alloc_base + t
};

struct ModelSpec {
  Variant variant = Variant::CTI;

  // Assembly shape.
  int prog_len = 0;   // P
  int timesteps = 0;  // T (assembly; derived for structured variants)

  // Structured shape.
  TemplateShape shape;
  std::vector<Comb> combinators;  // defaulted by finalize() when empty

  int registers = 3;  // machine registers (mutable-register variants)
  int max_int = 0;    // M; 0 => derived for untyped variants, 20 for typed
  int heap_cells = 0; // H; 0 => derived
  int max_list_len = 5;
  std::vector<ValueKind> inputs;  // Int (scalar) or Ptr (list) per task input

  double entropy_weight = 0.0;  // optional exploration bonus in the loss

  // Fills derived fields (T, H, M, combinators) and validates consistency.
  // Throws std::invalid_argument on inconsistent specs.
  ModelSpec& finalize();

  // --- derived geometry ----------------------------------------------------
  bool typed() const { return is_typed(variant); }
  bool immutable() const { return is_immutable(variant); }
  bool assembly() const { return is_assembly(variant); }
  int instr_count() const { return assembly() ? kAssemblyInstrCount : kStructuredInstrCount; }
  int ptr_domain() const { return heap_cells + 1; }           // 0 = null
  int int_domain() const { return max_int; }
  int untyped_domain() const { return heap_cells + 1; }       // untyped: one domain
  int domain(ValueKind k) const;
  int slots_per_reg() const { return typed() ? 3 : 1; }
  int max_input_cells() const;
  int append_region() const;  // combinator output cells (mapi/zipWithi)
  int append_addr_offset(int iter) const { return timesteps + 1 + iter; }  // + alloc_base

  bool has_loop() const { return is_structured(variant) && shape.body > 0; }
  bool has_comb_choice() const;
  bool comb_enabled(Comb c) const;

  std::vector<Step> schedule() const;

  // Register table: machine/input/line registers followed by loop pseudo
  // registers (ele1, ele2, acc, idx) when a loop is present.
  std::vector<RegInfo> reg_table() const;
  int num_regs() const;       // real registers (excluding pseudo)
  int pseudo_base() const;    // id of first pseudo register, or num_regs()
  int observed_reg() const;   // output register read at time T
  int comb_out_reg() const;   // immutable variants; -1 otherwise

  ParamLayout layout() const;

  // Readable register ids for an argument/cond slot of `line`; also used for
  // loop-level slots (line = -1 means "at the loop header").
  std::vector<int> readable_regs(int line, bool include_pseudo) const;
};

// Presets mirroring the three experimental regimes. The task decides input
// kinds and list bounds; call finalize() after any manual adjustment.
ModelSpec preset_straightline(Variant v, std::vector<ValueKind> inputs);
ModelSpec preset_simple_loop(Variant v, std::vector<ValueKind> inputs);
ModelSpec preset_loop(Variant v, std::vector<ValueKind> inputs);
ModelSpec make_preset(const std::string& name, Variant v, std::vector<ValueKind> inputs);

// Point-mass parameters for a concrete program; inverse of discretize.
ParamValues point_mass_params(const ParamLayout& layout, const ConcreteProgram& prog);
ConcreteProgram discretize(const ParamLayout& layout, const ParamValues& values);

}  // namespace gradsynth
