#include "gradsynth/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gradsynth {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::A: return "A";
    case Variant::AF: return "A+F";
    case Variant::AL: return "A+L";
    case Variant::C: return "C";
    case Variant::CI: return "C+I";
    case Variant::CT: return "C+T";
    case Variant::CTI: return "C+T+I";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  for (Variant v : {Variant::A, Variant::AF, Variant::AL, Variant::C, Variant::CI, Variant::CT,
                    Variant::CTI})
    if (name == variant_name(v)) return v;
  throw std::invalid_argument("unknown model variant: " + name);
}

const char* comb_name(Comb c) {
  switch (c) {
    case Comb::Foreach: return "foreach";
    case Comb::Mapi: return "mapi";
    case Comb::ZipWithi: return "zipWithi";
    case Comb::Foldli: return "foldli";
  }
  return "?";
}

const char* slot_kind_name(SlotKind k) {
  switch (k) {
    case SlotKind::Instr: return "instr";
    case SlotKind::Out: return "out";
    case SlotKind::Arg1: return "arg1";
    case SlotKind::Arg2: return "arg2";
    case SlotKind::Cond: return "cond";
    case SlotKind::Branch: return "branch";
    case SlotKind::Loop1: return "list1";
    case SlotKind::Loop2: return "list2";
    case SlotKind::AccInit: return "acc0";
    case SlotKind::CombChoice: return "comb";
    case SlotKind::CombOut: return "combout";
  }
  return "?";
}

int ParamLayout::find(SlotKind kind, int line) const {
  for (size_t i = 0; i < slots.size(); ++i)
    if (slots[i].kind == kind && slots[i].line == line) return static_cast<int>(i);
  return -1;
}

std::string to_string(const TaskValue& v) {
  if (std::holds_alternative<int>(v)) return std::to_string(std::get<int>(v));
  std::ostringstream os;
  os << '[';
  const auto& l = std::get<std::vector<int>>(v);
  for (size_t i = 0; i < l.size(); ++i) os << (i ? "," : "") << l[i];
  os << ']';
  return os.str();
}

std::string TaskOutput::to_string() const {
  switch (kind) {
    case OutputKind::Int: return std::to_string(scalar);
    case OutputKind::Bool: return scalar ? "true" : "false";
    case OutputKind::List: return gradsynth::to_string(TaskValue(list));
  }
  return "?";
}

int ModelSpec::domain(ValueKind k) const {
  if (!typed()) return untyped_domain();
  switch (k) {
    case ValueKind::Int: return max_int;
    case ValueKind::Ptr: return ptr_domain();
    case ValueKind::Bool: return 2;
  }
  return 0;
}

int ModelSpec::max_input_cells() const {
  int cells = 0;
  for (ValueKind k : inputs)
    if (k == ValueKind::Ptr) cells += max_list_len;
  return cells;
}

int ModelSpec::append_region() const {
  if (!has_loop()) return 0;
  if (comb_enabled(Comb::Mapi) || comb_enabled(Comb::ZipWithi)) return max_list_len;
  return 0;
}

bool ModelSpec::has_comb_choice() const {
  return has_loop() && combinators.size() > 1;
}

bool ModelSpec::comb_enabled(Comb c) const {
  return has_loop() && std::find(combinators.begin(), combinators.end(), c) != combinators.end();
}

ModelSpec& ModelSpec::finalize() {
  if (max_list_len < 0) throw std::invalid_argument("ModelSpec: negative max_list_len");

  if (assembly()) {
    if (!combinators.empty())
      throw std::invalid_argument("ModelSpec: combinators on an assembly variant");
    if (shape.lines() != 0)
      throw std::invalid_argument("ModelSpec: loop template on an assembly variant");
    if (prog_len < 1 || timesteps < 1)
      throw std::invalid_argument("ModelSpec: assembly variants need prog_len and timesteps");
    if (registers < 1) throw std::invalid_argument("ModelSpec: need at least one register");
  } else {
    if (shape.prefix < 0 || shape.body < 0 || shape.suffix < 0 || shape.lines() < 1)
      throw std::invalid_argument("ModelSpec: structured variants need template lines");
    if (shape.body > 0 && max_list_len < 1)
      throw std::invalid_argument("ModelSpec: loop template needs max_list_len >= 1");
    timesteps = shape.prefix + max_list_len * shape.body + shape.suffix;
    prog_len = shape.lines();
    if (combinators.empty())
      combinators = variant == Variant::AL ? std::vector<Comb>{Comb::Foreach}
                                           : std::vector<Comb>{Comb::Mapi, Comb::ZipWithi, Comb::Foldli};
    const bool has_foreach = std::find(combinators.begin(), combinators.end(), Comb::Foreach) !=
                             combinators.end();
    if (variant == Variant::AL && (combinators.size() != 1 || !has_foreach))
      throw std::invalid_argument("ModelSpec: the foreach variant supports only foreach");
    if (variant != Variant::AL && has_foreach)
      throw std::invalid_argument("ModelSpec: foreach is exclusive to the foreach variant");
    if (!immutable() && registers < 1)
      throw std::invalid_argument("ModelSpec: need at least one register");
  }

  if (static_cast<int>(inputs.size()) > num_regs())
    throw std::invalid_argument("ModelSpec: more inputs than registers");

  if (typed()) {
    if (max_int == 0) max_int = 20;
    if (heap_cells == 0) heap_cells = max_input_cells() + timesteps + append_region();
  } else if (variant == Variant::A) {
    // One shared domain: pointer values must fit, so H = M - 1.
    if (max_int == 0) max_int = 20;
    if (heap_cells == 0) heap_cells = max_int - 1;
  } else {
    if (heap_cells == 0) heap_cells = max_input_cells() + timesteps + append_region();
    if (max_int == 0) max_int = heap_cells;
  }

  if (max_int < 2) throw std::invalid_argument("ModelSpec: max_int must be at least 2");
  if (has_loop() && max_list_len > max_int)
    throw std::invalid_argument("ModelSpec: loop index must fit the int domain");
  if (heap_cells < 1) throw std::invalid_argument("ModelSpec: need at least one heap cell");
  if (!typed() && max_int > heap_cells + 1)
    throw std::invalid_argument("ModelSpec: untyped domain must cover heap addresses (M <= H+1)");
  if (variant != Variant::A && heap_cells < max_input_cells() + timesteps + append_region())
    throw std::invalid_argument("ModelSpec: heap too small for fixed allocation");
  return *this;
}

std::vector<Step> ModelSpec::schedule() const {
  std::vector<Step> plan;
  int t = 1;
  if (assembly()) {
    for (int i = 0; i < timesteps; ++i) plan.push_back({Step::Kind::Asm, -1, -1, t++});
    return plan;
  }
  for (int l = 0; l < shape.prefix; ++l) plan.push_back({Step::Kind::Prefix, l, -1, t++});
  for (int j = 0; j < (shape.body > 0 ? max_list_len : 0); ++j)
    for (int l = 0; l < shape.body; ++l)
      plan.push_back({Step::Kind::Body, shape.prefix + l, j, t++});
  for (int l = 0; l < shape.suffix; ++l)
    plan.push_back({Step::Kind::Suffix, shape.prefix + shape.body + l, -1, t++});
  return plan;
}

int ModelSpec::num_regs() const {
  if (!immutable()) return registers;
  const int ni = static_cast<int>(inputs.size());
  return ni + shape.prefix + shape.body + (has_loop() ? 1 : 0) + shape.suffix;
}

int ModelSpec::pseudo_base() const { return num_regs(); }

int ModelSpec::comb_out_reg() const {
  if (!immutable() || !has_loop()) return -1;
  return static_cast<int>(inputs.size()) + shape.prefix + shape.body;
}

int ModelSpec::observed_reg() const {
  // Mutable: last machine register. Immutable: last bound name, which the table
  // orders as inputs, prefix, body, combinator output, suffix.
  return num_regs() - 1;
}

std::vector<RegInfo> ModelSpec::reg_table() const {
  std::vector<RegInfo> table;
  const int ni = static_cast<int>(inputs.size());
  if (!immutable()) {
    for (int r = 0; r < registers; ++r)
      table.push_back({r < ni ? RegRole::Input : RegRole::Machine, -1, "r" + std::to_string(r)});
  } else {
    int rn = 0;
    for (int r = 0; r < ni; ++r) table.push_back({RegRole::Input, -1, "r" + std::to_string(rn++)});
    for (int l = 0; l < shape.prefix; ++l)
      table.push_back({RegRole::Prefix, l, "r" + std::to_string(rn++)});
    for (int l = 0; l < shape.body; ++l)
      table.push_back({RegRole::Body, shape.prefix + l, "c" + std::to_string(l)});
    if (has_loop()) table.push_back({RegRole::CombOut, -1, "r" + std::to_string(rn++)});
    for (int l = 0; l < shape.suffix; ++l)
      table.push_back({RegRole::Suffix, shape.prefix + shape.body + l, "r" + std::to_string(rn++)});
  }
  if (has_loop()) {
    const bool foreach_only = variant == Variant::AL;
    table.push_back({RegRole::Ele1, -1, foreach_only ? "ele" : "ele1"});
    if (!foreach_only) {
      table.push_back({RegRole::Ele2, -1, "ele2"});
      table.push_back({RegRole::Acc, -1, "acc"});
      table.push_back({RegRole::Idx, -1, "idx"});
    }
  }
  return table;
}

std::vector<int> ModelSpec::readable_regs(int line, bool include_pseudo) const {
  std::vector<int> ids;
  const int ni = static_cast<int>(inputs.size());
  if (!immutable()) {
    for (int r = 0; r < registers; ++r) ids.push_back(r);
  } else if (line < 0) {
    // Loop header: inputs and prefix outputs.
    for (int r = 0; r < ni + shape.prefix; ++r) ids.push_back(r);
  } else if (line < shape.prefix) {
    for (int r = 0; r < ni + line; ++r) ids.push_back(r);
  } else if (line < shape.prefix + shape.body) {
    const int body_index = line - shape.prefix;
    for (int r = 0; r < ni + shape.prefix; ++r) ids.push_back(r);
    for (int b = 0; b < body_index; ++b) ids.push_back(ni + shape.prefix + b);
  } else {
    const int suffix_index = line - shape.prefix - shape.body;
    for (int r = 0; r < ni + shape.prefix; ++r) ids.push_back(r);
    if (has_loop()) ids.push_back(comb_out_reg());
    for (int s = 0; s < suffix_index; ++s)
      ids.push_back(ni + shape.prefix + shape.body + (has_loop() ? 1 : 0) + s);
  }
  if (include_pseudo && has_loop()) {
    const int base = pseudo_base();
    const int pseudo_count = variant == Variant::AL ? 1 : 4;
    for (int k = 0; k < pseudo_count; ++k) ids.push_back(base + k);
  }
  return ids;
}

ParamLayout ModelSpec::layout() const {
  ParamLayout lay;
  const auto add = [&](SlotKind kind, int line, std::vector<int> choices, std::string name) {
    if (choices.empty()) throw std::invalid_argument("ModelSpec: empty slot domain for " + name);
    lay.slots.push_back({kind, line, std::move(choices), std::move(name)});
  };
  std::vector<int> instr_codes;
  for (int i = 0; i < instr_count(); ++i) instr_codes.push_back(i);

  const auto line_tag = [&](int l) { return "L" + std::to_string(l) + "."; };
  for (int l = 0; l < prog_len; ++l) {
    const bool body_line = is_structured(variant) && l >= shape.prefix &&
                           l < shape.prefix + shape.body;
    const auto args = readable_regs(assembly() ? -1 : l, body_line);
    add(SlotKind::Instr, l, instr_codes, line_tag(l) + "instr");
    if (!immutable()) {
      std::vector<int> outs;
      for (int r = 0; r < registers; ++r) outs.push_back(r);
      add(SlotKind::Out, l, outs, line_tag(l) + "out");
    }
    add(SlotKind::Arg1, l, args, line_tag(l) + "arg1");
    add(SlotKind::Arg2, l, args, line_tag(l) + "arg2");
    if (is_structured(variant)) add(SlotKind::Cond, l, args, line_tag(l) + "cond");
    if (assembly()) {
      std::vector<int> targets;
      for (int p = 0; p < prog_len; ++p) targets.push_back(p);
      add(SlotKind::Branch, l, targets, line_tag(l) + "branch");
    }
  }
  if (has_loop()) {
    const auto header = readable_regs(-1, false);
    add(SlotKind::Loop1, -1, header, "loop.list1");
    if (comb_enabled(Comb::ZipWithi)) add(SlotKind::Loop2, -1, header, "loop.list2");
    if (comb_enabled(Comb::Foldli)) add(SlotKind::AccInit, -1, header, "loop.acc0");
    if (has_comb_choice()) {
      std::vector<int> combs;
      for (Comb c : combinators) combs.push_back(static_cast<int>(c));
      add(SlotKind::CombChoice, -1, combs, "loop.comb");
    }
    if (!immutable() && variant != Variant::AL) {
      std::vector<int> outs;
      for (int r = 0; r < registers; ++r) outs.push_back(r);
      add(SlotKind::CombOut, -1, outs, "loop.out");
    }
  }
  lay.log10_program_space = 0.0;
  for (const SlotDesc& s : lay.slots)
    lay.log10_program_space += std::log10(static_cast<double>(s.choices.size()));
  return lay;
}

ModelSpec preset_straightline(Variant v, std::vector<ValueKind> inputs) {
  ModelSpec spec;
  spec.variant = v;
  spec.inputs = std::move(inputs);
  spec.registers = 3;
  spec.max_list_len = 11;
  if (is_assembly(v)) {
    spec.prog_len = 11;
    spec.timesteps = 11;
  } else {
    spec.shape = {0, 0, 11};
  }
  if (v == Variant::A || is_typed(v)) spec.max_int = 20;
  return spec.finalize();
}

ModelSpec preset_simple_loop(Variant v, std::vector<ValueKind> inputs) {
  ModelSpec spec;
  spec.variant = v;
  spec.inputs = std::move(inputs);
  spec.registers = 4;
  spec.max_list_len = 5;
  if (is_assembly(v)) {
    spec.prog_len = 6;
    spec.timesteps = 2 + 3 * spec.max_list_len;  // room for a jump loop over the list
  } else {
    spec.shape = {0, 2, 0};
  }
  if (v == Variant::A || is_typed(v)) spec.max_int = 20;
  return spec.finalize();
}

ModelSpec preset_loop(Variant v, std::vector<ValueKind> inputs) {
  ModelSpec spec;
  spec.variant = v;
  spec.inputs = std::move(inputs);
  spec.registers = 4;
  spec.max_list_len = 5;
  if (is_assembly(v)) {
    spec.prog_len = 6;
    spec.timesteps = 3 + 3 * spec.max_list_len;
  } else {
    spec.shape = {1, 3, 2};
  }
  if (v == Variant::A || is_typed(v)) spec.max_int = 32;
  return spec.finalize();
}

ModelSpec make_preset(const std::string& name, Variant v, std::vector<ValueKind> inputs) {
  if (name == "straightline") return preset_straightline(v, std::move(inputs));
  if (name == "simple-loop") return preset_simple_loop(v, std::move(inputs));
  if (name == "loop") return preset_loop(v, std::move(inputs));
  throw std::invalid_argument("unknown preset: " + name);
}

ParamValues point_mass_params(const ParamLayout& layout, const ConcreteProgram& prog) {
  if (prog.choice.size() != layout.slots.size())
    throw std::invalid_argument("point_mass_params: slot count mismatch");
  ParamValues pv;
  for (size_t i = 0; i < layout.slots.size(); ++i) {
    const int n = static_cast<int>(layout.slots[i].choices.size());
    const int c = prog.choice[i];
    if (c < 0 || c >= n) throw std::invalid_argument("point_mass_params: choice out of range");
    pv.slots.push_back(Dist::point(n, c));
  }
  return pv;
}

ConcreteProgram discretize(const ParamLayout& layout, const ParamValues& values) {
  if (values.slots.size() != layout.slots.size())
    throw std::invalid_argument("discretize: slot count mismatch");
  ConcreteProgram prog;
  for (const Dist& d : values.slots) prog.choice.push_back(d.argmax());
  return prog;
}

}  // namespace gradsynth
