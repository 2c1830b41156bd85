#include "gradsynth/enumerate.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

#include "gradsynth/discrete.hpp"
#include "gradsynth/machine.hpp"

namespace gradsynth {

namespace {

// What a reader asks of a register: one value kind, or the whole register
// ("wild": ite copies, untyped reads, fold accumulator seeds).
enum : int { kDemInt = 0, kDemPtr = 1, kDemBool = 2, kDemWild = 3 };

int demand_of(ValueKind k) { return static_cast<int>(k); }

int output_demand(OutputKind k) {
  switch (k) {
    case OutputKind::Int: return kDemInt;
    case OutputKind::Bool: return kDemBool;
    case OutputKind::List: return kDemPtr;
  }
  return kDemWild;
}

// How a register gets its value, as far as pruning is concerned.  Static
// registers hold a value of a kind known before the search starts (inputs,
// loop element/index pseudos).  Bindings are produced by a template line that
// the search itself assigns.  Everything else (accumulator, combinator
// output, mutable machine registers) is dynamic and never pruned.
enum class RegClass { Static, Dynamic, Binding };

struct RegMeta {
  RegClass cls = RegClass::Dynamic;
  ValueKind kind = ValueKind::Int;  // meaningful for Static only
};

class Enumerator {
 public:
  Enumerator(const ModelSpec& spec, const std::vector<Example>& examples,
             uint64_t budget)
      : spec_(spec), layout_(spec.layout()), examples_(examples), budget_(budget) {
    if (examples_.empty())
      throw std::invalid_argument("enumerate_programs: need at least one example");
    if (budget_ == 0)
      throw std::invalid_argument("enumerate_programs: need a positive node budget");
    prog_.choice.assign(layout_.slots.size(), 0);

    const int lines = spec_.prog_len;
    instr_slot_.assign(static_cast<size_t>(lines), -1);
    out_slot_.assign(static_cast<size_t>(lines), -1);
    arg1_slot_.assign(static_cast<size_t>(lines), -1);
    arg2_slot_.assign(static_cast<size_t>(lines), -1);
    cond_slot_.assign(static_cast<size_t>(lines), -1);
    branch_slot_.assign(static_cast<size_t>(lines), -1);
    noop_choice_.assign(static_cast<size_t>(lines), -1);
    for (int l = 0; l < lines; ++l) {
      instr_slot_[static_cast<size_t>(l)] = layout_.find(SlotKind::Instr, l);
      out_slot_[static_cast<size_t>(l)] = layout_.find(SlotKind::Out, l);
      arg1_slot_[static_cast<size_t>(l)] = layout_.find(SlotKind::Arg1, l);
      arg2_slot_[static_cast<size_t>(l)] = layout_.find(SlotKind::Arg2, l);
      cond_slot_[static_cast<size_t>(l)] = layout_.find(SlotKind::Cond, l);
      branch_slot_[static_cast<size_t>(l)] = layout_.find(SlotKind::Branch, l);
      const auto& cs = layout_.slots[static_cast<size_t>(instr_slot_[static_cast<size_t>(l)])].choices;
      const auto noop = std::find(cs.begin(), cs.end(), static_cast<int>(Instr::Noop));
      noop_choice_[static_cast<size_t>(l)] = static_cast<int>(noop - cs.begin());
    }
    if (spec_.immutable()) {
      // Try forwarding instructions first (noop: the zero source, ite: a
      // register copy): programs that just route an existing value to the
      // observed register surface long before value-constructing ones, whose
      // argument subtrees re-enumerate everything beneath them.
      instr_order_.resize(static_cast<size_t>(lines));
      for (int l = 0; l < lines; ++l) {
        const auto& cs = layout_.slots[static_cast<size_t>(instr_slot_[static_cast<size_t>(l)])].choices;
        auto& order = instr_order_[static_cast<size_t>(l)];
        for (int pass = 0; pass < 2; ++pass)
          for (int ci = 0; ci < static_cast<int>(cs.size()); ++ci) {
            const Instr in = static_cast<Instr>(cs[static_cast<size_t>(ci)]);
            const bool forwarding = in == Instr::Noop || in == Instr::Ite;
            if (forwarding == (pass == 0)) order.push_back(ci);
          }
      }
    }
    comb_slot_ = layout_.find(SlotKind::CombChoice, -1);
    loop1_slot_ = layout_.find(SlotKind::Loop1, -1);
    loop2_slot_ = layout_.find(SlotKind::Loop2, -1);
    acc0_slot_ = layout_.find(SlotKind::AccInit, -1);
    combout_slot_ = layout_.find(SlotKind::CombOut, -1);

    const auto table = spec_.reg_table();
    regs_.resize(table.size());
    line_reg_.assign(static_cast<size_t>(lines), -1);
    for (size_t id = 0; id < table.size(); ++id) {
      switch (table[id].role) {
        case RegRole::Input:
          regs_[id] = {RegClass::Static, spec_.inputs[id]};
          break;
        case RegRole::Prefix:
        case RegRole::Body:
        case RegRole::Suffix:
          regs_[id] = {RegClass::Binding, ValueKind::Int};
          line_reg_[static_cast<size_t>(table[id].line)] = static_cast<int>(id);
          break;
        case RegRole::Ele1:
        case RegRole::Ele2:
        case RegRole::Idx:
          regs_[id] = {RegClass::Static, ValueKind::Int};
          break;
        case RegRole::Machine:
        case RegRole::CombOut:
        case RegRole::Acc:
          regs_[id] = {RegClass::Dynamic, ValueKind::Int};
          break;
      }
    }
    need_.assign(regs_.size(), 0);
    std::array<int, 4> zero{0, 0, 0, 0};
    dem_.assign(regs_.size(), zero);

    if (spec_.immutable()) {
      const auto& sh = spec_.shape;
      for (int l = spec_.prog_len - 1; l >= sh.prefix + sh.body; --l) stages_.push_back(l);
      if (spec_.has_loop()) stages_.push_back(kLoopStage);
      for (int l = sh.prefix + sh.body - 1; l >= sh.prefix; --l) stages_.push_back(l);
      for (int l = sh.prefix - 1; l >= 0; --l) stages_.push_back(l);
    }
  }

  EnumerationResult run() {
    if (spec_.immutable()) {
      const int dem =
          spec_.typed() ? output_demand(examples_.front().output.kind) : kDemWild;
      push_read(spec_.observed_reg(), dem);
      // Iterative deepening on the number of non-noop lines: small programs
      // are cheap to scan and most solutions are short, while an unbounded
      // depth-first pass would sink into chains of interlocking bindings.
      for (int k = 0; k <= spec_.prog_len && !stopped(); ++k) {
        active_left_ = k;
        stage(0);
      }
    } else {
      fwd_line(0);
    }
    EnumerationResult res;
    res.program = found_;
    res.nodes = nodes_;
    res.exhausted = exhausted_ && !found_;
    return res;
  }

 private:
  static constexpr int kLoopStage = -1;

  // ---- shared machinery ----------------------------------------------------

  bool tick() {
    if (nodes_ >= budget_) {
      exhausted_ = true;
      return false;
    }
    ++nodes_;
    return true;
  }

  bool stopped() const { return done_ || exhausted_; }

  void evaluate() {
    if (!tick()) return;
    const DecodedProgram dp = decode(spec_, layout_, prog_);
    for (const Example& ex : examples_) {
      const ConcreteState s = discrete_run(spec_, dp, ex.inputs);
      if (!(read_output(spec_, s, ex.output.kind) == ex.output)) return;
    }
    found_ = prog_;
    done_ = true;
  }

  void pin(int slot) {
    if (slot >= 0) prog_.choice[static_cast<size_t>(slot)] = 0;
  }

  // ---- demand bookkeeping (immutable search) -------------------------------

  void push_read(int reg, int dem) {
    ++need_[static_cast<size_t>(reg)];
    ++dem_[static_cast<size_t>(reg)][static_cast<size_t>(dem)];
  }
  void pop_read(int reg, int dem) {
    --need_[static_cast<size_t>(reg)];
    --dem_[static_cast<size_t>(reg)][static_cast<size_t>(dem)];
  }

  // A needed binding may be produced by any instruction whose result some
  // reader consumes; noop stays available as the canonical zero source and
  // ite forwards a full register of any kind.
  bool producer_allowed(Instr in, int reg) const {
    if (!spec_.typed() || in == Instr::Noop) return true;
    const auto& d = dem_[static_cast<size_t>(reg)];
    if (d[kDemWild] > 0) return true;
    switch (instr_info(in).res) {
      case InstrInfo::Res::Int: return d[kDemInt] > 0;
      case InstrInfo::Res::Ptr: return d[kDemPtr] > 0;
      case InstrInfo::Res::Bool: return d[kDemBool] > 0;
      case InstrInfo::Res::Copy: return true;
      case InstrInfo::Res::None: return true;
    }
    return true;
  }

  // Enumerates one register-valued slot under a demand.  A typed demand keeps
  // kind-matching statics, one canonical mismatched static (every mismatched
  // read yields the same zero), and all bindings and dynamics.  `live` false
  // pins the slot: the chosen instruction never reads it.
  template <typename Next>
  void with_arg(int slot, bool live, int dem, Next&& next) {
    if (stopped()) return;
    if (!live) {
      pin(slot);
      next();
      return;
    }
    const auto& choices = layout_.slots[static_cast<size_t>(slot)].choices;
    int canon = -1;
    if (spec_.typed() && dem != kDemWild) {
      for (int ci = 0; ci < static_cast<int>(choices.size()); ++ci) {
        const RegMeta& m = regs_[static_cast<size_t>(choices[static_cast<size_t>(ci)])];
        if (m.cls == RegClass::Static && demand_of(m.kind) != dem) {
          canon = ci;
          break;
        }
      }
    }
    for (int ci = 0; ci < static_cast<int>(choices.size()); ++ci) {
      const int reg = choices[static_cast<size_t>(ci)];
      const RegMeta& m = regs_[static_cast<size_t>(reg)];
      if (spec_.typed() && dem != kDemWild && m.cls == RegClass::Static &&
          demand_of(m.kind) != dem && ci != canon)
        continue;
      if (!tick()) return;
      prog_.choice[static_cast<size_t>(slot)] = ci;
      push_read(reg, dem);
      next();
      pop_read(reg, dem);
      if (stopped()) return;
    }
  }

  // ---- immutable search: observed register backwards -----------------------

  void stage(size_t i) {
    if (stopped()) return;
    if (i == stages_.size()) {
      evaluate();
      return;
    }
    if (stages_[i] == kLoopStage)
      loop_stage(i);
    else
      line_stage(i, stages_[i]);
  }

  void line_stage(size_t i, int line) {
    const int reg = line_reg_[static_cast<size_t>(line)];
    if (need_[static_cast<size_t>(reg)] == 0) {
      // Nothing assigned so far reads this binding: pin the line to noop.
      prog_.choice[static_cast<size_t>(instr_slot_[static_cast<size_t>(line)])] =
          noop_choice_[static_cast<size_t>(line)];
      pin(arg1_slot_[static_cast<size_t>(line)]);
      pin(arg2_slot_[static_cast<size_t>(line)]);
      pin(cond_slot_[static_cast<size_t>(line)]);
      stage(i + 1);
      return;
    }
    const int islot = instr_slot_[static_cast<size_t>(line)];
    const auto& choices = layout_.slots[static_cast<size_t>(islot)].choices;
    for (const int ci : instr_order_[static_cast<size_t>(line)]) {
      const Instr in = static_cast<Instr>(choices[static_cast<size_t>(ci)]);
      const bool active = in != Instr::Noop;
      if (active && (active_left_ == 0 || !producer_allowed(in, reg))) continue;
      if (!tick()) return;
      prog_.choice[static_cast<size_t>(islot)] = ci;
      if (active) --active_left_;
      line_args(i, line, in);
      if (active) ++active_left_;
      if (stopped()) return;
    }
  }

  void line_args(size_t i, int line, Instr in) {
    const size_t l = static_cast<size_t>(line);
    const InstrInfo& info = instr_info(in);
    const bool typed = spec_.typed();
    if (in == Instr::Ite) {
      // Condition first: a condition register that statically cannot hold a
      // truth value makes the first arm dead code, leaving a plain forward
      // of the second argument.
      with_arg(cond_slot_[l], true, typed ? kDemBool : kDemWild, [&] {
        const auto& cc = layout_.slots[static_cast<size_t>(cond_slot_[l])].choices;
        const int creg = cc[static_cast<size_t>(prog_.choice[static_cast<size_t>(cond_slot_[l])])];
        const RegMeta& cm = regs_[static_cast<size_t>(creg)];
        const bool arm1_dead =
            typed && cm.cls == RegClass::Static && cm.kind != ValueKind::Bool;
        with_arg(arg1_slot_[l], !arm1_dead, kDemWild, [&] {
          with_arg(arg2_slot_[l], true, kDemWild, [&] { stage(i + 1); });
        });
      });
      return;
    }
    const int d1 = typed ? demand_of(info.arg1) : kDemWild;
    const int d2 = typed ? demand_of(info.arg2) : kDemWild;
    with_arg(arg1_slot_[l], info.arity >= 1, d1, [&] {
      with_arg(arg2_slot_[l], info.arity >= 2, d2, [&] {
        with_arg(cond_slot_[l], false, kDemWild, [&] { stage(i + 1); });
      });
    });
  }

  void loop_stage(size_t i) {
    if (need_[static_cast<size_t>(spec_.comb_out_reg())] == 0) {
      // The combinator result is never read: the whole loop is dead code.
      pin(comb_slot_);
      pin(loop1_slot_);
      pin(loop2_slot_);
      pin(acc0_slot_);
      stage(i + 1);
      return;
    }
    if (comb_slot_ < 0) {
      comb_body(i, spec_.combinators[0]);
      return;
    }
    const auto& choices = layout_.slots[static_cast<size_t>(comb_slot_)].choices;
    for (int ci = 0; ci < static_cast<int>(choices.size()); ++ci) {
      if (!tick()) return;
      prog_.choice[static_cast<size_t>(comb_slot_)] = ci;
      comb_body(i, static_cast<Comb>(choices[static_cast<size_t>(ci)]));
      if (stopped()) return;
    }
  }

  void comb_body(size_t i, Comb c) {
    if (c == Comb::Foreach) {
      // foreach in a write-once template computes nothing observable.
      pin(loop1_slot_);
      pin(loop2_slot_);
      pin(acc0_slot_);
      stage(i + 1);
      return;
    }
    // The combinator consumes the last body line: the whole register under
    // foldli, its int slot under the appending combinators.
    const int f = line_reg_[static_cast<size_t>(spec_.shape.prefix + spec_.shape.body - 1)];
    const int fdem =
        c == Comb::Foldli || !spec_.typed() ? kDemWild : kDemInt;
    push_read(f, fdem);
    const int ldem = spec_.typed() ? kDemPtr : kDemWild;
    with_arg(loop1_slot_, true, ldem, [&] {
      with_arg(loop2_slot_, c == Comb::ZipWithi, ldem, [&] {
        with_arg(acc0_slot_, c == Comb::Foldli, kDemWild, [&] { stage(i + 1); });
      });
    });
    pop_read(f, fdem);
  }

  // ---- mutable / assembly search: plain forward scan ------------------------

  template <typename Next>
  void fwd_slot(int slot, bool live, Next&& next) {
    if (stopped()) return;
    if (!live || slot < 0) {
      pin(slot);
      next();
      return;
    }
    const int count = static_cast<int>(layout_.slots[static_cast<size_t>(slot)].choices.size());
    for (int ci = 0; ci < count; ++ci) {
      if (!tick()) return;
      prog_.choice[static_cast<size_t>(slot)] = ci;
      next();
      if (stopped()) return;
    }
  }

  void fwd_line(int line) {
    if (stopped()) return;
    if (line == spec_.prog_len) {
      fwd_loop();
      return;
    }
    const size_t l = static_cast<size_t>(line);
    const int islot = instr_slot_[l];
    const auto& choices = layout_.slots[static_cast<size_t>(islot)].choices;
    for (int ci = 0; ci < static_cast<int>(choices.size()); ++ci) {
      if (!tick()) return;
      prog_.choice[static_cast<size_t>(islot)] = ci;
      const Instr in = static_cast<Instr>(choices[static_cast<size_t>(ci)]);
      const InstrInfo& info = instr_info(in);
      fwd_slot(out_slot_[l], info.writes, [&] {
        fwd_slot(arg1_slot_[l], info.arity >= 1, [&] {
          fwd_slot(arg2_slot_[l], info.arity >= 2, [&] {
            fwd_slot(cond_slot_[l], in == Instr::Ite, [&] {
              fwd_slot(branch_slot_[l], info.jumps, [&] { fwd_line(line + 1); });
            });
          });
        });
      });
      if (stopped()) return;
    }
  }

  void fwd_loop() {
    if (!spec_.has_loop()) {
      evaluate();
      return;
    }
    const auto body = [&](Comb c) {
      // Under a mutable variant even foreach is observable (the body writes
      // registers on every live iteration), so loop1 always stays live here.
      fwd_slot(loop1_slot_, true, [&] {
        fwd_slot(loop2_slot_, c == Comb::ZipWithi, [&] {
          fwd_slot(acc0_slot_, c == Comb::Foldli, [&] {
            fwd_slot(combout_slot_, true, [&] { evaluate(); });
          });
        });
      });
    };
    if (comb_slot_ < 0) {
      body(spec_.combinators[0]);
      return;
    }
    const auto& choices = layout_.slots[static_cast<size_t>(comb_slot_)].choices;
    for (int ci = 0; ci < static_cast<int>(choices.size()); ++ci) {
      if (!tick()) return;
      prog_.choice[static_cast<size_t>(comb_slot_)] = ci;
      body(static_cast<Comb>(choices[static_cast<size_t>(ci)]));
      if (stopped()) return;
    }
  }

  const ModelSpec& spec_;
  const ParamLayout layout_;
  const std::vector<Example>& examples_;
  const uint64_t budget_;

  uint64_t nodes_ = 0;
  bool exhausted_ = false;
  bool done_ = false;
  int active_left_ = 0;
  ConcreteProgram prog_;
  std::optional<ConcreteProgram> found_;

  std::vector<int> instr_slot_, out_slot_, arg1_slot_, arg2_slot_, cond_slot_, branch_slot_;
  std::vector<int> noop_choice_;
  std::vector<std::vector<int>> instr_order_;
  int comb_slot_ = -1, loop1_slot_ = -1, loop2_slot_ = -1, acc0_slot_ = -1, combout_slot_ = -1;

  std::vector<RegMeta> regs_;
  std::vector<int> line_reg_;
  std::vector<int> need_;
  std::vector<std::array<int, 4>> dem_;
  std::vector<int> stages_;
};

}  // namespace

EnumerationResult enumerate_programs(const ModelSpec& spec,
                                     const std::vector<Example>& examples,
                                     uint64_t node_budget) {
  Enumerator e(spec, examples, node_budget);
  return e.run();
}

}  // namespace gradsynth
