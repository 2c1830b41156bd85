#include "gradsynth/printer.hpp"

#include <sstream>
#include <stdexcept>

#include "gradsynth/machine.hpp"

namespace gradsynth {

namespace {

std::vector<std::string> default_input_names(const std::vector<ValueKind>& inputs) {
  int lists = 0, scalars = 0;
  for (ValueKind k : inputs) ++(k == ValueKind::Ptr ? lists : scalars);
  std::vector<std::string> names;
  int li = 0, si = 0;
  for (ValueKind k : inputs) {
    if (k == ValueKind::Ptr) {
      ++li;
      names.push_back(lists > 1 ? "l" + std::to_string(li) : "l");
    } else {
      ++si;
      names.push_back(scalars > 1 ? "k" + std::to_string(si) : "k");
    }
  }
  return names;
}

struct Liveness {
  std::vector<bool> line;   // per template line
  bool loop = true;         // the loop header (and its closing line)
  std::vector<bool> input;  // per input register
};

class Printer {
 public:
  Printer(const ModelSpec& spec, const DecodedProgram& dp,
          const std::vector<std::string>& input_names)
      : spec_(spec), dp_(dp), in_names_(input_names) {
    if (in_names_.empty()) in_names_ = default_input_names(spec.inputs);
    if (in_names_.size() != spec.inputs.size())
      throw std::invalid_argument("print_program: input_names must name every input");
    const std::vector<RegInfo> table = spec.reg_table();
    line_reg_.assign(static_cast<size_t>(spec.shape.lines()), -1);
    for (size_t id = 0; id < table.size(); ++id) {
      const RegInfo& ri = table[id];
      names_.push_back(ri.name);
      if (ri.role == RegRole::Prefix || ri.role == RegRole::Body || ri.role == RegRole::Suffix)
        line_reg_[static_cast<size_t>(ri.line)] = static_cast<int>(id);
      if (ri.role == RegRole::Acc) acc_id_ = static_cast<int>(id);
      if (ri.role == RegRole::Ele1 && dp.comb != Comb::ZipWithi) names_.back() = "ele";
    }
  }

  std::string render() {
    const Liveness lv = analyze();
    if (spec_.assembly())
      emit_assembly();
    else if (spec_.immutable())
      emit_immutable(lv);
    else
      emit_mutable(lv);
    put(0, false, "return " + name(spec_.observed_reg()));
    return out_.str();
  }

 private:
  std::string name(int r) const {
    if (r < 0 || r >= static_cast<int>(names_.size())) return "?";
    return names_[static_cast<size_t>(r)];
  }

  // The right-hand side of a non-noop, non-jump instruction.
  std::string rhs(const DecodedLine& L) const {
    const std::string a = name(L.arg1), b = name(L.arg2);
    switch (L.instr) {
      case Instr::Cons: return "cons " + a + " " + b;
      case Instr::Head: return "head " + a;
      case Instr::Tail: return "tail " + a;
      case Instr::Add: return a + " + " + b;
      case Instr::Inc: return a + " + 1";
      case Instr::Dec: return a + " - 1";
      case Instr::Eq: return "(" + a + " = " + b + ")";
      case Instr::Gt: return a + " > " + b;
      case Instr::And: return a + " && " + b;
      case Instr::Or: return a + " || " + b;
      case Instr::Zero: return "0";
      case Instr::One: return "1";
      case Instr::Ite: return "if " + name(L.cond) + " then " + a + " else " + b;
      default: return "";
    }
  }

  void put(int indent, bool dead, const std::string& text) {
    for (int i = 0; i < indent; ++i) out_ << ' ';
    if (dead) out_ << "-- ";
    out_ << text << '\n';
  }

  // --- liveness --------------------------------------------------------------

  void mark_reads(const DecodedLine& L, std::vector<char>& need, bool* acc_read) const {
    const auto add = [&](int r) {
      if (acc_read && r >= 0 && r == acc_id_) *acc_read = true;
      if (r >= 0 && r < static_cast<int>(need.size())) need[static_cast<size_t>(r)] = 1;
    };
    const InstrInfo& info = instr_info(L.instr);
    if (L.instr == Instr::Ite) add(L.cond);
    if (info.arity >= 1) add(L.arg1);
    if (info.arity >= 2) add(L.arg2);
  }

  // Marks everything a path from the observed register can read.  Straight
  // segments are walked backwards (mutable segments kill overwritten
  // registers: every line of an executed loop iteration runs, so the kill is
  // exact there too); the loop body iterates to a fixed point, and the
  // zero-iteration path survives as the union with the needs after the loop.
  Liveness analyze() const {
    Liveness lv;
    lv.input.assign(spec_.inputs.size(), true);
    if (spec_.assembly()) {
      // Which assembly lines run depends on the data; print everything.
      lv.line.assign(static_cast<size_t>(spec_.prog_len), true);
      return lv;
    }
    const int p = spec_.shape.prefix, b = spec_.shape.body;
    const int lines = spec_.shape.lines();
    const int nr = spec_.num_regs();
    lv.line.assign(static_cast<size_t>(lines), false);
    std::vector<char> needed(static_cast<size_t>(nr), 0);
    needed[static_cast<size_t>(spec_.observed_reg())] = 1;

    const auto scan = [&](int lo, int hi, std::vector<char>& need) {
      for (int l = hi - 1; l >= lo; --l) {
        const DecodedLine& L = dp_.lines[static_cast<size_t>(l)];
        bool live;
        if (spec_.immutable()) {
          live = need[static_cast<size_t>(line_reg_[static_cast<size_t>(l)])] != 0;
        } else {
          const InstrInfo& info = instr_info(L.instr);
          live = info.writes && need[static_cast<size_t>(L.out)] != 0;
          if (live) need[static_cast<size_t>(L.out)] = 0;
        }
        lv.line[static_cast<size_t>(l)] = live;
        if (live) mark_reads(L, need, nullptr);
      }
    };

    scan(p + b, lines, needed);  // suffix

    if (spec_.has_loop()) {
      bool result_used = false;
      if (spec_.immutable()) {
        result_used = needed[static_cast<size_t>(spec_.comb_out_reg())] != 0;
      } else if (dp_.comb_out >= 0) {
        result_used = needed[static_cast<size_t>(dp_.comb_out)] != 0;
        needed[static_cast<size_t>(dp_.comb_out)] = 0;  // overwritten after the loop
      }
      if (spec_.immutable()) {
        if (result_used) {
          needed[static_cast<size_t>(line_reg_[static_cast<size_t>(p + b - 1)])] = 1;
          scan(p, p + b, needed);  // write-once: one backward pass is exact
        }
        lv.loop = result_used;
      } else {
        // Fixed point over the body; `start` accumulates the needs at the top
        // of an iteration (reads may wrap around to the previous iteration).
        std::vector<char> start(static_cast<size_t>(nr), 0);
        bool acc_read = false;
        for (bool changed = true; changed;) {
          changed = false;
          std::vector<char> cur(static_cast<size_t>(nr));
          for (int r = 0; r < nr; ++r) cur[static_cast<size_t>(r)] = needed[static_cast<size_t>(r)] | start[static_cast<size_t>(r)];
          for (int l = p + b - 1; l >= p; --l) {
            const DecodedLine& L = dp_.lines[static_cast<size_t>(l)];
            const InstrInfo& info = instr_info(L.instr);
            const bool is_result = l == p + b - 1 &&
                                   (result_used || (dp_.comb == Comb::Foldli && acc_read));
            const bool live = is_result || (info.writes && cur[static_cast<size_t>(L.out)] != 0);
            if (live && !lv.line[static_cast<size_t>(l)]) {
              lv.line[static_cast<size_t>(l)] = true;
              changed = true;
            }
            if (live) {
              if (info.writes) cur[static_cast<size_t>(L.out)] = 0;
              const bool before = acc_read;
              mark_reads(L, cur, &acc_read);
              if (acc_read != before) changed = true;
            }
          }
          for (int r = 0; r < nr; ++r)
            if (cur[static_cast<size_t>(r)] && !start[static_cast<size_t>(r)]) {
              start[static_cast<size_t>(r)] = 1;
              changed = true;
            }
        }
        bool any_body = false;
        for (int l = p; l < p + b; ++l) any_body |= lv.line[static_cast<size_t>(l)];
        lv.loop = result_used || any_body;
        for (int r = 0; r < nr; ++r) needed[static_cast<size_t>(r)] |= start[static_cast<size_t>(r)];
      }
      if (lv.loop) {
        needed[static_cast<size_t>(dp_.loop1)] = 1;
        if (dp_.comb == Comb::ZipWithi) needed[static_cast<size_t>(dp_.loop2)] = 1;
        // An empty traversal returns the initial accumulator unchanged.
        if (dp_.comb == Comb::Foldli && dp_.acc_init >= 0)
          needed[static_cast<size_t>(dp_.acc_init)] = 1;
      }
    }

    scan(0, p, needed);  // prefix
    for (size_t i = 0; i < lv.input.size(); ++i) lv.input[i] = needed[i] != 0;
    return lv;
  }

  // --- emitters --------------------------------------------------------------

  std::string comb_header() const {
    const std::string l1 = name(dp_.loop1);
    switch (dp_.comb) {
      case Comb::Foldli:
        return "foldli " + l1 + " " + name(dp_.acc_init) + " (\\ele acc idx ->";
      case Comb::Mapi:
        return "mapi " + l1 + " (\\ele idx ->";
      case Comb::ZipWithi:
        return "zipWithi " + l1 + " " + name(dp_.loop2) + " (\\ele1 ele2 idx ->";
      case Comb::Foreach:
        return "foreach " + l1 + " (\\ele idx ->";
    }
    return "";
  }

  void emit_immutable(const Liveness& lv) {
    const int p = spec_.shape.prefix, b = spec_.shape.body;
    for (size_t i = 0; i < in_names_.size(); ++i)
      put(0, !lv.input[i], "let " + name(static_cast<int>(i)) + " = " + in_names_[i] + " in");
    const auto let_line = [&](int l, int indent) {
      const DecodedLine& L = dp_.lines[static_cast<size_t>(l)];
      const bool dead = !lv.line[static_cast<size_t>(l)];
      const std::string value = L.instr == Instr::Noop ? "0" : rhs(L);
      put(indent, dead, "let " + name(line_reg_[static_cast<size_t>(l)]) + " = " + value + " in");
    };
    for (int l = 0; l < p; ++l) let_line(l, 0);
    if (spec_.has_loop()) {
      put(0, !lv.loop, "let " + name(spec_.comb_out_reg()) + " = " + comb_header());
      for (int l = p; l < p + b; ++l) let_line(l, 4);
      put(4, !lv.loop, name(line_reg_[static_cast<size_t>(p + b - 1)]) + ") in");
    }
    for (int l = p + b; l < spec_.shape.lines(); ++l) let_line(l, 0);
  }

  void emit_mutable(const Liveness& lv) {
    const int p = spec_.shape.prefix, b = spec_.shape.body;
    for (size_t i = 0; i < in_names_.size(); ++i)
      put(0, !lv.input[i], name(static_cast<int>(i)) + " <- " + in_names_[i]);
    const auto assign_line = [&](int l, int indent) {
      const DecodedLine& L = dp_.lines[static_cast<size_t>(l)];
      const bool dead = !lv.line[static_cast<size_t>(l)];
      if (L.instr == Instr::Noop)
        put(indent, dead, "noop");
      else
        put(indent, dead, name(L.out) + " <- " + rhs(L));
    };
    for (int l = 0; l < p; ++l) assign_line(l, 0);
    if (spec_.has_loop()) {
      if (dp_.comb_out < 0) {  // foreach template: a plain loop, no result
        put(0, !lv.loop, "for ele in " + name(dp_.loop1) + ":");
        for (int l = p; l < p + b; ++l) assign_line(l, 4);
      } else {
        put(0, !lv.loop, name(dp_.comb_out) + " <- " + comb_header());
        for (int l = p; l < p + b; ++l) assign_line(l, 4);
        const DecodedLine& last = dp_.lines[static_cast<size_t>(p + b - 1)];
        put(4, !lv.loop, (last.instr == Instr::Noop ? std::string("0") : name(last.out)) + ")");
      }
    }
    for (int l = p + b; l < spec_.shape.lines(); ++l) assign_line(l, 0);
  }

  void emit_assembly() {
    for (size_t i = 0; i < in_names_.size(); ++i)
      put(0, false, name(static_cast<int>(i)) + " <- " + in_names_[i]);
    const int width = spec_.prog_len > 10 ? 2 : 1;
    for (int l = 0; l < spec_.prog_len; ++l) {
      const DecodedLine& L = dp_.lines[static_cast<size_t>(l)];
      std::string num = std::to_string(l);
      while (static_cast<int>(num.size()) < width) num.insert(num.begin(), ' ');
      std::string body;
      switch (L.instr) {
        case Instr::Noop: body = "noop"; break;
        case Instr::Return: body = "return"; break;
        case Instr::Jz: body = "jz " + name(L.arg1) + " -> " + std::to_string(L.branch); break;
        case Instr::Jnz: body = "jnz " + name(L.arg1) + " -> " + std::to_string(L.branch); break;
        case Instr::Ite:
          // Assembly if-then-else is a conditional move.
          body = "if " + name(L.arg1) + " then " + name(L.out) + " <- " + name(L.arg2);
          break;
        default: body = name(L.out) + " <- " + rhs(L); break;
      }
      put(0, false, num + ": " + body);
    }
  }

  const ModelSpec& spec_;
  const DecodedProgram& dp_;
  std::vector<std::string> in_names_;
  std::vector<std::string> names_;
  std::vector<int> line_reg_;
  int acc_id_ = -1;
  std::ostringstream out_;
};

}  // namespace

std::string print_program(const ModelSpec& spec, const DecodedProgram& prog,
                          const std::vector<std::string>& input_names) {
  return Printer(spec, prog, input_names).render();
}

std::string print_program(const ModelSpec& spec, const ParamLayout& layout,
                          const ConcreteProgram& prog,
                          const std::vector<std::string>& input_names) {
  return print_program(spec, decode(spec, layout, prog), input_names);
}

}  // namespace gradsynth
