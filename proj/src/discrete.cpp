#include "gradsynth/discrete.hpp"

#include <algorithm>
#include <stdexcept>

namespace gradsynth {

namespace {

constexpr ValueKind kInt = ValueKind::Int;
constexpr ValueKind kPtr = ValueKind::Ptr;

struct PseudoRegs {
  ConcreteReg ele1, ele2, acc, idx;
};

class Discrete {
 public:
  Discrete(const ModelSpec& spec, const DecodedProgram& prog) : spec_(spec), prog_(prog) {
    if (spec_.immutable()) {
      // Cache the line -> register map; the enumerative baseline runs this
      // interpreter millions of times and reg_table() allocates.
      line_regs_.assign(static_cast<size_t>(spec_.prog_len), -1);
      const auto table = spec_.reg_table();
      for (size_t id = 0; id < table.size(); ++id)
        if (table[id].role == RegRole::Prefix || table[id].role == RegRole::Body ||
            table[id].role == RegRole::Suffix)
          line_regs_[static_cast<size_t>(table[id].line)] = static_cast<int>(id);
    }
  }

  ConcreteState run(const std::vector<TaskValue>& inputs) {
    init(inputs);
    if (spec_.assembly())
      run_assembly();
    else
      run_structured();
    return s_;
  }

 private:
  void init(const std::vector<TaskValue>& inputs) {
    if (inputs.size() != spec_.inputs.size())
      throw std::invalid_argument("discrete_run: input arity mismatch");
    s_ = ConcreteState{};
    s_.heap.assign(static_cast<size_t>(spec_.heap_cells), ConcreteCell{});
    s_.regs.assign(static_cast<size_t>(spec_.num_regs()), ConcreteReg{});
    const int M = spec_.max_int;
    int addr = 1;
    for (size_t i = 0; i < inputs.size(); ++i) {
      ConcreteReg r;
      if (spec_.inputs[i] == kInt) {
        const int v = std::get<int>(inputs[i]);
        if (v < 0 || v >= M) throw std::invalid_argument("discrete_run: scalar out of range");
        r.i = v;
      } else {
        const auto& list = std::get<std::vector<int>>(inputs[i]);
        if (static_cast<int>(list.size()) > spec_.max_list_len)
          throw std::invalid_argument("discrete_run: list longer than max_list_len");
        const int head = list.empty() ? 0 : addr;
        for (size_t k = 0; k < list.size(); ++k) {
          if (list[k] < 0 || list[k] >= M)
            throw std::invalid_argument("discrete_run: element out of range");
          s_.heap[static_cast<size_t>(addr - 1)] =
              ConcreteCell{list[k], k + 1 < list.size() ? addr + 1 : 0};
          ++addr;
        }
        set(r, kPtr, head);
      }
      s_.regs[i] = r;
    }
    s_.alloc_base = addr - 1;
    if (s_.alloc_base > spec_.heap_cells)
      throw std::invalid_argument("discrete_run: inputs exceed the heap");
    s_.ip = 0;
    s_.sp = std::min(s_.alloc_base + 1, spec_.heap_cells + 1);
  }

  int get(const ConcreteReg& r, ValueKind k) const {
    if (!spec_.typed()) return r.i;
    switch (k) {
      case ValueKind::Int: return r.i;
      case ValueKind::Ptr: return r.p;
      case ValueKind::Bool: return r.b;
    }
    return 0;
  }
  void set(ConcreteReg& r, ValueKind k, int v) {
    if (!spec_.typed()) {
      r.i = v;
      return;
    }
    switch (k) {
      case ValueKind::Int: r.i = v; break;
      case ValueKind::Ptr: r.p = v; break;
      case ValueKind::Bool: r.b = v; break;
    }
  }
  ConcreteReg make(ValueKind k, int v) {
    ConcreteReg r;
    set(r, k, v);
    return r;
  }

  ConcreteReg read(int id, const PseudoRegs* pseudo) const {
    const int nr = spec_.num_regs();
    if (id < nr) return s_.regs[static_cast<size_t>(id)];
    if (pseudo == nullptr) throw std::logic_error("pseudo register read outside a loop body");
    const int k = id - nr;
    if (spec_.variant == Variant::AL) {
      if (k == 0) return pseudo->ele1;
    } else {
      switch (k) {
        case 0: return pseudo->ele1;
        case 1: return pseudo->ele2;
        case 2: return pseudo->acc;
        case 3: return pseudo->idx;
        default: break;
      }
    }
    throw std::logic_error("register id out of range");
  }

  int heap_data(int ptr) const { return ptr == 0 ? 0 : s_.heap[static_cast<size_t>(ptr - 1)].data; }
  int heap_next(int ptr) const { return ptr == 0 ? 0 : s_.heap[static_cast<size_t>(ptr - 1)].next; }

  int arith(Instr in, int a, int b) const {
    const int M = spec_.max_int;
    switch (in) {
      case Instr::Add: return ((a % M) + (b % M)) % M;
      case Instr::Inc: return ((a % M) + 1) % M;
      case Instr::Dec: return ((a % M) + M - 1) % M;
      default: throw std::logic_error("arith: not an arithmetic instruction");
    }
  }

  // Executes one structured line: returns the full result (noop yields the
  // zero value) and performs the cons heap write when `live`.
  ConcreteReg exec_line(const DecodedLine& l, int t, const PseudoRegs* pseudo, bool live) {
    const ConcreteReg a1 = read(l.arg1, pseudo);
    const ConcreteReg a2 = read(l.arg2, pseudo);
    const ConcreteReg cn = read(l.cond, pseudo);
    const bool truthy = spec_.typed() ? cn.b != 0 : cn.i != 0;
    switch (l.instr) {
      case Instr::Cons: {
        const int addr = s_.alloc_base + t;
        if (live)
          s_.heap[static_cast<size_t>(addr - 1)] = ConcreteCell{get(a1, kInt), get(a2, kPtr)};
        return make(kPtr, addr);
      }
      case Instr::Head: return make(kInt, heap_data(get(a1, kPtr)));
      case Instr::Tail: return make(kPtr, heap_next(get(a1, kPtr)));
      case Instr::Add: return make(kInt, arith(l.instr, get(a1, kInt), get(a2, kInt)));
      case Instr::Inc: return make(kInt, arith(l.instr, get(a1, kInt), 0));
      case Instr::Dec: return make(kInt, arith(l.instr, get(a1, kInt), 0));
      case Instr::Eq: return make(ValueKind::Bool, get(a1, kInt) == get(a2, kInt) ? 1 : 0);
      case Instr::Gt: return make(ValueKind::Bool, get(a1, kInt) > get(a2, kInt) ? 1 : 0);
      case Instr::And:
        return make(ValueKind::Bool,
                    (get(a1, ValueKind::Bool) != 0 && get(a2, ValueKind::Bool) != 0) ? 1 : 0);
      case Instr::Or:
        return make(ValueKind::Bool,
                    (get(a1, ValueKind::Bool) != 0 || get(a2, ValueKind::Bool) != 0) ? 1 : 0);
      case Instr::Zero: return make(kInt, 0);
      case Instr::One: return make(kInt, 1);
      case Instr::Noop: return ConcreteReg{};
      case Instr::Ite: return truthy ? a1 : a2;
      default: throw std::logic_error("assembly instruction in a structured template");
    }
  }

  void apply_line(const Step& st, const PseudoRegs* pseudo, bool live, ConcreteReg* result) {
    const DecodedLine& l = prog_.lines[static_cast<size_t>(st.line)];
    const ConcreteReg res = exec_line(l, st.t, pseudo, live);
    if (result != nullptr) *result = res;
    if (spec_.immutable()) {
      // Write-once binding, rebound on every iteration for body lines.
      s_.regs[static_cast<size_t>(line_reg(st.line))] = res;
    } else if (live && l.instr != Instr::Noop) {
      s_.regs[static_cast<size_t>(l.out)] = res;
    }
  }

  int line_reg(int line) const {
    const int id = line_regs_[static_cast<size_t>(line)];
    if (id < 0) throw std::logic_error("no register bound to line");
    return id;
  }

  void run_structured() {
    const auto plan = spec_.schedule();
    for (const Step& st : plan)
      if (st.kind == Step::Kind::Prefix) apply_line(st, nullptr, true, nullptr);

    if (spec_.has_loop()) {
      const Comb c = prog_.comb;
      const int J = spec_.max_list_len;
      int q1 = get(s_.regs[static_cast<size_t>(prog_.loop1)], kPtr);
      int q2 = c == Comb::ZipWithi ? get(s_.regs[static_cast<size_t>(prog_.loop2)], kPtr) : 0;
      ConcreteReg acc =
          c == Comb::Foldli ? s_.regs[static_cast<size_t>(prog_.acc_init)] : ConcreteReg{};

      const int base = s_.alloc_base + spec_.append_addr_offset(0);
      const bool appends = c == Comb::Mapi || c == Comb::ZipWithi;
      std::vector<Step> body_steps;
      for (const Step& st : plan)
        if (st.kind == Step::Kind::Body) body_steps.push_back(st);

      bool live0 = false;
      for (int j = 0; j < J; ++j) {
        const bool live = q1 != 0 && (c != Comb::ZipWithi || q2 != 0);
        if (j == 0) live0 = live;
        PseudoRegs ps;
        ps.ele1 = make(kInt, heap_data(q1));
        if (c == Comb::ZipWithi) ps.ele2 = make(kInt, heap_data(q2));
        if (c == Comb::Foldli) ps.acc = acc;
        if (spec_.variant != Variant::AL) ps.idx = make(kInt, j);

        ConcreteReg f;
        for (const Step& st : body_steps) {
          if (st.iter != j) continue;
          apply_line(st, &ps, live, &f);
        }

        if (c == Comb::Foldli && live) acc = f;
        q1 = heap_next(q1);
        if (c == Comb::ZipWithi) q2 = heap_next(q2);
        const bool next_live = q1 != 0 && (c != Comb::ZipWithi || q2 != 0);
        if (appends) {
          const int succ = base + j + 1 <= spec_.heap_cells ? base + j + 1 : 0;
          s_.heap[static_cast<size_t>(base + j - 1)] =
              ConcreteCell{live ? get(f, kInt) : 0,
                           next_live && j + 1 < J ? succ : 0};
        }
      }

      ConcreteReg result;
      if (c == Comb::Foldli) result = acc;
      if (appends) result = make(kPtr, live0 ? base : 0);
      if (spec_.immutable())
        s_.regs[static_cast<size_t>(spec_.comb_out_reg())] = result;
      else if (spec_.variant != Variant::AL)
        s_.regs[static_cast<size_t>(prog_.comb_out)] = result;
    }

    for (const Step& st : plan)
      if (st.kind == Step::Kind::Suffix) apply_line(st, nullptr, true, nullptr);
  }

  void run_assembly() {
    const int P = spec_.prog_len;
    const int H = spec_.heap_cells;
    for (int t = 1; t <= spec_.timesteps; ++t) {
      if (s_.ip >= P) continue;  // halted
      const DecodedLine& l = prog_.lines[static_cast<size_t>(s_.ip)];
      const int a1 = s_.regs[static_cast<size_t>(l.arg1)].i;
      const int a2 = s_.regs[static_cast<size_t>(l.arg2)].i;
      int next_ip = s_.ip + 1;
      bool write = true;
      int res = 0;
      switch (l.instr) {
        case Instr::Cons: {
          if (has_mutable_sp(spec_.variant)) {
            if (s_.sp <= H) {
              s_.heap[static_cast<size_t>(s_.sp - 1)] = ConcreteCell{a1, a2};
              res = s_.sp;
            } else {
              res = 0;  // heap exhausted: allocation yields null
            }
            s_.sp = std::min(s_.sp + 1, H + 1);
          } else {
            const int addr = s_.alloc_base + t;
            s_.heap[static_cast<size_t>(addr - 1)] = ConcreteCell{a1, a2};
            res = addr;
          }
          break;
        }
        case Instr::Head: res = heap_data(a1); break;
        case Instr::Tail: res = heap_next(a1); break;
        case Instr::Add:
        case Instr::Inc:
        case Instr::Dec: res = arith(l.instr, a1, a2); break;
        case Instr::Eq: res = a1 == a2 ? 1 : 0; break;
        case Instr::Gt: res = a1 > a2 ? 1 : 0; break;
        case Instr::And: res = (a1 != 0 && a2 != 0) ? 1 : 0; break;
        case Instr::Or: res = (a1 != 0 || a2 != 0) ? 1 : 0; break;
        case Instr::Zero: res = 0; break;
        case Instr::One: res = 1; break;
        case Instr::Noop: write = false; break;
        case Instr::Ite:  // conditional move
          write = a1 != 0;
          res = a2;
          break;
        case Instr::Jz:
          write = false;
          if (a1 == 0) next_ip = l.branch;
          break;
        case Instr::Jnz:
          write = false;
          if (a1 != 0) next_ip = l.branch;
          break;
        case Instr::Return:
          write = false;
          next_ip = P;
          break;
      }
      if (write) s_.regs[static_cast<size_t>(l.out)].i = res;
      s_.ip = next_ip;
    }
  }

  const ModelSpec& spec_;
  const DecodedProgram& prog_;
  std::vector<int> line_regs_;
  ConcreteState s_;
};

}  // namespace

DecodedProgram decode(const ModelSpec& spec, const ParamLayout& layout,
                      const ConcreteProgram& prog) {
  if (prog.choice.size() != layout.slots.size())
    throw std::invalid_argument("decode: slot count mismatch");
  DecodedProgram dp;
  dp.lines.resize(static_cast<size_t>(spec.prog_len));
  for (size_t i = 0; i < layout.slots.size(); ++i) {
    const SlotDesc& sd = layout.slots[i];
    const int c = prog.choice[i];
    if (c < 0 || c >= static_cast<int>(sd.choices.size()))
      throw std::invalid_argument("decode: choice out of range for " + sd.name);
    const int v = sd.choices[static_cast<size_t>(c)];
    switch (sd.kind) {
      case SlotKind::Instr: dp.lines[static_cast<size_t>(sd.line)].instr = static_cast<Instr>(v); break;
      case SlotKind::Out: dp.lines[static_cast<size_t>(sd.line)].out = v; break;
      case SlotKind::Arg1: dp.lines[static_cast<size_t>(sd.line)].arg1 = v; break;
      case SlotKind::Arg2: dp.lines[static_cast<size_t>(sd.line)].arg2 = v; break;
      case SlotKind::Cond: dp.lines[static_cast<size_t>(sd.line)].cond = v; break;
      case SlotKind::Branch: dp.lines[static_cast<size_t>(sd.line)].branch = v; break;
      case SlotKind::Loop1: dp.loop1 = v; break;
      case SlotKind::Loop2: dp.loop2 = v; break;
      case SlotKind::AccInit: dp.acc_init = v; break;
      case SlotKind::CombChoice: dp.comb = static_cast<Comb>(v); break;
      case SlotKind::CombOut: dp.comb_out = v; break;
    }
  }
  if (spec.has_loop() && !spec.has_comb_choice()) dp.comb = spec.combinators[0];
  return dp;
}

ConcreteState discrete_run(const ModelSpec& spec, const DecodedProgram& prog,
                           const std::vector<TaskValue>& inputs) {
  Discrete d(spec, prog);
  return d.run(inputs);
}

TaskOutput read_output(const ModelSpec& spec, const ConcreteState& s, OutputKind kind) {
  const ConcreteReg& r = s.regs[static_cast<size_t>(spec.observed_reg())];
  const bool typed = spec.typed();
  switch (kind) {
    case OutputKind::Int: return TaskOutput::of_int(r.i);
    case OutputKind::Bool: {
      // Untyped variants must hit the encoding of the boolean exactly.
      const int v = typed ? r.b : r.i;
      return TaskOutput{OutputKind::Bool, v, {}};
    }
    case OutputKind::List: {
      int p = typed ? r.p : r.i;
      std::vector<int> out;
      int steps = 0;
      while (p != 0) {
        if (++steps > spec.heap_cells) return TaskOutput::of_list({-1});  // cyclic chain
        out.push_back(s.heap[static_cast<size_t>(p - 1)].data);
        p = s.heap[static_cast<size_t>(p - 1)].next;
      }
      return TaskOutput::of_list(std::move(out));
    }
  }
  return TaskOutput{};
}

}  // namespace gradsynth
