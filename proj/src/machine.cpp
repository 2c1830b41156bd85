#include "gradsynth/machine.hpp"

#include <algorithm>
#include <memory>
#include <stdexcept>

namespace gradsynth {

namespace {

constexpr ValueKind kInt = ValueKind::Int;
constexpr ValueKind kPtr = ValueKind::Ptr;
constexpr ValueKind kBool = ValueKind::Bool;

using Res = InstrInfo::Res;

const InstrInfo kInstrTable[] = {
    {"cons", 2, kInt, kPtr, Res::Ptr, true, false},
    {"head", 1, kPtr, kInt, Res::Int, true, false},
    {"tail", 1, kPtr, kInt, Res::Ptr, true, false},
    {"add", 2, kInt, kInt, Res::Int, true, false},
    {"inc", 1, kInt, kInt, Res::Int, true, false},
    {"dec", 1, kInt, kInt, Res::Int, true, false},
    {"eq", 2, kInt, kInt, Res::Bool, true, false},
    {"gt", 2, kInt, kInt, Res::Bool, true, false},
    {"and", 2, kBool, kBool, Res::Bool, true, false},
    {"or", 2, kBool, kBool, Res::Bool, true, false},
    {"zero", 0, kInt, kInt, Res::Int, true, false},
    {"one", 0, kInt, kInt, Res::Int, true, false},
    {"noop", 0, kInt, kInt, Res::None, false, false},
    {"ite", 2, kInt, kInt, Res::Copy, true, false},
    {"jz", 1, kInt, kInt, Res::None, false, true},
    {"jnz", 1, kInt, kInt, Res::None, false, true},
    {"return", 0, kInt, kInt, Res::None, false, false},
};

std::shared_ptr<const ad::Table> unary_table(int n_in, int n_out, int (*f)(int, int), int m) {
  auto t = std::make_shared<ad::Table>();
  t->a_n = n_in;
  t->b_n = 0;
  t->out_n = n_out;
  t->map.resize(static_cast<size_t>(n_in));
  for (int a = 0; a < n_in; ++a) t->map[static_cast<size_t>(a)] = f(a, m);
  return t;
}

std::shared_ptr<const ad::Table> binary_table(int a_n, int b_n, int n_out, int (*f)(int, int, int),
                                              int m) {
  auto t = std::make_shared<ad::Table>();
  t->a_n = a_n;
  t->b_n = b_n;
  t->out_n = n_out;
  t->map.resize(static_cast<size_t>(a_n) * static_cast<size_t>(b_n));
  for (int a = 0; a < a_n; ++a)
    for (int b = 0; b < b_n; ++b)
      t->map[static_cast<size_t>(a) * static_cast<size_t>(b_n) + static_cast<size_t>(b)] =
          f(a, b, m);
  return t;
}

ValueKind res_kind(Res r) {
  switch (r) {
    case Res::Int: return kInt;
    case Res::Ptr: return kPtr;
    case Res::Bool: return kBool;
    default: throw std::logic_error("res_kind: instruction has no result slot");
  }
}

}  // namespace

const InstrInfo& instr_info(Instr i) { return kInstrTable[static_cast<int>(i)]; }

ParamNodes param_nodes_from_values(ad::Tape& tape, const ParamLayout& layout,
                                   const ParamValues& values) {
  if (values.slots.size() != layout.slots.size())
    throw std::invalid_argument("param_nodes_from_values: slot count mismatch");
  ParamNodes pn;
  for (size_t i = 0; i < layout.slots.size(); ++i) {
    const Dist& d = values.slots[i];
    if (d.n() != static_cast<int>(layout.slots[i].choices.size()))
      throw std::invalid_argument("param_nodes_from_values: domain mismatch for " +
                                  layout.slots[i].name);
    d.validate();
    pn.slots.push_back(tape.leaf(std::span<const double>(d.p)));
  }
  return pn;
}

ParamGraph make_param_graph(ad::Tape& tape, const ParamLayout& layout) {
  ParamGraph g;
  for (const SlotDesc& s : layout.slots) {
    const std::vector<double> zeros(s.choices.size(), 0.0);
    const ad::NodeId logit = tape.leaf(std::span<const double>(zeros), /*is_param=*/true);
    g.logits.push_back(logit);
    g.dists.slots.push_back(tape.softmax(logit));
  }
  return g;
}

LiftedMachine::LiftedMachine(ad::Tape& tape, const ModelSpec& spec)
    : tape_(tape), spec_(spec), layout_(spec.layout()) {
  const int M = spec_.max_int;
  const int ID = spec_.domain(kInt);
  const int BD = spec_.domain(kBool);
  tbl_add_ = tape_.register_table(binary_table(
      ID, ID, ID, [](int a, int b, int m) { return ((a % m) + (b % m)) % m; }, M));
  tbl_inc_ = tape_.register_table(
      unary_table(ID, ID, [](int a, int m) { return ((a % m) + 1) % m; }, M));
  tbl_dec_ = tape_.register_table(
      unary_table(ID, ID, [](int a, int m) { return ((a % m) + m - 1) % m; }, M));
  tbl_eq_ = tape_.register_table(binary_table(
      ID, ID, BD, [](int a, int b, int) { return a == b ? 1 : 0; }, M));
  tbl_gt_ = tape_.register_table(binary_table(
      ID, ID, BD, [](int a, int b, int) { return a > b ? 1 : 0; }, M));
  tbl_and_ = tape_.register_table(binary_table(
      BD, BD, BD, [](int a, int b, int) { return (a != 0 && b != 0) ? 1 : 0; }, M));
  tbl_or_ = tape_.register_table(binary_table(
      BD, BD, BD, [](int a, int b, int) { return (a != 0 || b != 0) ? 1 : 0; }, M));
  if (has_mutable_sp(spec_.variant)) {
    const int H = spec_.heap_cells;
    // sp ranges over [0, H+1]; H+1 is the saturated "heap full" state.
    tbl_sp_shift_ = tape_.register_table(
        unary_table(H + 2, H + 2, [](int s, int h) { return s >= h + 1 ? h + 1 : s + 1; }, H));
    // Allocation result: the address, or null once the heap is exhausted.
    tbl_sp_embed_ = tape_.register_table(
        unary_table(H + 2, spec_.untyped_domain(), [](int s, int h) { return s <= h ? s : 0; }, H));
  }
  if (spec_.assembly()) {
    tbl_branch_pad_ = tape_.register_table(
        unary_table(spec_.prog_len, spec_.prog_len + 1, [](int p, int) { return p; }, 0));
  }

  const int P = spec_.prog_len;
  idx_instr_.assign(P, -1);
  idx_out_.assign(P, -1);
  idx_arg1_.assign(P, -1);
  idx_arg2_.assign(P, -1);
  idx_cond_.assign(P, -1);
  idx_branch_.assign(P, -1);
  for (int l = 0; l < P; ++l) {
    idx_instr_[l] = layout_.find(SlotKind::Instr, l);
    idx_out_[l] = layout_.find(SlotKind::Out, l);
    idx_arg1_[l] = layout_.find(SlotKind::Arg1, l);
    idx_arg2_[l] = layout_.find(SlotKind::Arg2, l);
    idx_cond_[l] = layout_.find(SlotKind::Cond, l);
    idx_branch_[l] = layout_.find(SlotKind::Branch, l);
  }
  idx_loop1_ = layout_.find(SlotKind::Loop1, -1);
  idx_loop2_ = layout_.find(SlotKind::Loop2, -1);
  idx_accinit_ = layout_.find(SlotKind::AccInit, -1);
  idx_comb_ = layout_.find(SlotKind::CombChoice, -1);
  idx_combout_ = layout_.find(SlotKind::CombOut, -1);

  line_reg_.assign(P, -1);
  if (spec_.immutable()) {
    const auto table = spec_.reg_table();
    for (size_t id = 0; id < table.size(); ++id) {
      const RegRole role = table[id].role;
      if (role == RegRole::Prefix || role == RegRole::Body || role == RegRole::Suffix)
        line_reg_[table[id].line] = static_cast<int>(id);
    }
  }
}

ad::NodeId LiftedMachine::cpoint(int n, int index) {
  const auto key = std::make_pair(n, index);
  const auto it = points_.find(key);
  if (it != points_.end()) return it->second;
  const ad::NodeId id = tape_.point(n, index);
  points_.emplace(key, id);
  return id;
}

ad::NodeId LiftedMachine::zero_slot(ValueKind k) { return cpoint(spec_.domain(k), 0); }

RegNodes LiftedMachine::zero_reg() {
  RegNodes r;
  r.slot[0] = zero_slot(kInt);
  if (spec_.typed()) {
    r.slot[1] = zero_slot(kPtr);
    r.slot[2] = zero_slot(kBool);
  }
  return r;
}

LiftedState LiftedMachine::initial_state(const std::vector<TaskValue>& inputs) {
  if (inputs.size() != spec_.inputs.size())
    throw std::invalid_argument("initial_state: input arity mismatch");
  LiftedState s;
  s.heap.assign(static_cast<size_t>(spec_.heap_cells),
                CellNodes{zero_slot(kInt), zero_slot(kPtr)});
  s.regs.assign(static_cast<size_t>(spec_.num_regs()), zero_reg());

  const int M = spec_.max_int;
  int addr = 1;
  for (size_t i = 0; i < inputs.size(); ++i) {
    RegNodes r = zero_reg();
    if (spec_.inputs[i] == kInt) {
      if (!std::holds_alternative<int>(inputs[i]))
        throw std::invalid_argument("initial_state: expected scalar input");
      const int v = std::get<int>(inputs[i]);
      if (v < 0 || v >= M) throw std::invalid_argument("initial_state: scalar out of range");
      set_val(r, kInt, cpoint(spec_.domain(kInt), v));
    } else {
      if (!std::holds_alternative<std::vector<int>>(inputs[i]))
        throw std::invalid_argument("initial_state: expected list input");
      const auto& list = std::get<std::vector<int>>(inputs[i]);
      if (static_cast<int>(list.size()) > spec_.max_list_len)
        throw std::invalid_argument("initial_state: list longer than max_list_len");
      const int head = list.empty() ? 0 : addr;
      for (size_t k = 0; k < list.size(); ++k) {
        if (list[k] < 0 || list[k] >= M)
          throw std::invalid_argument("initial_state: element out of range");
        const int next = k + 1 < list.size() ? addr + 1 : 0;
        s.heap[static_cast<size_t>(addr - 1)] =
            CellNodes{cpoint(spec_.domain(kInt), list[k]), cpoint(spec_.domain(kPtr), next)};
        ++addr;
      }
      set_val(r, kPtr, cpoint(spec_.domain(kPtr), head));
    }
    s.regs[i] = r;
  }
  s.alloc_base = addr - 1;
  if (s.alloc_base > spec_.heap_cells)
    throw std::invalid_argument("initial_state: inputs exceed the heap");

  if (spec_.assembly()) {
    s.ip = cpoint(spec_.prog_len + 1, 0);
    if (has_mutable_sp(spec_.variant)) {
      const int start = std::min(s.alloc_base + 1, spec_.heap_cells + 1);
      s.sp = cpoint(spec_.heap_cells + 2, start);
    }
  }
  return s;
}

RegNodes LiftedMachine::read_reg(const LiftedState& s, const Pseudo* pseudo, int id) const {
  const int nr = spec_.num_regs();
  if (id < nr) return s.regs[static_cast<size_t>(id)];
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

RegNodes LiftedMachine::mix_regs(const LiftedState& s, const Pseudo* pseudo, const SlotDesc& slot,
                                 ad::NodeId dist) {
  const int nslots = spec_.slots_per_reg();
  RegNodes out;
  for (int vs = 0; vs < nslots; ++vs) {
    std::vector<ad::Term> terms;
    terms.reserve(slot.choices.size());
    for (size_t k = 0; k < slot.choices.size(); ++k) {
      const RegNodes r = read_reg(s, pseudo, slot.choices[k]);
      terms.push_back(ad::Term(r.slot[static_cast<size_t>(vs)]).with(dist, static_cast<int>(k)));
    }
    const int dom = spec_.typed() ? spec_.domain(static_cast<ValueKind>(vs))
                                  : spec_.untyped_domain();
    out.slot[static_cast<size_t>(vs)] = tape_.weighted_sum(dom, terms);
  }
  return out;
}

ad::NodeId LiftedMachine::truth_gate(const RegNodes& cond) {
  if (spec_.typed()) return cond[kBool];
  const ad::NodeId v = cond.slot[0];
  return tape_.weighted_sum(
      2, {ad::Term(cpoint(2, 1)), ad::Term(cpoint(2, 0)).with(v, 0),
          ad::Term(cpoint(2, 1), -1.0).with(v, 0)});
}

void LiftedMachine::gather_terms(std::vector<ad::Term>& out, const LiftedState& s, ad::NodeId ptr,
                                 bool next_field, std::array<ad::Factor, 2> extra, int n_extra) {
  const auto with_extras = [&](ad::Term t, int a) {
    for (int e = 0; e < n_extra; ++e) t.with(extra[static_cast<size_t>(e)].node,
                                             extra[static_cast<size_t>(e)].elem);
    t.with(ptr, a);
    return t;
  };
  out.push_back(with_extras(ad::Term(next_field ? zero_slot(kPtr) : zero_slot(kInt)), 0));
  for (int a = 1; a <= spec_.heap_cells; ++a) {
    const CellNodes& c = s.heap[static_cast<size_t>(a - 1)];
    out.push_back(with_extras(ad::Term(next_field ? c.next : c.data), a));
  }
}

ad::NodeId LiftedMachine::gather_data(const LiftedState& s, ad::NodeId ptr) {
  std::vector<ad::Term> terms;
  gather_terms(terms, s, ptr, false, {}, 0);
  return tape_.weighted_sum(spec_.domain(kInt), terms);
}

ad::NodeId LiftedMachine::gather_next(const LiftedState& s, ad::NodeId ptr) {
  std::vector<ad::Term> terms;
  gather_terms(terms, s, ptr, true, {}, 0);
  return tape_.weighted_sum(spec_.domain(kPtr), terms);
}

RegNodes LiftedMachine::blend(ad::NodeId live, const RegNodes& on, const RegNodes& off) {
  const int nslots = spec_.slots_per_reg();
  RegNodes out;
  for (int vs = 0; vs < nslots; ++vs) {
    const ad::NodeId a = on.slot[static_cast<size_t>(vs)];
    const ad::NodeId b = off.slot[static_cast<size_t>(vs)];
    out.slot[static_cast<size_t>(vs)] = tape_.weighted_sum(
        tape_.length(a),
        {ad::Term(a).with(live, 0), ad::Term(b), ad::Term(b, -1.0).with(live, 0)});
  }
  return out;
}

// Executes one structured template line: mixes arguments, forms the lifted
// result of every instruction, and performs the cons heap write for the fresh
// cell of this timestep (gated by iteration liveness inside a loop body).
LiftedMachine::LineOut LiftedMachine::exec_line(LiftedState& s, const ParamNodes& params, int line,
                                                int t, const Pseudo* pseudo, bool need_full) {
  const ad::NodeId instr = params.slots[static_cast<size_t>(idx_instr_[line])];
  const ad::NodeId a1d = params.slots[static_cast<size_t>(idx_arg1_[line])];
  const ad::NodeId a2d = params.slots[static_cast<size_t>(idx_arg2_[line])];
  const ad::NodeId cnd = params.slots[static_cast<size_t>(idx_cond_[line])];
  const SlotDesc& a1s = layout_.slots[static_cast<size_t>(idx_arg1_[line])];
  const SlotDesc& a2s = layout_.slots[static_cast<size_t>(idx_arg2_[line])];
  const SlotDesc& cns = layout_.slots[static_cast<size_t>(idx_cond_[line])];

  const RegNodes a1 = mix_regs(s, pseudo, a1s, a1d);
  const RegNodes a2 = mix_regs(s, pseudo, a2s, a2d);
  const RegNodes cn = mix_regs(s, pseudo, cns, cnd);
  const ad::NodeId gate = truth_gate(cn);

  const bool gated = pseudo != nullptr && pseudo->live_gate;
  const ad::NodeId live = gated ? pseudo->live : ad::kNoNode;

  const int ic = static_cast<int>(Instr::Cons);
  const int nslots = spec_.slots_per_reg();
  LineOut lo;
  for (int vs = 0; vs < nslots; ++vs) {
    const ValueKind vk = static_cast<ValueKind>(vs);
    const int dom = spec_.typed() ? spec_.domain(vk) : spec_.untyped_domain();
    std::vector<ad::Term> wterms;
    for (int i = 0; i < kStructuredInstrCount; ++i) {
      const Instr in = static_cast<Instr>(i);
      if (in == Instr::Noop) continue;
      if (in == Instr::Ite) {
        wterms.push_back(ad::Term(a1.slot[static_cast<size_t>(vs)]).with(instr, i).with(gate, 1));
        wterms.push_back(ad::Term(a2.slot[static_cast<size_t>(vs)]).with(instr, i).with(gate, 0));
        continue;
      }
      const InstrInfo& info = instr_info(in);
      if (spec_.typed() && res_kind(info.res) != vk) {
        wterms.push_back(ad::Term(cpoint(dom, 0)).with(instr, i));
        continue;
      }
      switch (in) {
        case Instr::Cons:
          wterms.push_back(ad::Term(cpoint(dom, s.alloc_base + t)).with(instr, i));
          break;
        case Instr::Head:
          gather_terms(wterms, s, val(a1, kPtr), false, {ad::Factor{instr, i}}, 1);
          break;
        case Instr::Tail:
          gather_terms(wterms, s, val(a1, kPtr), true, {ad::Factor{instr, i}}, 1);
          break;
        case Instr::Add:
          wterms.push_back(
              ad::Term(tape_.table2(val(a1, kInt), val(a2, kInt), tbl_add_)).with(instr, i));
          break;
        case Instr::Inc:
          wterms.push_back(ad::Term(tape_.table1(val(a1, kInt), tbl_inc_)).with(instr, i));
          break;
        case Instr::Dec:
          wterms.push_back(ad::Term(tape_.table1(val(a1, kInt), tbl_dec_)).with(instr, i));
          break;
        case Instr::Eq:
          wterms.push_back(
              ad::Term(tape_.table2(val(a1, kInt), val(a2, kInt), tbl_eq_)).with(instr, i));
          break;
        case Instr::Gt:
          wterms.push_back(
              ad::Term(tape_.table2(val(a1, kInt), val(a2, kInt), tbl_gt_)).with(instr, i));
          break;
        case Instr::And:
          wterms.push_back(
              ad::Term(tape_.table2(val(a1, kBool), val(a2, kBool), tbl_and_)).with(instr, i));
          break;
        case Instr::Or:
          wterms.push_back(
              ad::Term(tape_.table2(val(a1, kBool), val(a2, kBool), tbl_or_)).with(instr, i));
          break;
        case Instr::Zero:
          wterms.push_back(ad::Term(cpoint(dom, 0)).with(instr, i));
          break;
        case Instr::One:
          wterms.push_back(ad::Term(cpoint(dom, 1)).with(instr, i));
          break;
        default:
          throw std::logic_error("assembly instruction in a structured template");
      }
    }
    if (!spec_.immutable())
      lo.write.slot[static_cast<size_t>(vs)] = tape_.weighted_sum(dom, wterms);
    if (need_full || spec_.immutable()) {
      std::vector<ad::Term> fterms = wterms;
      fterms.push_back(ad::Term(cpoint(dom, 0)).with(instr, static_cast<int>(Instr::Noop)));
      lo.full.slot[static_cast<size_t>(vs)] = tape_.weighted_sum(dom, fterms);
    }
  }
  if (!spec_.immutable()) {
    const ad::NodeId c1 = cpoint(1, 0);
    lo.wmass = tape_.weighted_sum(
        1, {ad::Term(c1), ad::Term(c1, -1.0).with(instr, static_cast<int>(Instr::Noop))});
  }

  // Fresh-cell write for cons: cell alloc_base + t is untouched before this
  // step, so the update is a disjoint accumulation.
  const int ci = s.alloc_base + t - 1;
  CellNodes& cell = s.heap[static_cast<size_t>(ci)];
  auto cons_write = [&](ad::NodeId old, ad::NodeId value, ValueKind k) {
    ad::Term on(value);
    ad::Term off(cpoint(spec_.domain(k), 0), -1.0);
    on.with(instr, ic);
    off.with(instr, ic);
    if (gated) {
      on.with(live, 0);
      off.with(live, 0);
    }
    return tape_.weighted_sum(tape_.length(old), {ad::Term(old), on, off});
  };
  cell = CellNodes{cons_write(cell.data, val(a1, kInt), kInt),
                   cons_write(cell.next, val(a2, kPtr), kPtr)};
  return lo;
}

void LiftedMachine::write_mutable(LiftedState& s, ad::NodeId out_dist, const LineOut& lo,
                                  const Pseudo* pseudo) {
  const bool gated = pseudo != nullptr && pseudo->live_gate;
  const ad::NodeId live = gated ? pseudo->live : ad::kNoNode;
  const int nslots = spec_.slots_per_reg();
  for (int u = 0; u < spec_.registers; ++u) {
    RegNodes& r = s.regs[static_cast<size_t>(u)];
    for (int vs = 0; vs < nslots; ++vs) {
      const ad::NodeId old = r.slot[static_cast<size_t>(vs)];
      ad::Term put(lo.write.slot[static_cast<size_t>(vs)]);
      put.with(out_dist, u);
      ad::Term take(old, -1.0);
      take.with(out_dist, u).with(lo.wmass, 0);
      if (gated) {
        put.with(live, 0);
        take.with(live, 0);
      }
      r.slot[static_cast<size_t>(vs)] =
          tape_.weighted_sum(tape_.length(old), {ad::Term(old), put, take});
    }
  }
}

LiftedMachine::CombRun LiftedMachine::run_comb(Comb c, const LiftedState& start,
                                               const ParamNodes& params,
                                               const std::vector<Step>& body_steps) {
  CombRun run;
  run.state = start;
  LiftedState& s = run.state;
  const int J = spec_.max_list_len;
  const int body = spec_.shape.body;

  const SlotDesc& l1s = layout_.slots[static_cast<size_t>(idx_loop1_)];
  ad::NodeId q1 = val(mix_regs(s, nullptr, l1s, params.slots[static_cast<size_t>(idx_loop1_)]),
                      kPtr);
  ad::NodeId q2 = ad::kNoNode;
  if (c == Comb::ZipWithi) {
    const SlotDesc& l2s = layout_.slots[static_cast<size_t>(idx_loop2_)];
    q2 = val(mix_regs(s, nullptr, l2s, params.slots[static_cast<size_t>(idx_loop2_)]), kPtr);
  }
  RegNodes acc = zero_reg();
  if (c == Comb::Foldli) {
    const SlotDesc& as = layout_.slots[static_cast<size_t>(idx_accinit_)];
    acc = mix_regs(s, nullptr, as, params.slots[static_cast<size_t>(idx_accinit_)]);
  }

  const ad::NodeId c1 = cpoint(1, 0);
  const auto liveness = [&](ad::NodeId qa, ad::NodeId qb) {
    std::vector<ad::Term> terms{ad::Term(c1), ad::Term(c1, -1.0).with(qa, 0)};
    if (qb != ad::kNoNode) {
      terms.push_back(ad::Term(c1, -1.0).with(qb, 0));
      terms.push_back(ad::Term(c1).with(qa, 0).with(qb, 0));
    }
    return tape_.weighted_sum(1, terms);
  };

  const bool appends = c == Comb::Mapi || c == Comb::ZipWithi;
  std::vector<ad::NodeId> append_data(appends ? static_cast<size_t>(J) : 0, ad::kNoNode);
  std::vector<ad::NodeId> append_live(static_cast<size_t>(J) + 1, ad::kNoNode);

  ad::NodeId live = liveness(q1, q2);
  for (int j = 0; j < J; ++j) {
    append_live[static_cast<size_t>(j)] = live;
    Pseudo ps;
    ps.live_gate = true;
    ps.live = live;
    ps.ele1 = zero_reg();
    set_val(ps.ele1, kInt, gather_data(s, q1));
    ps.ele2 = zero_reg();
    if (c == Comb::ZipWithi) set_val(ps.ele2, kInt, gather_data(s, q2));
    ps.acc = c == Comb::Foldli ? acc : zero_reg();
    ps.idx = zero_reg();
    if (spec_.variant != Variant::AL) set_val(ps.idx, kInt, cpoint(spec_.domain(kInt), j));

    LineOut last;
    for (const Step& st : body_steps) {
      if (st.iter != j) continue;
      const bool is_last = st.line == spec_.shape.prefix + body - 1;
      last = exec_line(s, params, st.line, st.t, &ps, is_last);
      if (spec_.immutable())
        s.regs[static_cast<size_t>(line_reg_[st.line])] = last.full;
      else
        write_mutable(s, params.slots[static_cast<size_t>(idx_out_[st.line])], last, &ps);
    }

    if (c == Comb::Foldli) acc = blend(live, last.full, acc);
    if (appends) append_data[static_cast<size_t>(j)] = val(last.full, kInt);

    q1 = gather_next(s, q1);
    if (c == Comb::ZipWithi) q2 = gather_next(s, q2);
    live = liveness(q1, q2);
  }
  append_live[static_cast<size_t>(J)] = live;

  RegNodes result = zero_reg();
  if (c == Comb::Foldli) result = acc;
  if (appends) {
    const int base = s.alloc_base + spec_.append_addr_offset(0);
    for (int j = 0; j < J; ++j) {
      CellNodes& cell = s.heap[static_cast<size_t>(base + j - 1)];
      const ad::NodeId lv = append_live[static_cast<size_t>(j)];
      const ad::NodeId nlv = append_live[static_cast<size_t>(j + 1)];
      cell.data = tape_.weighted_sum(
          tape_.length(cell.data),
          {ad::Term(append_data[static_cast<size_t>(j)]).with(lv, 0), ad::Term(zero_slot(kInt)),
           ad::Term(zero_slot(kInt), -1.0).with(lv, 0)});
      const ad::NodeId succ = cpoint(spec_.domain(kPtr), base + j + 1 <= spec_.heap_cells
                                                             ? base + j + 1
                                                             : 0);
      cell.next = tape_.weighted_sum(
          tape_.length(cell.next),
          {ad::Term(j + 1 < J ? succ : zero_slot(kPtr)).with(nlv, 0), ad::Term(zero_slot(kPtr)),
           ad::Term(zero_slot(kPtr), -1.0).with(nlv, 0)});
    }
    const ad::NodeId head = tape_.weighted_sum(
        spec_.domain(kPtr),
        {ad::Term(cpoint(spec_.domain(kPtr), base)).with(append_live[0], 0),
         ad::Term(zero_slot(kPtr)), ad::Term(zero_slot(kPtr), -1.0).with(append_live[0], 0)});
    set_val(result, kPtr, head);
  }
  run.result = result;
  return run;
}

LiftedState LiftedMachine::run_structured(const ParamNodes& params,
                                          const std::vector<TaskValue>& inputs) {
  LiftedState s = initial_state(inputs);
  const auto plan = spec_.schedule();

  std::vector<Step> body_steps;
  for (const Step& st : plan)
    if (st.kind == Step::Kind::Body) body_steps.push_back(st);

  const auto run_line = [&](const Step& st) {
    const LineOut lo = exec_line(s, params, st.line, st.t, nullptr, spec_.immutable());
    if (spec_.immutable())
      s.regs[static_cast<size_t>(line_reg_[st.line])] = lo.full;
    else
      write_mutable(s, params.slots[static_cast<size_t>(idx_out_[st.line])], lo, nullptr);
  };

  for (const Step& st : plan)
    if (st.kind == Step::Kind::Prefix) run_line(st);

  if (spec_.has_loop()) {
    std::vector<CombRun> runs;
    runs.reserve(spec_.combinators.size());
    for (Comb c : spec_.combinators) runs.push_back(run_comb(c, s, params, body_steps));

    LiftedState mixed;
    RegNodes result;
    if (runs.size() == 1) {
      mixed = std::move(runs[0].state);
      result = runs[0].result;
    } else {
      const ad::NodeId cd = params.slots[static_cast<size_t>(idx_comb_)];
      mixed = runs[0].state;  // copies alloc_base and node count scaffolding
      const auto mix = [&](auto get) {
        std::vector<ad::Term> terms;
        for (size_t k = 0; k < runs.size(); ++k)
          terms.push_back(ad::Term(get(runs[k])).with(cd, static_cast<int>(k)));
        return tape_.weighted_sum(tape_.length(get(runs[0])), terms);
      };
      for (size_t u = 0; u < mixed.regs.size(); ++u)
        for (int vs = 0; vs < spec_.slots_per_reg(); ++vs)
          mixed.regs[u].slot[static_cast<size_t>(vs)] =
              mix([&](const CombRun& r) { return r.state.regs[u].slot[static_cast<size_t>(vs)]; });
      for (size_t k = 0; k < mixed.heap.size(); ++k) {
        mixed.heap[k].data = mix([&](const CombRun& r) { return r.state.heap[k].data; });
        mixed.heap[k].next = mix([&](const CombRun& r) { return r.state.heap[k].next; });
      }
      for (int vs = 0; vs < spec_.slots_per_reg(); ++vs)
        result.slot[static_cast<size_t>(vs)] =
            mix([&](const CombRun& r) { return r.result.slot[static_cast<size_t>(vs)]; });
    }

    if (spec_.immutable()) {
      mixed.regs[static_cast<size_t>(spec_.comb_out_reg())] = result;
    } else if (spec_.variant != Variant::AL) {
      const ad::NodeId od = params.slots[static_cast<size_t>(idx_combout_)];
      for (int u = 0; u < spec_.registers; ++u) {
        RegNodes& r = mixed.regs[static_cast<size_t>(u)];
        for (int vs = 0; vs < spec_.slots_per_reg(); ++vs) {
          const ad::NodeId old = r.slot[static_cast<size_t>(vs)];
          r.slot[static_cast<size_t>(vs)] = tape_.weighted_sum(
              tape_.length(old),
              {ad::Term(old), ad::Term(result.slot[static_cast<size_t>(vs)]).with(od, u),
               ad::Term(old, -1.0).with(od, u)});
        }
      }
    }
    s = std::move(mixed);
  }

  for (const Step& st : plan)
    if (st.kind == Step::Kind::Suffix) run_line(st);
  return s;
}

LiftedState LiftedMachine::assembly_step(const LiftedState& s, const ParamNodes& params, int t) {
  const int P = spec_.prog_len;
  const int R = spec_.registers;
  const int H = spec_.heap_cells;
  const int D = spec_.untyped_domain();
  const ad::NodeId c1 = cpoint(1, 0);
  const int iCons = static_cast<int>(Instr::Cons);
  const int iIte = static_cast<int>(Instr::Ite);
  const int iJz = static_cast<int>(Instr::Jz);
  const int iJnz = static_cast<int>(Instr::Jnz);
  const int iRet = static_cast<int>(Instr::Return);

  // Allocation result of cons at this step.
  const ad::NodeId consvec = has_mutable_sp(spec_.variant)
                                 ? tape_.table1(s.sp, tbl_sp_embed_)
                                 : cpoint(D, s.alloc_base + t);

  std::vector<ad::NodeId> instr(P), out(P), a1(P), a2(P), res(P), wmass(P), jump(P), fall(P),
      brpad(P);
  for (int p = 0; p < P; ++p) {
    instr[p] = params.slots[static_cast<size_t>(idx_instr_[p])];
    out[p] = params.slots[static_cast<size_t>(idx_out_[p])];
    const ad::NodeId a1d = params.slots[static_cast<size_t>(idx_arg1_[p])];
    const ad::NodeId a2d = params.slots[static_cast<size_t>(idx_arg2_[p])];
    a1[p] = mix_regs(s, nullptr, layout_.slots[static_cast<size_t>(idx_arg1_[p])], a1d).slot[0];
    a2[p] = mix_regs(s, nullptr, layout_.slots[static_cast<size_t>(idx_arg2_[p])], a2d).slot[0];
    RegNodes carg;
    carg.slot[0] = a1[p];
    const ad::NodeId gate = truth_gate(carg);

    std::vector<ad::Term> rt;
    std::vector<ad::Term> wt;
    rt.push_back(ad::Term(consvec).with(instr[p], iCons));
    gather_terms(rt, s, a1[p], false, {ad::Factor{instr[p], static_cast<int>(Instr::Head)}}, 1);
    gather_terms(rt, s, a1[p], true, {ad::Factor{instr[p], static_cast<int>(Instr::Tail)}}, 1);
    rt.push_back(ad::Term(tape_.table2(a1[p], a2[p], tbl_add_))
                     .with(instr[p], static_cast<int>(Instr::Add)));
    rt.push_back(
        ad::Term(tape_.table1(a1[p], tbl_inc_)).with(instr[p], static_cast<int>(Instr::Inc)));
    rt.push_back(
        ad::Term(tape_.table1(a1[p], tbl_dec_)).with(instr[p], static_cast<int>(Instr::Dec)));
    rt.push_back(ad::Term(tape_.table2(a1[p], a2[p], tbl_eq_))
                     .with(instr[p], static_cast<int>(Instr::Eq)));
    rt.push_back(ad::Term(tape_.table2(a1[p], a2[p], tbl_gt_))
                     .with(instr[p], static_cast<int>(Instr::Gt)));
    rt.push_back(ad::Term(tape_.table2(a1[p], a2[p], tbl_and_))
                     .with(instr[p], static_cast<int>(Instr::And)));
    rt.push_back(ad::Term(tape_.table2(a1[p], a2[p], tbl_or_))
                     .with(instr[p], static_cast<int>(Instr::Or)));
    rt.push_back(ad::Term(cpoint(D, 0)).with(instr[p], static_cast<int>(Instr::Zero)));
    rt.push_back(ad::Term(cpoint(D, 1)).with(instr[p], static_cast<int>(Instr::One)));
    // Conditional move: when arg1 is truthy the register takes arg2.
    rt.push_back(ad::Term(a2[p]).with(instr[p], iIte).with(gate, 1));
    res[p] = tape_.weighted_sum(D, rt);

    for (int i = 0; i <= static_cast<int>(Instr::One); ++i)
      wt.push_back(ad::Term(c1).with(instr[p], i));
    wt.push_back(ad::Term(c1).with(instr[p], iIte).with(gate, 1));
    wmass[p] = tape_.weighted_sum(1, wt);

    jump[p] = tape_.weighted_sum(
        1, {ad::Term(c1).with(instr[p], iJz).with(a1[p], 0), ad::Term(c1).with(instr[p], iJnz),
            ad::Term(c1, -1.0).with(instr[p], iJnz).with(a1[p], 0)});
    fall[p] = tape_.weighted_sum(
        1, {ad::Term(c1), ad::Term(jump[p], -1.0), ad::Term(c1, -1.0).with(instr[p], iRet)});
    brpad[p] = tape_.table1(params.slots[static_cast<size_t>(idx_branch_[p])], tbl_branch_pad_);
  }

  LiftedState ns = s;

  for (int u = 0; u < R; ++u) {
    std::vector<ad::Term> terms{ad::Term(s.regs[static_cast<size_t>(u)].slot[0])};
    for (int p = 0; p < P; ++p) {
      terms.push_back(ad::Term(res[p]).with(s.ip, p).with(out[p], u));
      terms.push_back(ad::Term(s.regs[static_cast<size_t>(u)].slot[0], -1.0)
                          .with(s.ip, p)
                          .with(out[p], u)
                          .with(wmass[p], 0));
    }
    ns.regs[static_cast<size_t>(u)].slot[0] = tape_.weighted_sum(D, terms);
  }

  if (has_mutable_sp(spec_.variant)) {
    // Every cell can be the allocation target; sp advances with the total
    // cons probability, so each cell sees at most unit write mass over time
    // and the update is again a disjoint accumulation.
    for (int k = 1; k <= H; ++k) {
      CellNodes& cell = ns.heap[static_cast<size_t>(k - 1)];
      std::vector<ad::Term> dterms{ad::Term(cell.data)};
      std::vector<ad::Term> nterms{ad::Term(cell.next)};
      for (int p = 0; p < P; ++p) {
        dterms.push_back(ad::Term(a1[p]).with(s.ip, p).with(instr[p], iCons).with(s.sp, k));
        dterms.push_back(
            ad::Term(cpoint(D, 0), -1.0).with(s.ip, p).with(instr[p], iCons).with(s.sp, k));
        nterms.push_back(ad::Term(a2[p]).with(s.ip, p).with(instr[p], iCons).with(s.sp, k));
        nterms.push_back(
            ad::Term(cpoint(D, 0), -1.0).with(s.ip, p).with(instr[p], iCons).with(s.sp, k));
      }
      cell.data = tape_.weighted_sum(D, dterms);
      cell.next = tape_.weighted_sum(D, nterms);
    }
    std::vector<ad::Term> cm;
    for (int p = 0; p < P; ++p) cm.push_back(ad::Term(c1).with(s.ip, p).with(instr[p], iCons));
    const ad::NodeId consmass = tape_.weighted_sum(1, cm);
    const ad::NodeId shifted = tape_.table1(s.sp, tbl_sp_shift_);
    ns.sp = tape_.weighted_sum(H + 2, {ad::Term(s.sp), ad::Term(shifted).with(consmass, 0),
                                       ad::Term(s.sp, -1.0).with(consmass, 0)});
  } else {
    CellNodes& cell = ns.heap[static_cast<size_t>(s.alloc_base + t - 1)];
    std::vector<ad::Term> dterms{ad::Term(cell.data)};
    std::vector<ad::Term> nterms{ad::Term(cell.next)};
    for (int p = 0; p < P; ++p) {
      dterms.push_back(ad::Term(a1[p]).with(s.ip, p).with(instr[p], iCons));
      dterms.push_back(ad::Term(cpoint(D, 0), -1.0).with(s.ip, p).with(instr[p], iCons));
      nterms.push_back(ad::Term(a2[p]).with(s.ip, p).with(instr[p], iCons));
      nterms.push_back(ad::Term(cpoint(D, 0), -1.0).with(s.ip, p).with(instr[p], iCons));
    }
    cell.data = tape_.weighted_sum(D, dterms);
    cell.next = tape_.weighted_sum(D, nterms);
  }

  std::vector<ad::Term> ipt;
  for (int p = 0; p < P; ++p) {
    ipt.push_back(ad::Term(cpoint(P + 1, p + 1)).with(s.ip, p).with(fall[p], 0));
    ipt.push_back(ad::Term(brpad[p]).with(s.ip, p).with(jump[p], 0));
    ipt.push_back(ad::Term(cpoint(P + 1, P)).with(s.ip, p).with(instr[p], iRet));
  }
  ipt.push_back(ad::Term(cpoint(P + 1, P)).with(s.ip, P));
  ns.ip = tape_.weighted_sum(P + 1, ipt);
  return ns;
}

LiftedState LiftedMachine::run_assembly(const ParamNodes& params,
                                        const std::vector<TaskValue>& inputs) {
  LiftedState s = initial_state(inputs);
  for (int t = 1; t <= spec_.timesteps; ++t) s = assembly_step(s, params, t);
  return s;
}

LiftedState LiftedMachine::run(const ParamNodes& params, const std::vector<TaskValue>& inputs) {
  if (params.slots.size() != layout_.slots.size())
    throw std::invalid_argument("run: parameter slot count mismatch");
  return spec_.assembly() ? run_assembly(params, inputs) : run_structured(params, inputs);
}

}  // namespace gradsynth
