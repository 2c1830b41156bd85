#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "gradsynth/machine.hpp"

using namespace gradsynth;

namespace {

// Point-mass parameters with named-slot overrides, e.g. {{"L0.instr", cons}}.
ParamValues params_with(const ParamLayout& lay,
                        const std::vector<std::pair<std::string, int>>& assign) {
  ParamValues pv;
  for (const SlotDesc& s : lay.slots) pv.slots.push_back(Dist::point(s.choices.size(), 0));
  for (const auto& [name, value] : assign) {
    bool found = false;
    for (size_t i = 0; i < lay.slots.size(); ++i) {
      if (lay.slots[i].name != name) continue;
      const auto& ch = lay.slots[i].choices;
      const auto it = std::find(ch.begin(), ch.end(), value);
      REQUIRE(it != ch.end());
      pv.slots[i] = Dist::point(ch.size(), static_cast<int>(it - ch.begin()));
      found = true;
    }
    REQUIRE(found);
  }
  return pv;
}

std::vector<double> values_of(ad::Tape& t, ad::NodeId n) {
  const auto s = t.value(n);
  return {s.begin(), s.end()};
}

}  // namespace

TEST_CASE("lifted arithmetic through the machine tables") {
  ModelSpec spec = preset_straightline(Variant::CT, {ValueKind::Int, ValueKind::Int});
  ad::Tape tape;
  LiftedMachine m(tape, spec);
  const auto lay = spec.layout();
  // L0: r2 = add r0 r1
  auto pv = params_with(lay, {{"L0.instr", static_cast<int>(Instr::Add)},
                              {"L0.out", 2},
                              {"L0.arg1", 0},
                              {"L0.arg2", 1}});
  auto params = param_nodes_from_values(tape, lay, pv);
  auto fin = m.run(params, {TaskValue(15), TaskValue(9)});
  tape.forward();
  const auto r2 = values_of(tape, fin.regs[2][ValueKind::Int]);
  CHECK(r2[(15 + 9) % 20] == doctest::Approx(1.0).epsilon(1e-12));

  // Mixture linearity: a 50/50 mixture of add and gt yields half masses in
  // the int and bool slots.
  auto pv2 = pv;
  {
    const int idx = lay.find(SlotKind::Instr, 0);
    Dist d = Dist::point(lay.slots[idx].choices.size(), static_cast<int>(Instr::Add));
    d.p[static_cast<int>(Instr::Add)] = 0.5;
    d.p[static_cast<int>(Instr::Gt)] = 0.5;
    pv2.slots[idx] = d;
  }
  ad::Tape tape2;
  LiftedMachine m2(tape2, spec);
  auto params2 = param_nodes_from_values(tape2, spec.layout(), pv2);
  auto fin2 = m2.run(params2, {TaskValue(15), TaskValue(9)});
  tape2.forward();
  const auto i2 = values_of(tape2, fin2.regs[2][ValueKind::Int]);
  const auto b2 = values_of(tape2, fin2.regs[2][ValueKind::Bool]);
  CHECK(i2[4] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(i2[0] == doctest::Approx(0.5).epsilon(1e-12));  // gt writes zero into the int slot
  CHECK(b2[1] == doctest::Approx(0.5).epsilon(1e-12));  // 15 > 9
  CHECK(b2[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("head and eq on an encoded list") {
  ModelSpec spec;
  spec.variant = Variant::CTI;
  spec.shape = {0, 0, 2};
  spec.max_list_len = 4;
  spec.inputs = {ValueKind::Ptr};
  spec.finalize();
  ad::Tape tape;
  LiftedMachine m(tape, spec);
  const auto lay = spec.layout();
  // r1 = head r0; r2 = eq r1 r1
  auto pv = params_with(lay, {{"L0.instr", static_cast<int>(Instr::Head)},
                              {"L0.arg1", 0},
                              {"L1.instr", static_cast<int>(Instr::Eq)},
                              {"L1.arg1", 1},
                              {"L1.arg2", 1}});
  auto params = param_nodes_from_values(tape, lay, pv);
  auto fin = m.run(params, {TaskValue(std::vector<int>{7, 3})});
  tape.forward();
  const auto head = values_of(tape, fin.regs[1][ValueKind::Int]);
  CHECK(head[7] == doctest::Approx(1.0).epsilon(1e-12));
  const auto eq = values_of(tape, fin.regs[2][ValueKind::Bool]);
  CHECK(eq[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.observed(fin)[ValueKind::Bool] == fin.regs[2][ValueKind::Bool]);

  // Null list: head yields a point mass at zero.
  ad::Tape tape2;
  LiftedMachine m2(tape2, spec);
  auto params2 = param_nodes_from_values(tape2, spec.layout(), pv);
  auto fin2 = m2.run(params2, {TaskValue(std::vector<int>{})});
  tape2.forward();
  CHECK(values_of(tape2, fin2.regs[1][ValueKind::Int])[0] == doctest::Approx(1.0));
}

TEST_CASE("uncertain writes blur the heap as disjoint accumulation") {
  // Two straight-line steps, each a half-mass cons: step 1 pushes 1, step 2
  // pushes 2.  After both steps the first fresh cell holds {0: .25, 1: .5,
  // 2: .25} and the allocation pointer {1: .25, 2: .5, 3: .25}.
  ModelSpec spec;
  spec.variant = Variant::A;
  spec.prog_len = 2;
  spec.timesteps = 2;
  spec.registers = 3;
  spec.max_int = 4;  // shared domain {0..3}, three heap cells
  spec.inputs = {ValueKind::Int, ValueKind::Int};
  spec.finalize();
  REQUIRE(spec.heap_cells == 3);

  ad::Tape tape;
  LiftedMachine m(tape, spec);
  const auto lay = spec.layout();
  ParamValues pv = params_with(lay, {{"L0.out", 2},
                                     {"L0.arg1", 0},
                                     {"L1.out", 2},
                                     {"L1.arg1", 1}});
  for (int l = 0; l < 2; ++l) {
    const int idx = lay.find(SlotKind::Instr, l);
    Dist d(std::vector<double>(lay.slots[idx].choices.size(), 0.0));
    d.p[static_cast<int>(Instr::Cons)] = 0.5;
    d.p[static_cast<int>(Instr::Noop)] = 0.5;
    pv.slots[idx] = d;
  }
  auto params = param_nodes_from_values(tape, lay, pv);
  auto fin = m.run(params, {TaskValue(1), TaskValue(2)});
  tape.forward();

  const auto cell1 = values_of(tape, fin.heap[0].data);
  CHECK(cell1[0] == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(cell1[1] == doctest::Approx(0.50).epsilon(1e-9));
  CHECK(cell1[2] == doctest::Approx(0.25).epsilon(1e-9));

  const auto sp = values_of(tape, fin.sp);
  CHECK(sp[1] == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(sp[2] == doctest::Approx(0.50).epsilon(1e-9));
  CHECK(sp[3] == doctest::Approx(0.25).epsilon(1e-9));

  // The register written by the cons carries the allocation address blur:
  // {nothing: 0, one cons (either step): 1, both: 2}.
  const auto r2 = values_of(tape, fin.regs[2].slot[0]);
  CHECK(r2[0] == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(r2[1] == doctest::Approx(0.50).epsilon(1e-9));
  CHECK(r2[2] == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("fixed allocation ties the cell to the timestep") {
  ModelSpec spec;
  spec.variant = Variant::AF;
  spec.prog_len = 2;
  spec.timesteps = 2;
  spec.registers = 3;
  spec.inputs = {ValueKind::Ptr};
  spec.max_list_len = 2;
  spec.finalize();
  CHECK(spec.heap_cells == 2 + 2);

  ad::Tape tape;
  LiftedMachine m(tape, spec);
  const auto lay = spec.layout();
  // L0: r1 = cons r0 r0 (value is the list head address = 1, tail = the list)
  // L1: r2 = head r1
  auto pv = params_with(lay, {{"L0.instr", static_cast<int>(Instr::Cons)},
                              {"L0.out", 1},
                              {"L0.arg1", 0},
                              {"L0.arg2", 0},
                              {"L1.instr", static_cast<int>(Instr::Head)},
                              {"L1.out", 2},
                              {"L1.arg1", 1}});
  auto params = param_nodes_from_values(tape, lay, pv);
  auto fin = m.run(params, {TaskValue(std::vector<int>{1, 3})});
  tape.forward();
  // alloc_base = 2, step 1 allocates address 3.
  const auto r1 = values_of(tape, fin.regs[1].slot[0]);
  CHECK(r1[3] == doctest::Approx(1.0).epsilon(1e-12));
  const auto cell3 = values_of(tape, fin.heap[2].data);
  CHECK(cell3[1] == doctest::Approx(1.0).epsilon(1e-12));  // stored head address
  const auto r2 = values_of(tape, fin.regs[2].slot[0]);
  CHECK(r2[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("assembly jumps, return and halt accounting") {
  ModelSpec spec;
  spec.variant = Variant::AF;
  spec.prog_len = 3;
  spec.timesteps = 4;
  spec.registers = 2;
  spec.inputs = {ValueKind::Int};
  spec.max_int = 8;
  spec.heap_cells = 8;
  spec.finalize();

  ad::Tape tape;
  LiftedMachine m(tape, spec);
  const auto lay = spec.layout();
  SUBCASE("jnz loops until the counter hits zero") {
    // L0: r0 = dec r0; L1: jnz r0 -> L0; L2: r1 = one
    auto pv = params_with(lay, {{"L0.instr", static_cast<int>(Instr::Dec)},
                                {"L0.out", 0},
                                {"L0.arg1", 0},
                                {"L1.instr", static_cast<int>(Instr::Jnz)},
                                {"L1.arg1", 0},
                                {"L1.branch", 0},
                                {"L2.instr", static_cast<int>(Instr::One)},
                                {"L2.out", 1}});
    auto params = param_nodes_from_values(tape, lay, pv);
    auto fin = m.run(params, {TaskValue(2)});
    tape.forward();
    // Steps: dec(2->1), jnz taken, dec(1->0), jnz not taken. T ends at L2.
    const auto r0 = values_of(tape, fin.regs[0].slot[0]);
    CHECK(r0[0] == doctest::Approx(1.0).epsilon(1e-12));
    const auto ip = values_of(tape, fin.ip);
    CHECK(ip[2] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("return parks the machine on the halt state") {
    auto pv = params_with(lay, {{"L0.instr", static_cast<int>(Instr::One)},
                                {"L0.out", 1},
                                {"L1.instr", static_cast<int>(Instr::Return)},
                                {"L2.instr", static_cast<int>(Instr::Zero)},
                                {"L2.out", 1}});
    auto params = param_nodes_from_values(tape, lay, pv);
    auto fin = m.run(params, {TaskValue(3)});
    tape.forward();
    const auto ip = values_of(tape, fin.ip);
    CHECK(ip[3] == doctest::Approx(1.0).epsilon(1e-12));  // halted
    const auto r1 = values_of(tape, fin.regs[1].slot[0]);
    CHECK(r1[1] == doctest::Approx(1.0).epsilon(1e-12));  // L2 never ran
  }
}

TEST_CASE("structured combinators on point-mass programs") {
  SUBCASE("foldli add computes the sum") {
    ModelSpec spec = preset_simple_loop(Variant::CTI, {ValueKind::Ptr});
    ad::Tape tape;
    LiftedMachine m(tape, spec);
    const auto lay = spec.layout();
    const int ni = 1;
    const int ele1 = spec.pseudo_base(), acc = ele1 + 2;
    // body: c0 = add ele1 acc; c1 = ite one... keep it simple: c1 = add c0 zero
    auto pv = params_with(lay, {{"L0.instr", static_cast<int>(Instr::Add)},
                                {"L0.arg1", ele1},
                                {"L0.arg2", acc},
                                {"L1.instr", static_cast<int>(Instr::Add)},
                                {"L1.arg1", ni + spec.shape.prefix},  // c0
                                {"L1.arg2", acc}});
    // second line: c1 = add c0 acc would double-count; use ite to forward c0
    const int idx = lay.find(SlotKind::Instr, 1);
    pv.slots[idx] = Dist::point(lay.slots[idx].choices.size(), static_cast<int>(Instr::Ite));
    // ite cond defaults to r0 (a non-empty list pointer reads as... cond reads
    // the bool slot, which is zero for a pointer), so the else branch (arg2)
    // must carry c0.
    const int a1 = lay.find(SlotKind::Arg1, 1), a2 = lay.find(SlotKind::Arg2, 1);
    const auto& ch1 = lay.slots[a1].choices;
    const auto& ch2 = lay.slots[a2].choices;
    pv.slots[a1] = Dist::point(ch1.size(),
                               std::find(ch1.begin(), ch1.end(), ele1) - ch1.begin());
    pv.slots[a2] = Dist::point(ch2.size(),
                               std::find(ch2.begin(), ch2.end(), ni) - ch2.begin());
    // comb = foldli, list1 = r0, acc0 = r0 (pointer: int slot reads as 0)
    const int ci = lay.find(SlotKind::CombChoice, -1);
    const auto& cch = lay.slots[ci].choices;
    pv.slots[ci] = Dist::point(
        cch.size(), std::find(cch.begin(), cch.end(), static_cast<int>(Comb::Foldli)) -
                        cch.begin());
    auto params = param_nodes_from_values(tape, lay, pv);
    auto fin = m.run(params, {TaskValue(std::vector<int>{3, 4, 5})});
    tape.forward();
    // c1 forwards c0 = ele + acc each iteration: fold computes the sum.
    const auto out = values_of(tape, m.observed(fin)[ValueKind::Int]);
    CHECK(out[12] == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("mapi inc builds an appended list") {
    ModelSpec spec = preset_simple_loop(Variant::CTI, {ValueKind::Ptr});
    ad::Tape tape;
    LiftedMachine m(tape, spec);
    const auto lay = spec.layout();
    const int ele1 = spec.pseudo_base();
    auto pv = params_with(lay, {{"L0.instr", static_cast<int>(Instr::Inc)},
                                {"L0.arg1", ele1},
                                {"L1.instr", static_cast<int>(Instr::Ite)},
                                {"L1.arg2", 1 /* c0 id = ni + prefix = 1 */}});
    const int ci = lay.find(SlotKind::CombChoice, -1);
    const auto& cch = lay.slots[ci].choices;
    pv.slots[ci] = Dist::point(
        cch.size(),
        std::find(cch.begin(), cch.end(), static_cast<int>(Comb::Mapi)) - cch.begin());
    auto params = param_nodes_from_values(tape, lay, pv);
    auto fin = m.run(params, {TaskValue(std::vector<int>{7, 2})});
    tape.forward();
    // Output pointer: append base = alloc_base + T + 1 = 2 + 10 + 1 = 13.
    const auto outp = values_of(tape, m.observed(fin)[ValueKind::Ptr]);
    const int base = 2 + spec.timesteps + 1;
    CHECK(outp[base] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(values_of(tape, fin.heap[base - 1].data)[8] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(values_of(tape, fin.heap[base - 1].next)[base + 1] ==
          doctest::Approx(1.0).epsilon(1e-9));
    CHECK(values_of(tape, fin.heap[base].data)[3] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(values_of(tape, fin.heap[base].next)[0] == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("trainable parameter graph wires softmax over logits") {
  ModelSpec spec = preset_simple_loop(Variant::CTI, {ValueKind::Ptr});
  ad::Tape tape;
  const auto lay = spec.layout();
  ParamGraph g = make_param_graph(tape, lay);
  REQUIRE(g.logits.size() == lay.slots.size());
  tape.forward();
  for (size_t i = 0; i < g.dists.slots.size(); ++i) {
    const auto v = tape.value(g.dists.slots[i]);
    for (double p : v)
      CHECK(p == doctest::Approx(1.0 / static_cast<double>(v.size())).epsilon(1e-12));
  }
  CHECK(tape.param_leaves().size() == lay.slots.size());
}
