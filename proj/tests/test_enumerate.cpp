#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <stdexcept>
#include <vector>

#include <gradsynth/discrete.hpp>
#include <gradsynth/enumerate.hpp>
#include <gradsynth/models.hpp>
#include <gradsynth/tasks.hpp>

using namespace gradsynth;

namespace {

bool consistent_with(const ModelSpec& spec, const ConcreteProgram& prog,
                     const std::vector<Example>& examples) {
  const ParamLayout layout = spec.layout();
  const DecodedProgram dp = decode(spec, layout, prog);
  for (const Example& ex : examples) {
    const ConcreteState s = discrete_run(spec, dp, ex.inputs);
    if (!(read_output(spec, s, ex.output.kind) == ex.output)) return false;
  }
  return true;
}

ConcreteProgram random_program(const ParamLayout& layout, std::mt19937_64& rng) {
  ConcreteProgram prog;
  for (const SlotDesc& s : layout.slots) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(s.choices.size()) - 1);
    prog.choice.push_back(pick(rng));
  }
  return prog;
}

std::vector<int> random_list(std::mt19937_64& rng, int max_len, int max_int) {
  std::uniform_int_distribution<int> len(1, max_len);
  std::uniform_int_distribution<int> val(0, max_int - 1);
  std::vector<int> xs(static_cast<size_t>(len(rng)));
  for (int& x : xs) x = val(rng);
  return xs;
}

}  // namespace

TEST_CASE("straight-line dup is found almost immediately") {
  const Task t = make_task("dupK", 1);
  const ModelSpec spec = make_preset("straightline", Variant::CTI, t.inputs);
  const ExampleSet ex = generate_examples(t, spec.max_int, spec.max_list_len, 1, 42);

  const EnumerationResult res = enumerate_programs(spec, ex.train, 1'000'000);
  REQUIRE(res.program.has_value());
  CHECK_FALSE(res.exhausted);
  CHECK(res.nodes < 10'000);  // a fraction of a millisecond of search
  CHECK(consistent_with(spec, *res.program, ex.train));
  CHECK(consistent_with(spec, *res.program, ex.test));
}

TEST_CASE("two-line loop body: len and sum are found within a million nodes") {
  for (const char* name : {"len", "sum"}) {
    CAPTURE(name);
    const Task t = make_task(name);
    const ModelSpec spec = make_preset("simple-loop", Variant::CTI, t.inputs);
    const ExampleSet ex = generate_examples(t, spec.max_int, spec.max_list_len, 1, 42);

    const EnumerationResult res = enumerate_programs(spec, ex.train, 1'000'000);
    REQUIRE(res.program.has_value());
    CHECK_FALSE(res.exhausted);
    CHECK(res.nodes <= 1'000'000);
    CHECK(consistent_with(spec, *res.program, ex.train));
    CHECK(consistent_with(spec, *res.program, ex.test));
  }
}

TEST_CASE("full loop template: rev, mapInc and mapAddK are found") {
  for (const char* name : {"rev", "mapInc", "mapAddK"}) {
    CAPTURE(name);
    const Task t = make_task(name);
    const ModelSpec spec = make_preset("loop", Variant::CTI, t.inputs);
    const ExampleSet ex = generate_examples(t, spec.max_int, spec.max_list_len, 1, 42);

    const EnumerationResult res = enumerate_programs(spec, ex.train, 40'000'000);
    REQUIRE(res.program.has_value());
    CHECK_FALSE(res.exhausted);
    CHECK(consistent_with(spec, *res.program, ex.train));
    CHECK(consistent_with(spec, *res.program, ex.test));
  }
}

TEST_CASE("contradictory examples scan the whole space and yield none") {
  const ModelSpec spec = make_preset("simple-loop", Variant::CTI, {ValueKind::Ptr});
  std::vector<Example> ex;
  ex.push_back({{TaskValue(std::vector<int>{1})}, TaskOutput::of_int(1)});
  ex.push_back({{TaskValue(std::vector<int>{1})}, TaskOutput::of_int(2)});

  const EnumerationResult res = enumerate_programs(spec, ex, 100'000'000);
  CHECK_FALSE(res.program.has_value());
  CHECK_FALSE(res.exhausted);  // definitive: the space ran out, not the budget
  CHECK(res.nodes > 0);
}

TEST_CASE("node budget cuts the search off and the cut is deterministic") {
  const Task t = make_task("len");
  const ModelSpec spec = make_preset("simple-loop", Variant::CTI, t.inputs);
  const ExampleSet ex = generate_examples(t, spec.max_int, spec.max_list_len, 1, 42);

  const EnumerationResult tiny = enumerate_programs(spec, ex.train, 10);
  CHECK_FALSE(tiny.program.has_value());
  CHECK(tiny.exhausted);
  CHECK(tiny.nodes == 10);

  const EnumerationResult a = enumerate_programs(spec, ex.train, 1'000'000);
  const EnumerationResult b = enumerate_programs(spec, ex.train, 1'000'000);
  REQUIRE(a.program.has_value());
  REQUIRE(b.program.has_value());
  CHECK(a.nodes == b.nodes);
  CHECK(a.program->choice == b.program->choice);
}

TEST_CASE("typed loop template: random witness programs keep their i/o reachable") {
  ModelSpec spec;
  spec.variant = Variant::CTI;
  spec.shape = {1, 1, 1};
  spec.inputs = {ValueKind::Ptr};
  spec.max_int = 8;
  spec.max_list_len = 3;
  spec.finalize();
  const ParamLayout layout = spec.layout();

  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 15; ++trial) {
    CAPTURE(trial);
    const ConcreteProgram witness = random_program(layout, rng);
    const DecodedProgram dp = decode(spec, layout, witness);
    std::vector<Example> ex;
    for (int e = 0; e < 4; ++e) {
      const TaskValue in = random_list(rng, spec.max_list_len, spec.max_int);
      const ConcreteState s = discrete_run(spec, dp, {in});
      ex.push_back({{in}, read_output(spec, s, OutputKind::Int)});
    }
    const EnumerationResult res = enumerate_programs(spec, ex, 50'000'000);
    REQUIRE(res.program.has_value());
    CHECK(consistent_with(spec, *res.program, ex));
  }
}

TEST_CASE("untyped loop template: random witness programs keep their i/o reachable") {
  ModelSpec spec;
  spec.variant = Variant::CI;
  spec.shape = {1, 1, 1};
  spec.inputs = {ValueKind::Ptr};
  spec.max_list_len = 3;
  spec.finalize();
  const ParamLayout layout = spec.layout();

  std::mt19937_64 rng(321);
  for (int trial = 0; trial < 10; ++trial) {
    CAPTURE(trial);
    const ConcreteProgram witness = random_program(layout, rng);
    const DecodedProgram dp = decode(spec, layout, witness);
    std::vector<Example> ex;
    for (int e = 0; e < 4; ++e) {
      const TaskValue in = random_list(rng, spec.max_list_len, 4);
      const ConcreteState s = discrete_run(spec, dp, {in});
      ex.push_back({{in}, read_output(spec, s, OutputKind::Int)});
    }
    const EnumerationResult res = enumerate_programs(spec, ex, 50'000'000);
    REQUIRE(res.program.has_value());
    CHECK(consistent_with(spec, *res.program, ex));
  }
}

TEST_CASE("assembly: forward scan with dead-slot pinning stays complete") {
  ModelSpec spec;
  spec.variant = Variant::A;
  spec.prog_len = 2;
  spec.timesteps = 2;
  spec.registers = 2;
  spec.inputs = {ValueKind::Int};
  spec.max_int = 8;
  spec.finalize();
  const ParamLayout layout = spec.layout();

  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> val(0, spec.max_int - 1);
  for (int trial = 0; trial < 10; ++trial) {
    CAPTURE(trial);
    const ConcreteProgram witness = random_program(layout, rng);
    const DecodedProgram dp = decode(spec, layout, witness);
    std::vector<Example> ex;
    for (int e = 0; e < 4; ++e) {
      const TaskValue in = val(rng);
      const ConcreteState s = discrete_run(spec, dp, {in});
      ex.push_back({{in}, read_output(spec, s, OutputKind::Int)});
    }
    const EnumerationResult res = enumerate_programs(spec, ex, 10'000'000);
    REQUIRE(res.program.has_value());
    CHECK(consistent_with(spec, *res.program, ex));
  }
}

TEST_CASE("foreach template: mutable loop witnesses stay reachable") {
  ModelSpec spec;
  spec.variant = Variant::AL;
  spec.shape = {0, 2, 0};
  spec.registers = 3;
  spec.inputs = {ValueKind::Ptr};
  spec.max_int = 8;
  spec.max_list_len = 3;
  spec.finalize();
  const ParamLayout layout = spec.layout();

  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    CAPTURE(trial);
    const ConcreteProgram witness = random_program(layout, rng);
    const DecodedProgram dp = decode(spec, layout, witness);
    std::vector<Example> ex;
    for (int e = 0; e < 4; ++e) {
      const TaskValue in = random_list(rng, spec.max_list_len, spec.max_int);
      const ConcreteState s = discrete_run(spec, dp, {in});
      ex.push_back({{in}, read_output(spec, s, OutputKind::Int)});
    }
    const EnumerationResult res = enumerate_programs(spec, ex, 10'000'000);
    REQUIRE(res.program.has_value());
    CHECK(consistent_with(spec, *res.program, ex));
  }
}

TEST_CASE("enumerate validates its inputs") {
  const Task t = make_task("len");
  const ModelSpec spec = make_preset("simple-loop", Variant::CTI, t.inputs);
  const ExampleSet ex = generate_examples(t, spec.max_int, spec.max_list_len, 1, 42);

  CHECK_THROWS_AS(enumerate_programs(spec, {}, 100), std::invalid_argument);
  CHECK_THROWS_AS(enumerate_programs(spec, ex.train, 0), std::invalid_argument);
}
