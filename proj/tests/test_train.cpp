#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "gradsynth/train.hpp"

using namespace gradsynth;

namespace {

// One immutable typed line with a scalar input: the smallest spec whose
// observation can demand a one-element list (the line must learn cons).
ModelSpec tiny_cons_spec() {
  ModelSpec spec;
  spec.variant = Variant::CTI;
  spec.shape = {1, 0, 0};
  spec.inputs = {ValueKind::Int};
  spec.max_int = 8;
  spec.max_list_len = 2;
  return spec.finalize();
}

ConcreteProgram program_with_instr(const ModelSpec& spec, Instr instr) {
  const ParamLayout layout = spec.layout();
  ConcreteProgram prog;
  prog.choice.assign(layout.slots.size(), 0);
  const int slot = layout.find(SlotKind::Instr, 0);
  REQUIRE(slot >= 0);
  const auto& choices = layout.slots[static_cast<size_t>(slot)].choices;
  const auto it = std::find(choices.begin(), choices.end(), static_cast<int>(instr));
  REQUIRE(it != choices.end());
  prog.choice[static_cast<size_t>(slot)] = static_cast<int>(it - choices.begin());
  return prog;
}

}  // namespace

TEST_CASE("restart seeds are stable and distinct across coordinates") {
  const uint64_t s = restart_seed(0, "cti", "len", 1, 0);
  CHECK(s == restart_seed(0, "cti", "len", 1, 0));
  CHECK(s != restart_seed(0, "cti", "len", 1, 1));
  CHECK(s != restart_seed(0, "cti", "len", 2, 0));
  CHECK(s != restart_seed(0, "cti", "sum", 1, 0));
  CHECK(s != restart_seed(0, "c", "len", 1, 0));
  CHECK(s != restart_seed(1, "cti", "len", 1, 0));
}

TEST_CASE("gradient clipping rescales to the ceiling") {
  std::vector<double> g{3.0, 4.0};
  CHECK(clip_gradient(g, 1.0) == doctest::Approx(5.0));
  CHECK(g[0] == doctest::Approx(0.6));
  CHECK(g[1] == doctest::Approx(0.8));

  std::vector<double> small{0.3, 0.0, -0.4};
  CHECK(clip_gradient(small, 1.0) == doctest::Approx(0.5));
  CHECK(small[0] == 0.3);  // below the ceiling: untouched
  CHECK(small[2] == -0.4);
}

TEST_CASE("rmsprop step matches the closed form") {
  std::vector<double> x{0.0, 1.0};
  std::vector<double> acc{0.0, 0.0};
  const std::vector<double> g{1.0, -2.0};
  rmsprop_step(x, acc, g, 0.1);
  CHECK(acc[0] == doctest::Approx(0.1));
  CHECK(acc[1] == doctest::Approx(0.4));
  CHECK(x[0] == doctest::Approx(-0.1 / (std::sqrt(0.1) + 1e-8)));
  CHECK(x[1] == doctest::Approx(1.0 + 0.2 / (std::sqrt(0.4) + 1e-8)));

  std::vector<double> bad{1.0};
  CHECK_THROWS_AS(rmsprop_step(bad, acc, g, 0.1), std::invalid_argument);
}

TEST_CASE("program_solves re-runs the discrete machine over the examples") {
  const ModelSpec spec = tiny_cons_spec();
  const Task task = make_task("dupK", 1);
  const ExampleSet ex = generate_examples(task, spec.max_int, spec.max_list_len, 1, 5);
  CHECK(program_solves(spec, program_with_instr(spec, Instr::Cons), ex.train));
  CHECK(program_solves(spec, program_with_instr(spec, Instr::Cons), ex.test));
  CHECK(!program_solves(spec, program_with_instr(spec, Instr::Noop), ex.train));
}

TEST_CASE("training learns a one-line cons program") {
  const ModelSpec spec = tiny_cons_spec();
  const Task task = make_task("dupK", 1);
  const ExampleSet ex = generate_examples(task, spec.max_int, spec.max_list_len, 1, 5);

  TrainConfig cfg;
  cfg.restarts = 3;
  cfg.epochs = 250;
  cfg.seed = 7;
  const RunResult run = train_run_serial(spec, task, ex, cfg);

  REQUIRE(run.restarts.size() == 3);
  for (const RestartResult& r : run.restarts) {
    CHECK(r.finite);
    CHECK(r.final_loss < r.first_loss);
    CHECK(r.train_solved);
    CHECK(r.test_solved);
  }
  CHECK(run.success_ratio == 1.0);
  CHECK(run.zero_loss_ratio == 1.0);
  CHECK(run.best_restart >= 0);

  const RestartResult& best = run.restarts[static_cast<size_t>(run.best_restart)];
  for (const RestartResult& r : run.restarts) {
    if (r.finite) CHECK(best.final_loss <= r.final_loss);
  }
}

TEST_CASE("parallel driver matches the serial reference bitwise") {
  const ModelSpec spec = tiny_cons_spec();
  const Task task = make_task("dupK", 1);
  const ExampleSet ex = generate_examples(task, spec.max_int, spec.max_list_len, 1, 9);

  TrainConfig cfg;
  cfg.restarts = 5;
  cfg.epochs = 60;
  cfg.seed = 11;
  cfg.jobs = 3;
  const RunResult par = train_run(spec, task, ex, cfg);
  cfg.jobs = 1;
  const RunResult one = train_run(spec, task, ex, cfg);
  const RunResult ser = train_run_serial(spec, task, ex, cfg);

  for (const RunResult* other : {&par, &one}) {
    REQUIRE(other->restarts.size() == ser.restarts.size());
    for (size_t r = 0; r < ser.restarts.size(); ++r) {
      const RestartResult& a = other->restarts[r];
      const RestartResult& b = ser.restarts[r];
      CHECK(a.seed == b.seed);
      CHECK(a.finite == b.finite);
      CHECK(a.first_loss == b.first_loss);  // bitwise: same seed, same graph
      CHECK(a.final_loss == b.final_loss);
      CHECK(a.zero_loss == b.zero_loss);
      CHECK(a.train_solved == b.train_solved);
      CHECK(a.test_solved == b.test_solved);
      CHECK(a.program.choice == b.program.choice);
    }
    CHECK(other->success_ratio == ser.success_ratio);
    CHECK(other->zero_loss_ratio == ser.zero_loss_ratio);
    CHECK(other->best_restart == ser.best_restart);
  }
}

TEST_CASE("progress reports every restart exactly once") {
  const ModelSpec spec = tiny_cons_spec();
  const Task task = make_task("dupK", 1);
  const ExampleSet ex = generate_examples(task, spec.max_int, spec.max_list_len, 1, 3);

  TrainConfig cfg;
  cfg.restarts = 4;
  cfg.epochs = 2;
  std::set<int> seen;
  cfg.progress = [&](const RestartResult&, int restart) { seen.insert(restart); };
  train_run(spec, task, ex, cfg);
  CHECK(seen == std::set<int>{0, 1, 2, 3});
}

TEST_CASE("a diverging restart is reported as a failure, not a crash") {
  const ModelSpec spec = tiny_cons_spec();
  const Task task = make_task("dupK", 1);
  const ExampleSet ex = generate_examples(task, spec.max_int, spec.max_list_len, 1, 3);

  TrainConfig cfg;
  cfg.restarts = 2;
  cfg.epochs = 3;
  cfg.learning_rate = 1e308;  // first step overflows the logits
  const RunResult run = train_run_serial(spec, task, ex, cfg);
  for (const RestartResult& r : run.restarts) {
    CHECK(!r.finite);
    CHECK(!r.test_solved);
  }
  CHECK(run.success_ratio == 0.0);
  CHECK(run.zero_loss_ratio == 0.0);
  CHECK(run.best_restart == -1);
}

TEST_CASE("zero-epoch runs still discretize the initialization") {
  const ModelSpec spec = tiny_cons_spec();
  const Task task = make_task("dupK", 1);
  const ExampleSet ex = generate_examples(task, spec.max_int, spec.max_list_len, 1, 3);

  TrainConfig cfg;
  cfg.restarts = 2;
  cfg.epochs = 0;
  const RunResult run = train_run_serial(spec, task, ex, cfg);
  for (const RestartResult& r : run.restarts) {
    CHECK(r.finite);
    CHECK(r.first_loss == r.final_loss);
    CHECK(r.program.choice.size() == spec.layout().slots.size());
  }
}

TEST_CASE("invalid configurations are rejected") {
  const ModelSpec spec = tiny_cons_spec();
  const Task task = make_task("dupK", 1);
  const ExampleSet ex = generate_examples(task, spec.max_int, spec.max_list_len, 1, 3);
  TrainConfig cfg;
  cfg.restarts = 0;
  CHECK_THROWS_AS(train_run_serial(spec, task, ex, cfg), std::invalid_argument);
  cfg.restarts = 1;
  cfg.epochs = -1;
  CHECK_THROWS_AS(train_run(spec, task, ex, cfg), std::invalid_argument);
  cfg.epochs = 1;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(train_run(spec, task, ex, cfg), std::invalid_argument);
}
