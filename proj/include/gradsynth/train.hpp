#pragma once

// Gradient-descent training: repeated random restarts of RMSProp over the
// lifted machine's batch loss, each followed by discretization and a discrete
// re-check against the train and test examples.

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "gradsynth/models.hpp"
#include "gradsynth/tasks.hpp"

namespace gradsynth {

// One gradient-descent run from a fresh random initialization.
struct RestartResult {
  uint64_t seed = 0;
  bool finite = true;         // false when the loss left the floating range
  double first_loss = 0.0;
  double final_loss = 0.0;
  bool zero_loss = false;     // final loss under the zero-loss threshold
  bool train_solved = false;  // discretized program reproduces the train set
  bool test_solved = false;   // ...and the held-out test set
  ConcreteProgram program;    // discretized at the end of the run
};

// Aggregate over the restarts of one (model, task, group) run.
struct RunResult {
  std::vector<RestartResult> restarts;
  double success_ratio = 0.0;    // fraction of restarts with test_solved
  double zero_loss_ratio = 0.0;  // fraction of restarts with zero_loss
  int best_restart = -1;         // lowest-loss finite restart; -1 when none
};

struct TrainConfig {
  int restarts = 20;
  int epochs = 1500;
  double learning_rate = 0.1;
  double clip_norm = 1.0;             // global L2 ceiling on each gradient
  double zero_loss_threshold = 1e-2;  // "training loss reached zero"
  int group = 1;                      // example group, mixed into restart seeds
  uint64_t seed = 0;                  // base seed; restarts derive their own
  int jobs = 0;                       // worker threads; 0 = library default
  // Called as restarts finish (possibly out of order, never concurrently).
  std::function<void(const RestartResult&, int restart)> progress;
};

// Stable per-restart seed; independent of worker count and schedule.
uint64_t restart_seed(uint64_t base, std::string_view model, std::string_view task,
                      int group, int restart);

// Scales `g` down to `max_norm` when its L2 norm exceeds it; returns the
// original norm.
double clip_gradient(std::vector<double>& g, double max_norm);

// One RMSProp update in place: acc := 0.9 acc + 0.1 g², x -= lr g/(√acc + 1e-8).
void rmsprop_step(std::vector<double>& x, std::vector<double>& acc,
                  const std::vector<double>& g, double lr);

// Runs the concrete program on every example; true when all outputs match.
bool program_solves(const ModelSpec& spec, const ConcreteProgram& prog,
                    const std::vector<Example>& examples);

// Trains cfg.restarts independent restarts and aggregates.  Restarts are
// distributed over OpenMP workers, one loss graph per worker; every restart
// depends only on its seed, so results are identical for any `jobs`.
RunResult train_run(const ModelSpec& spec, const Task& task, const ExampleSet& examples,
                    const TrainConfig& cfg);

// Plain-loop reference implementation kept for testing and benchmarks; must
// produce bit-identical results to train_run.
RunResult train_run_serial(const ModelSpec& spec, const Task& task,
                           const ExampleSet& examples, const TrainConfig& cfg);

}  // namespace gradsynth
