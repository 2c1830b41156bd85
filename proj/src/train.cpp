#include "gradsynth/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <random>
#include <span>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gradsynth/discrete.hpp"
#include "gradsynth/machine.hpp"
#include "gradsynth/observe.hpp"

namespace gradsynth {

namespace {

// Loss graph for one worker: built once, reused across restarts by resetting
// the logit leaves.
struct LossGraph {
  ad::Tape tape;
  ParamLayout layout;
  LiftedMachine machine;
  ParamGraph params;
  ad::NodeId loss;

  LossGraph(const ModelSpec& spec, const std::vector<Example>& train)
      : layout(spec.layout()),
        machine(tape, spec),
        params(make_param_graph(tape, layout)),
        loss(batch_loss(machine, params.dists, train)) {}
};

RestartResult run_restart(LossGraph& g, const ModelSpec& spec, const ExampleSet& examples,
                          const TrainConfig& cfg, uint64_t rseed) {
  RestartResult out;
  out.seed = rseed;

  const std::vector<ad::NodeId>& logits = g.params.logits;
  std::vector<size_t> offset(logits.size() + 1, 0);
  for (size_t i = 0; i < logits.size(); ++i)
    offset[i + 1] = offset[i] + static_cast<size_t>(g.tape.length(logits[i]));
  const size_t total = offset.back();

  std::vector<double> theta(total), grad(total), acc(total, 0.0);
  std::mt19937_64 rng(rseed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& x : theta) x = normal(rng);

  const auto push_theta = [&] {
    for (size_t i = 0; i < logits.size(); ++i)
      g.tape.set_leaf(logits[i], std::span<const double>(theta.data() + offset[i],
                                                         offset[i + 1] - offset[i]));
  };
  push_theta();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    g.tape.forward();
    const double loss = g.tape.scalar(g.loss);
    if (epoch == 0) out.first_loss = loss;
    if (!std::isfinite(loss)) {
      out.finite = false;
      out.final_loss = loss;
      return out;
    }
    g.tape.backward(g.loss);
    for (size_t i = 0; i < logits.size(); ++i) {
      const std::span<const double> a = g.tape.adjoint(logits[i]);
      std::copy(a.begin(), a.end(), grad.begin() + static_cast<ptrdiff_t>(offset[i]));
    }
    clip_gradient(grad, cfg.clip_norm);
    rmsprop_step(theta, acc, grad, cfg.learning_rate);
    push_theta();
  }

  g.tape.forward();
  out.final_loss = g.tape.scalar(g.loss);
  if (cfg.epochs == 0) out.first_loss = out.final_loss;
  if (!std::isfinite(out.final_loss)) {
    out.finite = false;
    return out;
  }
  out.zero_loss = out.final_loss < cfg.zero_loss_threshold;

  ParamValues values;
  values.slots.reserve(g.params.dists.slots.size());
  for (ad::NodeId d : g.params.dists.slots) {
    const std::span<const double> v = g.tape.value(d);
    Dist dist;
    dist.p.assign(v.begin(), v.end());
    values.slots.push_back(std::move(dist));
  }
  out.program = discretize(g.layout, values);
  out.train_solved = program_solves(spec, out.program, examples.train);
  out.test_solved = out.train_solved && program_solves(spec, out.program, examples.test);
  return out;
}

// A restart that throws (rather than diverging) still counts as a failure.
RestartResult guarded_restart(LossGraph& g, const ModelSpec& spec, const ExampleSet& examples,
                              const TrainConfig& cfg, uint64_t rseed) {
  try {
    return run_restart(g, spec, examples, cfg, rseed);
  } catch (const std::exception&) {
    RestartResult out;
    out.seed = rseed;
    out.finite = false;
    return out;
  }
}

RunResult aggregate(std::vector<RestartResult> restarts) {
  RunResult run;
  run.restarts = std::move(restarts);
  if (run.restarts.empty()) return run;
  int solved = 0;
  int zero = 0;
  for (size_t r = 0; r < run.restarts.size(); ++r) {
    const RestartResult& res = run.restarts[r];
    solved += res.test_solved ? 1 : 0;
    zero += res.zero_loss ? 1 : 0;
    if (res.finite && (run.best_restart < 0 ||
                       res.final_loss <
                           run.restarts[static_cast<size_t>(run.best_restart)].final_loss))
      run.best_restart = static_cast<int>(r);
  }
  const double n = static_cast<double>(run.restarts.size());
  run.success_ratio = solved / n;
  run.zero_loss_ratio = zero / n;
  return run;
}

std::vector<uint64_t> seeds_for(const ModelSpec& spec, const Task& task,
                                const TrainConfig& cfg) {
  std::vector<uint64_t> seeds(static_cast<size_t>(cfg.restarts));
  for (int r = 0; r < cfg.restarts; ++r)
    seeds[static_cast<size_t>(r)] =
        restart_seed(cfg.seed, variant_name(spec.variant), task.name, cfg.group, r);
  return seeds;
}

void check_config(const TrainConfig& cfg) {
  if (cfg.restarts <= 0) throw std::invalid_argument("train: restarts must be positive");
  if (cfg.epochs < 0) throw std::invalid_argument("train: epochs must be nonnegative");
  if (!(cfg.learning_rate > 0.0))
    throw std::invalid_argument("train: learning rate must be positive");
}

}  // namespace

uint64_t restart_seed(uint64_t base, std::string_view model, std::string_view task,
                      int group, int restart) {
  uint64_t h = fnv1a(base);
  h = fnv1a(model, h);
  h = fnv1a(task, h);
  h = fnv1a(static_cast<uint64_t>(group), h);
  h = fnv1a(static_cast<uint64_t>(restart), h);
  return h;
}

double clip_gradient(std::vector<double>& g, double max_norm) {
  double sq = 0.0;
  for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (double& x : g) x *= scale;
  }
  return norm;
}

void rmsprop_step(std::vector<double>& x, std::vector<double>& acc,
                  const std::vector<double>& g, double lr) {
  if (x.size() != acc.size() || x.size() != g.size())
    throw std::invalid_argument("rmsprop_step: size mismatch");
  for (size_t i = 0; i < x.size(); ++i) {
    acc[i] = 0.9 * acc[i] + 0.1 * g[i] * g[i];
    x[i] -= lr * g[i] / (std::sqrt(acc[i]) + 1e-8);
  }
}

bool program_solves(const ModelSpec& spec, const ConcreteProgram& prog,
                    const std::vector<Example>& examples) {
  const ParamLayout layout = spec.layout();
  const DecodedProgram decoded = decode(spec, layout, prog);
  for (const Example& ex : examples) {
    const ConcreteState s = discrete_run(spec, decoded, ex.inputs);
    if (!(read_output(spec, s, ex.output.kind) == ex.output)) return false;
  }
  return true;
}

RunResult train_run_serial(const ModelSpec& spec, const Task& task,
                           const ExampleSet& examples, const TrainConfig& cfg) {
  check_config(cfg);
  const std::vector<uint64_t> seeds = seeds_for(spec, task, cfg);
  std::vector<RestartResult> results(seeds.size());
  LossGraph graph(spec, examples.train);
  for (size_t r = 0; r < seeds.size(); ++r) {
    results[r] = guarded_restart(graph, spec, examples, cfg, seeds[r]);
    if (cfg.progress) cfg.progress(results[r], static_cast<int>(r));
  }
  return aggregate(std::move(results));
}

RunResult train_run(const ModelSpec& spec, const Task& task, const ExampleSet& examples,
                    const TrainConfig& cfg) {
  check_config(cfg);
  const std::vector<uint64_t> seeds = seeds_for(spec, task, cfg);
  std::vector<RestartResult> results(seeds.size());
  std::atomic<int> next{0};
  std::exception_ptr error = nullptr;
#ifdef _OPENMP
  const int jobs = cfg.jobs > 0 ? cfg.jobs : omp_get_max_threads();
#pragma omp parallel num_threads(jobs)
#endif
  {
    // Restarts are handed out through the shared counter (a dynamic schedule
    // that lets a failing worker leave without stranding the others at a
    // worksharing barrier).  Workers write disjoint result slots.
    try {
      LossGraph graph(spec, examples.train);
      for (int r; (r = next.fetch_add(1)) < cfg.restarts;) {
        results[static_cast<size_t>(r)] =
            guarded_restart(graph, spec, examples, cfg, seeds[static_cast<size_t>(r)]);
        if (cfg.progress) {
#ifdef _OPENMP
#pragma omp critical(gradsynth_train_progress)
#endif
          cfg.progress(results[static_cast<size_t>(r)], r);
        }
      }
    } catch (...) {
#ifdef _OPENMP
#pragma omp critical(gradsynth_train_error)
#endif
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return aggregate(std::move(results));
}

}  // namespace gradsynth
