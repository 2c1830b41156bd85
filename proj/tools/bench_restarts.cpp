// Benchmarks the parallel restart runner against the serial reference and
// checks that both produce bit-identical results.

#include <cctype>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <gradsynth/models.hpp>
#include <gradsynth/tasks.hpp>
#include <gradsynth/train.hpp>

using namespace gradsynth;

namespace {

// Same tolerant spelling the main CLI accepts: "cti", "C+T+I", "c-t-i", ...
Variant parse_variant(const std::string& name) {
  std::string s;
  for (char c : name) {
    if (c == '+' || c == '-' || c == '_' || c == ' ') continue;
    s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (s == "a") return Variant::A;
  if (s == "af") return Variant::AF;
  if (s == "al") return Variant::AL;
  if (s == "c") return Variant::C;
  if (s == "ci") return Variant::CI;
  if (s == "ct") return Variant::CT;
  if (s == "cti" || s == "ctpi") return Variant::CTI;
  throw std::invalid_argument("unknown model variant: " + name);
}

bool identical(const RunResult& a, const RunResult& b) {
  if (a.success_ratio != b.success_ratio || a.zero_loss_ratio != b.zero_loss_ratio ||
      a.best_restart != b.best_restart || a.restarts.size() != b.restarts.size())
    return false;
  for (size_t i = 0; i < a.restarts.size(); ++i) {
    const RestartResult& x = a.restarts[i];
    const RestartResult& y = b.restarts[i];
    if (x.seed != y.seed || x.finite != y.finite || x.first_loss != y.first_loss ||
        x.final_loss != y.final_loss || x.zero_loss != y.zero_loss ||
        x.train_solved != y.train_solved || x.test_solved != y.test_solved ||
        x.program.choice != y.program.choice)
      return false;
  }
  return true;
}

template <typename F>
double timed(F&& f, RunResult& out) {
  const auto t0 = std::chrono::steady_clock::now();
  out = f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  std::string model = "cti", task_name = "len", preset;
  int k = 2, restarts = 20, epochs = 200, group = 1, jobs = 0;
  uint64_t seed = 0;

  CLI::App app{"Times serial vs parallel restart training and verifies equality"};
  app.add_option("-m,--model", model, "Model variant")->capture_default_str();
  app.add_option("-t,--task", task_name, "Task name")->capture_default_str();
  app.add_option("--preset", preset, "Model preset (default: the task's own)");
  app.add_option("--k", k, "Parameter for the dupK/getK families")->capture_default_str();
  app.add_option("--restarts", restarts, "Random restarts")->capture_default_str();
  app.add_option("--epochs", epochs, "Epochs per restart")->capture_default_str();
  app.add_option("--group", group, "Example group")->capture_default_str();
  app.add_option("--jobs", jobs, "Parallel workers (0 = all cores)")->capture_default_str();
  app.add_option("--seed", seed, "Base seed")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    const Task task = make_task(task_name, k);
    const std::string preset_name = preset.empty() ? task.preset : preset;
    const ModelSpec spec = make_preset(preset_name, parse_variant(model), task.inputs);

    const ExampleSet ex = generate_examples(task, spec.max_int, spec.max_list_len, group, seed);
    TrainConfig cfg;
    cfg.restarts = restarts;
    cfg.epochs = epochs;
    cfg.group = group;
    cfg.seed = seed;
    cfg.jobs = jobs;

    std::printf("%s on %s (%s preset): %d restarts x %d epochs\n", variant_name(spec.variant),
                task_name.c_str(), preset_name.c_str(), restarts, epochs);

    RunResult serial, parallel;
    const double t_serial = timed([&] { return train_run_serial(spec, task, ex, cfg); }, serial);
    const double t_parallel = timed([&] { return train_run(spec, task, ex, cfg); }, parallel);

    std::printf("serial:   %8.3f s\n", t_serial);
    std::printf("parallel: %8.3f s  (speedup %.2fx)\n", t_parallel,
                t_parallel > 0 ? t_serial / t_parallel : 0.0);

    if (!identical(serial, parallel)) {
      std::printf("MISMATCH: parallel results differ from the serial reference\n");
      return 1;
    }
    std::printf("results identical: yes (%zu restarts, success %.4f)\n", serial.restarts.size(),
                serial.success_ratio);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
