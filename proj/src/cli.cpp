#include "gradsynth/cli.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "gradsynth/enumerate.hpp"
#include "gradsynth/models.hpp"
#include "gradsynth/printer.hpp"
#include "gradsynth/tasks.hpp"
#include "gradsynth/train.hpp"

namespace gradsynth {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Accepts the variant letters in any casing with or without separators:
// "cti", "C+T+I", "c-t-i" all name the same model.
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

const char* variant_token(Variant v) {
  switch (v) {
    case Variant::A: return "a";
    case Variant::AF: return "af";
    case Variant::AL: return "al";
    case Variant::C: return "c";
    case Variant::CI: return "ci";
    case Variant::CT: return "ct";
    case Variant::CTI: return "cti";
  }
  return "?";
}

// dupK/getK are families; the token carries the parameter so records from
// different k values do not collide.
std::string task_token(const Task& t) {
  if (t.name == "dupK" || t.name == "getK") return t.name + "-k" + std::to_string(t.k);
  return t.name;
}

std::string format_ratio(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", r);
  return buf;
}

// --- spec construction ---------------------------------------------------

struct SpecOverrides {
  int max_int = 0, max_list_len = 0, registers = 0, prog_len = 0, timesteps = 0;
  int prefix = -1, body = -1, suffix = -1;

  bool any() const {
    return max_int || max_list_len || registers || prog_len || timesteps || prefix >= 0 ||
           body >= 0 || suffix >= 0;
  }

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--max-int", max_int, "Integer domain size M (0: preset default)");
    cmd->add_option("--max-list-len", max_list_len, "Longest input list (0: preset default)");
    cmd->add_option("--registers", registers, "Machine registers, mutable variants (0: preset)");
    cmd->add_option("--prog-len", prog_len, "Assembly program length (0: preset)");
    cmd->add_option("--timesteps", timesteps, "Assembly timesteps (0: preset)");
    cmd->add_option("--prefix", prefix, "Template prefix lines (-1: preset)");
    cmd->add_option("--body", body, "Template loop-body lines (-1: preset)");
    cmd->add_option("--suffix", suffix, "Template suffix lines (-1: preset)");
  }
};

ModelSpec build_spec(const std::string& preset, Variant v, const Task& t,
                     const SpecOverrides& o) {
  ModelSpec spec = make_preset(preset.empty() ? t.preset : preset, v, t.inputs);
  if (!o.any()) return spec;
  if (o.max_list_len) spec.max_list_len = o.max_list_len;
  if (o.registers) spec.registers = o.registers;
  if (is_assembly(v)) {
    if (o.prog_len) spec.prog_len = o.prog_len;
    if (o.timesteps) spec.timesteps = o.timesteps;
  } else {
    if (o.prefix >= 0) spec.shape.prefix = o.prefix;
    if (o.body >= 0) spec.shape.body = o.body;
    if (o.suffix >= 0) spec.shape.suffix = o.suffix;
  }
  // Re-derive what the preset computed from the old geometry.  Untyped
  // variants (other than A) take their integer domain from the heap size, so
  // it goes back to "derived" unless explicitly pinned.
  spec.heap_cells = 0;
  if (o.max_int)
    spec.max_int = o.max_int;
  else if (v != Variant::A && !is_typed(v))
    spec.max_int = 0;
  return spec.finalize();
}

// --- run -------------------------------------------------------------------

struct RunOpts {
  std::vector<std::string> models{"cti"};
  std::vector<std::string> tasks;
  int k = 2;
  std::string preset;
  int restarts = 20, groups = 1, epochs = 1500, jobs = 0;
  double lr = 0.1, clip = 1.0;
  uint64_t seed = 0;
  std::string out = "results";
  bool paper_scale = false;
  std::string config;
  SpecOverrides ov;
};

// Fills options the command line left untouched; explicit flags win.
// Unknown keys are an error so typos do not silently fall back to defaults.
void apply_config(const CLI::App* run, const json& cfg, RunOpts& o) {
  if (!cfg.is_object()) throw std::runtime_error("config must be an object or key=value lines");
  const auto fresh = [&](const char* flag, const char* key) {
    return cfg.contains(key) && run->count(std::string("--") + flag) == 0;
  };
  for (const auto& [key, value] : cfg.items()) {
    (void)value;
    static const char* known[] = {"model",    "task",   "k",        "preset",  "restarts",
                                  "groups",   "epochs", "jobs",     "lr",      "clip",
                                  "seed",     "out",    "paper-scale", "max-int",
                                  "max-list-len", "registers", "prog-len", "timesteps",
                                  "prefix",   "body",   "suffix"};
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return key == k; }) == std::end(known))
      throw std::runtime_error("unknown config key: " + key);
  }
  if (fresh("model", "model")) o.models = config_strings(cfg["model"]);
  if (fresh("task", "task")) o.tasks = config_strings(cfg["task"]);
  if (fresh("k", "k")) o.k = static_cast<int>(config_int(cfg["k"]));
  if (fresh("preset", "preset")) o.preset = cfg["preset"].get<std::string>();
  if (fresh("restarts", "restarts")) o.restarts = static_cast<int>(config_int(cfg["restarts"]));
  if (fresh("groups", "groups")) o.groups = static_cast<int>(config_int(cfg["groups"]));
  if (fresh("epochs", "epochs")) o.epochs = static_cast<int>(config_int(cfg["epochs"]));
  if (fresh("jobs", "jobs")) o.jobs = static_cast<int>(config_int(cfg["jobs"]));
  if (fresh("lr", "lr")) o.lr = config_double(cfg["lr"]);
  if (fresh("clip", "clip")) o.clip = config_double(cfg["clip"]);
  if (fresh("seed", "seed")) o.seed = static_cast<uint64_t>(config_int(cfg["seed"]));
  if (fresh("out", "out")) o.out = cfg["out"].get<std::string>();
  if (fresh("paper-scale", "paper-scale")) o.paper_scale = config_bool(cfg["paper-scale"]);
  if (fresh("max-int", "max-int")) o.ov.max_int = static_cast<int>(config_int(cfg["max-int"]));
  if (fresh("max-list-len", "max-list-len"))
    o.ov.max_list_len = static_cast<int>(config_int(cfg["max-list-len"]));
  if (fresh("registers", "registers"))
    o.ov.registers = static_cast<int>(config_int(cfg["registers"]));
  if (fresh("prog-len", "prog-len")) o.ov.prog_len = static_cast<int>(config_int(cfg["prog-len"]));
  if (fresh("timesteps", "timesteps"))
    o.ov.timesteps = static_cast<int>(config_int(cfg["timesteps"]));
  if (fresh("prefix", "prefix")) o.ov.prefix = static_cast<int>(config_int(cfg["prefix"]));
  if (fresh("body", "body")) o.ov.body = static_cast<int>(config_int(cfg["body"]));
  if (fresh("suffix", "suffix")) o.ov.suffix = static_cast<int>(config_int(cfg["suffix"]));
}

// Config files hold the run options as either a JSON object or plain
// `key = value` lines (with # comments); keys are the long flag names.
json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  const size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return json::parse(text);

  json cfg = json::object();
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    const auto trim = [](std::string s) {
      const size_t a = s.find_first_not_of(" \t\r");
      const size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    if (trim(line).empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line without '=': " + trim(line));
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    cfg[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

long long config_int(const json& v) {
  return v.is_string() ? std::stoll(v.get<std::string>()) : v.get<long long>();
}

double config_double(const json& v) {
  return v.is_string() ? std::stod(v.get<std::string>()) : v.get<double>();
}

bool config_bool(const json& v) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    return s == "1" || s == "true" || s == "yes" || s == "on";
  }
  return v.is_number() ? config_int(v) != 0 : v.get<bool>();
}

std::vector<std::string> config_strings(const json& v) {
  std::vector<std::string> out;
  if (v.is_array()) {
    for (const json& el : v) out.push_back(el.get<std::string>());
    return out;
  }
  std::istringstream ss(v.get<std::string>());
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<fs::path> record_files(const std::string& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("run_", 0) == 0 && name.size() > 5 &&
        name.compare(name.size() - 5, 5, ".json") == 0)
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// One CSV row per record, rebuilt from the JSON files so reruns never
// duplicate rows.
void rebuild_csv(const std::string& dir) {
  std::ofstream csv(fs::path(dir) / "results.csv");
  csv << "model,task,group,restarts,success_ratio,zero_loss_ratio\n";
  for (const fs::path& f : record_files(dir)) {
    std::ifstream in(f);
    json rec;
    try {
      in >> rec;
    } catch (const json::exception&) {
      std::cerr << "warning: skipping unreadable record " << f << "\n";
      continue;
    }
    csv << rec.value("model", "?") << ',' << rec.value("task", "?") << ','
        << rec.value("group", 0) << ',' << rec.value("restarts", 0) << ','
        << format_ratio(rec.value("success_ratio", 0.0)) << ','
        << format_ratio(rec.value("zero_loss_ratio", 0.0)) << '\n';
  }
}

int cmd_run(const RunOpts& opt) {
  fs::create_directories(opt.out);
  for (const std::string& mname : opt.models) {
    const Variant v = parse_variant(mname);
    for (const std::string& tname : opt.tasks) {
      const Task task = make_task(tname, opt.k);
      const std::string preset = opt.preset.empty() ? task.preset : opt.preset;
      const ModelSpec spec = build_spec(preset, v, task, opt.ov);
      const ParamLayout layout = spec.layout();
      for (int g = 1; g <= opt.groups; ++g) {
        const ExampleSet ex =
            generate_examples(task, spec.max_int, spec.max_list_len, g, opt.seed);
        TrainConfig cfg;
        cfg.restarts = opt.restarts;
        cfg.epochs = opt.epochs;
        cfg.learning_rate = opt.lr;
        cfg.clip_norm = opt.clip;
        cfg.group = g;
        cfg.seed = opt.seed;
        cfg.jobs = opt.jobs;
        const RunResult rr = train_run(spec, task, ex, cfg);

        json rec;
        rec["model"] = variant_token(v);
        rec["variant"] = variant_name(v);
        rec["task"] = task_token(task);
        rec["k"] = task.k;
        rec["preset"] = preset;
        rec["group"] = g;
        rec["seed"] = opt.seed;
        rec["restarts"] = static_cast<int>(rr.restarts.size());
        rec["epochs"] = opt.epochs;
        rec["success_ratio"] = rr.success_ratio;
        rec["zero_loss_ratio"] = rr.zero_loss_ratio;
        rec["best_restart"] = rr.best_restart;
        json restarts = json::array();
        int solved = -1;
        for (size_t i = 0; i < rr.restarts.size(); ++i) {
          const RestartResult& r = rr.restarts[i];
          restarts.push_back({{"seed", r.seed},
                              {"finite", r.finite},
                              {"first_loss", r.first_loss},
                              {"final_loss", r.final_loss},
                              {"zero_loss", r.zero_loss},
                              {"train_solved", r.train_solved},
                              {"test_solved", r.test_solved}});
          if (r.test_solved &&
              (solved < 0 || r.final_loss < rr.restarts[static_cast<size_t>(solved)].final_loss))
            solved = static_cast<int>(i);
        }
        rec["restart_results"] = std::move(restarts);

        const std::string stem =
            std::string(variant_token(v)) + "_" + task_token(task) + "_g" + std::to_string(g);
        if (solved >= 0) {
          const std::string text =
              print_program(spec, layout, rr.restarts[static_cast<size_t>(solved)].program);
          rec["program"] = text;
          std::ofstream(fs::path(opt.out) / ("prog_" + stem + ".txt")) << text;
        } else {
          rec["program"] = nullptr;
        }
        std::ofstream(fs::path(opt.out) / ("run_" + stem + ".json")) << rec.dump(2) << '\n';

        int solved_count = 0;
        for (const RestartResult& r : rr.restarts) solved_count += r.test_solved ? 1 : 0;
        std::cout << variant_token(v) << ' ' << task_token(task) << " g" << g << ": success "
                  << solved_count << '/' << rr.restarts.size() << " ("
                  << format_ratio(rr.success_ratio) << "), zero-loss "
                  << format_ratio(rr.zero_loss_ratio) << '\n';
      }
    }
  }
  rebuild_csv(opt.out);
  return 0;
}

// --- report ------------------------------------------------------------------

int cmd_report(const std::string& dir) {
  const std::vector<fs::path> files = record_files(dir);
  if (files.empty()) throw std::runtime_error("no run records (run_*.json) in " + dir);

  // task -> model token -> (ratio sum over groups, group count)
  std::map<std::string, std::map<std::string, std::pair<double, int>>> cells;
  for (const fs::path& f : files) {
    std::ifstream in(f);
    json rec;
    try {
      in >> rec;
    } catch (const json::exception&) {
      std::cerr << "warning: skipping unreadable record " << f << "\n";
      continue;
    }
    auto& cell = cells[rec.value("task", "?")][rec.value("model", "?")];
    cell.first += rec.value("success_ratio", 0.0);
    cell.second += 1;
  }

  static constexpr const char* kOrder[] = {"a", "af", "al", "c", "ci", "ct", "cti"};
  std::vector<std::string> columns;
  for (const char* tok : kOrder) {
    bool present = false;
    for (const auto& [task, models] : cells) present = present || models.count(tok) > 0;
    if (present) columns.push_back(tok);
  }

  std::ostringstream md;
  md << "| task |";
  for (const std::string& tok : columns) md << ' ' << variant_name(parse_variant(tok)) << " |";
  md << "\n|---|";
  for (size_t i = 0; i < columns.size(); ++i) md << "---:|";
  md << '\n';
  for (const auto& [task, models] : cells) {
    double best = -1.0;
    for (const auto& [tok, cell] : models) best = std::max(best, cell.first / cell.second);
    md << "| " << task << " |";
    for (const std::string& tok : columns) {
      const auto it = models.find(tok);
      if (it == models.end()) {
        md << " - |";
        continue;
      }
      const double mean = it->second.first / it->second.second;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", mean);
      if (mean >= best)
        md << " **" << buf << "** |";
      else
        md << ' ' << buf << " |";
    }
    md << '\n';
  }

  std::ofstream(fs::path(dir) / "report.md") << md.str();
  std::cout << md.str();
  return 0;
}

// --- enumerate ----------------------------------------------------------------

struct EnumOpts {
  std::vector<std::string> tasks;
  std::string model = "cti";
  int k = 2;
  std::string preset;
  uint64_t budget = 40'000'000;
  int group = 1;
  uint64_t seed = 0;
  std::string out = "results";
  bool programs = false;
  SpecOverrides ov;
};

int cmd_enumerate(const EnumOpts& opt) {
  const Variant v = parse_variant(opt.model);
  std::ofstream csv;
  if (!opt.out.empty()) {
    fs::create_directories(opt.out);
    csv.open(fs::path(opt.out) / "enumerate.csv");
    csv << "task,model,preset,budget,nodes,seconds,found,test_consistent\n";
  }
  std::cout << std::left << std::setw(16) << "task" << std::setw(7) << "found" << std::setw(17)
            << "test_consistent" << std::setw(13) << "nodes" << "seconds\n";
  for (const std::string& tname : opt.tasks) {
    const Task task = make_task(tname, opt.k);
    const std::string preset = opt.preset.empty() ? task.preset : opt.preset;
    const ModelSpec spec = build_spec(preset, v, task, opt.ov);
    const ExampleSet ex = generate_examples(task, spec.max_int, spec.max_list_len, opt.group,
                                            opt.seed);
    const auto t0 = std::chrono::steady_clock::now();
    const EnumerationResult res = enumerate_programs(spec, ex.train, opt.budget);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool found = res.program.has_value();
    const bool test_ok = found && program_solves(spec, *res.program, ex.test);
    std::ostringstream line;
    line << std::left << std::setw(16) << task_token(task) << std::setw(7) << (found ? 1 : 0)
         << std::setw(17) << (test_ok ? 1 : 0) << std::setw(13) << res.nodes << std::fixed
         << std::setprecision(2) << secs << (res.exhausted ? "  (budget exhausted)" : "");
    std::cout << line.str() << '\n';
    if (opt.programs && found)
      std::cout << print_program(spec, spec.layout(), *res.program) << '\n';
    if (csv.is_open())
      csv << task_token(task) << ',' << variant_token(v) << ',' << preset << ',' << opt.budget
          << ',' << res.nodes << ',' << format_ratio(secs) << ',' << (found ? 1 : 0) << ','
          << (test_ok ? 1 : 0) << '\n';
  }
  return 0;
}

}  // namespace

int run_cli(std::vector<std::string> args) {
  CLI::App app{"Program synthesis from input/output examples: gradient descent over a "
               "differentiable interpreter, with a discrete oracle and an enumerative baseline",
               "gradsynth"};
  app.require_subcommand(1);
  int rc = 0;

  RunOpts ro;
  CLI::App* run = app.add_subcommand("run", "Train models on tasks and record success ratios");
  run->set_config("--config", "", "Declarative config file (key=value lines)");
  run->add_option("-m,--model", ro.models, "Model variants: a, af, al, c, ci, ct, cti")
      ->capture_default_str();
  run->add_option("-t,--task", ro.tasks, "Task names (see the `tasks` subcommand)")->required();
  run->add_option("--k", ro.k, "Parameter for the dupK/getK families")->capture_default_str();
  run->add_option("--preset", ro.preset,
                  "Model preset: straightline, simple-loop, loop (default: the task's own)");
  run->add_option("--restarts", ro.restarts, "Random restarts per cell")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  run->add_option("--groups", ro.groups, "Example groups (independent example draws)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  run->add_option("--epochs", ro.epochs, "Training epochs per restart")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  run->add_option("--jobs", ro.jobs, "Worker threads (0 = all cores)")->capture_default_str();
  run->add_option("--lr", ro.lr, "Learning rate")->capture_default_str();
  run->add_option("--clip", ro.clip, "Gradient clipping norm")->capture_default_str();
  run->add_option("--seed", ro.seed, "Base seed for all randomness")->capture_default_str();
  run->add_option("-o,--out", ro.out, "Output directory")->capture_default_str();
  run->add_flag("--paper-scale", ro.paper_scale,
                "Full protocol: 100 restarts x 3 groups x 3500 epochs");
  ro.ov.add_flags(run);
  run->callback([&] {
    if (ro.paper_scale) {
      if (!run->count("--restarts")) ro.restarts = 100;
      if (!run->count("--groups")) ro.groups = 3;
      if (!run->count("--epochs")) ro.epochs = 3500;
    }
    rc = cmd_run(ro);
  });

  std::string report_dir = "results";
  CLI::App* report = app.add_subcommand("report", "Render collected records as a markdown table");
  report->add_option("dir", report_dir, "Directory with run_*.json records")
      ->capture_default_str();
  report->callback([&] { rc = cmd_report(report_dir); });

  EnumOpts eo;
  CLI::App* enumerate =
      app.add_subcommand("enumerate", "Search for consistent programs; reports 1/0 per task");
  enumerate->add_option("-t,--task", eo.tasks, "Task names")->required();
  enumerate->add_option("-m,--model", eo.model, "Model variant")->capture_default_str();
  enumerate->add_option("--k", eo.k, "Parameter for the dupK/getK families")
      ->capture_default_str();
  enumerate->add_option("--preset", eo.preset, "Model preset (default: the task's own)");
  enumerate->add_option("--budget", eo.budget, "Node budget (assignments + evaluations)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  enumerate->add_option("--group", eo.group, "Example group")->capture_default_str();
  enumerate->add_option("--seed", eo.seed, "Example generation seed")->capture_default_str();
  enumerate->add_option("-o,--out", eo.out, "Directory for enumerate.csv ('' disables)")
      ->capture_default_str();
  enumerate->add_flag("--programs", eo.programs, "Print each found program");
  eo.ov.add_flags(enumerate);
  enumerate->callback([&] { rc = cmd_enumerate(eo); });

  CLI::App* tasks = app.add_subcommand("tasks", "List the benchmark tasks");
  tasks->callback([&] {
    for (const std::string& name : task_names()) std::cout << name << '\n';
  });

  try {
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return rc;
}

int run_cli(int argc, char** argv) {
  return run_cli(std::vector<std::string>(argv + 1, argv + argc));
}

}  // namespace gradsynth
