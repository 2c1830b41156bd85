#include "gradsynth/tasks.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>

namespace gradsynth {

namespace {

constexpr ValueKind kI = ValueKind::Int;
constexpr ValueKind kP = ValueKind::Ptr;

const std::vector<int>& list_arg(const std::vector<TaskValue>& in, size_t i) {
  return std::get<std::vector<int>>(in.at(i));
}
int int_arg(const std::vector<TaskValue>& in, size_t i) { return std::get<int>(in.at(i)); }

}  // namespace

const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names{
      "dupK",    "getK",        "len",    "rev",  "sum",
      "allGtK",  "exGtK",       "findLastIdx", "getIdx", "last2",
      "mapAddK", "mapInc",      "max",    "pairwiseSum", "revMapInc"};
  return names;
}

Task make_task(const std::string& name, int k) {
  Task t;
  t.name = name;
  t.k = k;
  if (name == "dupK") {
    t.inputs = {kI};
    t.output = OutputKind::List;
    t.preset = "straightline";
  } else if (name == "getK") {
    t.inputs = {kP};
    t.output = OutputKind::Int;
    t.preset = "straightline";
  } else if (name == "len" || name == "sum") {
    t.inputs = {kP};
    t.output = OutputKind::Int;
    t.preset = "simple-loop";
    t.k = -1;
  } else if (name == "rev") {
    t.inputs = {kP};
    t.output = OutputKind::List;
    t.preset = "simple-loop";
    t.k = -1;
  } else if (name == "allGtK" || name == "exGtK") {
    t.inputs = {kP, kI};
    t.output = OutputKind::Bool;
    t.preset = "loop";
    t.k = -1;
  } else if (name == "findLastIdx" || name == "getIdx") {
    t.inputs = {kP, kI};
    t.output = OutputKind::Int;
    t.preset = "loop";
    t.k = -1;
  } else if (name == "last2" || name == "max") {
    t.inputs = {kP};
    t.output = OutputKind::Int;
    t.preset = "loop";
    t.k = -1;
  } else if (name == "mapAddK") {
    t.inputs = {kP, kI};
    t.output = OutputKind::List;
    t.preset = "loop";
    t.k = -1;
  } else if (name == "mapInc" || name == "revMapInc") {
    t.inputs = {kP};
    t.output = OutputKind::List;
    t.preset = "loop";
    t.k = -1;
  } else if (name == "pairwiseSum") {
    t.inputs = {kP, kP};
    t.output = OutputKind::List;
    t.preset = "loop";
    t.k = -1;
  } else {
    throw std::invalid_argument("make_task: unknown task " + name);
  }
  return t;
}

TaskOutput reference(const Task& t, const std::vector<TaskValue>& in) {
  if (t.name == "dupK")
    return TaskOutput::of_list(std::vector<int>(static_cast<size_t>(t.k), int_arg(in, 0)));
  if (t.name == "getK") return TaskOutput::of_int(list_arg(in, 0).at(static_cast<size_t>(t.k)));
  if (t.name == "len") return TaskOutput::of_int(static_cast<int>(list_arg(in, 0).size()));
  if (t.name == "rev") {
    std::vector<int> xs = list_arg(in, 0);
    std::reverse(xs.begin(), xs.end());
    return TaskOutput::of_list(std::move(xs));
  }
  if (t.name == "sum") {
    int s = 0;
    for (int x : list_arg(in, 0)) s += x;
    return TaskOutput::of_int(s);
  }
  if (t.name == "allGtK") {
    const int k = int_arg(in, 1);
    return TaskOutput::of_bool(std::all_of(list_arg(in, 0).begin(), list_arg(in, 0).end(),
                                           [&](int x) { return x > k; }));
  }
  if (t.name == "exGtK") {
    const int k = int_arg(in, 1);
    return TaskOutput::of_bool(std::any_of(list_arg(in, 0).begin(), list_arg(in, 0).end(),
                                           [&](int x) { return x > k; }));
  }
  if (t.name == "findLastIdx") {
    const auto& xs = list_arg(in, 0);
    const int v = int_arg(in, 1);
    int idx = -1;
    for (size_t i = 0; i < xs.size(); ++i)
      if (xs[i] == v) idx = static_cast<int>(i);
    if (idx < 0) throw std::invalid_argument("findLastIdx: value not present");
    return TaskOutput::of_int(idx);
  }
  if (t.name == "getIdx") return TaskOutput::of_int(list_arg(in, 0).at(
      static_cast<size_t>(int_arg(in, 1))));
  if (t.name == "last2") {
    const auto& xs = list_arg(in, 0);
    if (xs.size() < 2) throw std::invalid_argument("last2: list shorter than two");
    return TaskOutput::of_int(xs[xs.size() - 2]);
  }
  if (t.name == "mapAddK") {
    std::vector<int> xs = list_arg(in, 0);
    for (int& x : xs) x += int_arg(in, 1);
    return TaskOutput::of_list(std::move(xs));
  }
  if (t.name == "mapInc") {
    std::vector<int> xs = list_arg(in, 0);
    for (int& x : xs) x += 1;
    return TaskOutput::of_list(std::move(xs));
  }
  if (t.name == "max") {
    const auto& xs = list_arg(in, 0);
    if (xs.empty()) throw std::invalid_argument("max: empty list");
    return TaskOutput::of_int(*std::max_element(xs.begin(), xs.end()));
  }
  if (t.name == "pairwiseSum") {
    const auto& a = list_arg(in, 0);
    const auto& b = list_arg(in, 1);
    if (a.size() != b.size()) throw std::invalid_argument("pairwiseSum: length mismatch");
    std::vector<int> out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return TaskOutput::of_list(std::move(out));
  }
  if (t.name == "revMapInc") {
    std::vector<int> xs = list_arg(in, 0);
    std::reverse(xs.begin(), xs.end());
    for (int& x : xs) x += 1;
    return TaskOutput::of_list(std::move(xs));
  }
  throw std::invalid_argument("reference: unknown task " + t.name);
}

namespace {

struct Gen {
  const Task& task;
  const int M;
  const int maxlen;
  std::mt19937_64 rng;

  int uniform(int lo, int hi) {  // inclusive bounds
    if (lo > hi) throw std::invalid_argument("generate_examples: bounds leave no headroom for " +
                                             task.name);
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  }
  std::vector<int> list(int len, int lo, int hi) {
    std::vector<int> xs(static_cast<size_t>(len));
    for (int& x : xs) x = uniform(lo, hi);
    return xs;
  }

  std::vector<TaskValue> sample() {
    const std::string& n = task.name;
    if (n == "dupK") {
      if (task.k < 1 || task.k > maxlen)
        throw std::invalid_argument("generate_examples: dupK count outside the list bound");
      return {TaskValue(uniform(1, M - 1))};
    }
    if (n == "getK") {
      if (task.k < 0 || task.k + 1 > maxlen)
        throw std::invalid_argument("generate_examples: getK index outside the list bound");
      return {TaskValue(list(uniform(task.k + 1, maxlen), 1, M - 1))};
    }
    if (n == "len" || n == "rev" || n == "max")
      return {TaskValue(list(uniform(1, maxlen), 1, M - 1))};
    if (n == "sum") {
      const int len = uniform(1, maxlen);
      return {TaskValue(list(len, 1, (M - 1) / len))};
    }
    if (n == "allGtK") {
      const int k = uniform(1, M - 2);
      std::vector<int> xs;
      if (uniform(0, 1) == 1) {
        xs = list(uniform(1, maxlen), k + 1, M - 1);  // all above the threshold
      } else {
        xs = list(uniform(1, maxlen), 1, M - 1);
        xs[static_cast<size_t>(uniform(0, static_cast<int>(xs.size()) - 1))] = uniform(1, k);
      }
      return {TaskValue(std::move(xs)), TaskValue(k)};
    }
    if (n == "exGtK") {
      const int k = uniform(1, M - 2);
      std::vector<int> xs;
      if (uniform(0, 1) == 1) {
        xs = list(uniform(1, maxlen), 1, M - 1);
        xs[static_cast<size_t>(uniform(0, static_cast<int>(xs.size()) - 1))] =
            uniform(k + 1, M - 1);  // at least one above
      } else {
        xs = list(uniform(1, maxlen), 1, k);  // all at or below
      }
      return {TaskValue(std::move(xs)), TaskValue(k)};
    }
    if (n == "findLastIdx") {
      std::vector<int> xs = list(uniform(1, maxlen), 1, M - 1);
      const int v = xs[static_cast<size_t>(uniform(0, static_cast<int>(xs.size()) - 1))];
      return {TaskValue(std::move(xs)), TaskValue(v)};
    }
    if (n == "getIdx") {
      std::vector<int> xs = list(uniform(1, maxlen), 1, M - 1);
      const int i = uniform(0, static_cast<int>(xs.size()) - 1);
      return {TaskValue(std::move(xs)), TaskValue(i)};
    }
    if (n == "last2") return {TaskValue(list(uniform(2, maxlen), 1, M - 1))};
    if (n == "mapAddK") {
      const int k = uniform(1, M - 2);
      return {TaskValue(list(uniform(1, maxlen), 1, M - 1 - k)), TaskValue(k)};
    }
    if (n == "mapInc" || n == "revMapInc")
      return {TaskValue(list(uniform(1, maxlen), 1, M - 2))};
    if (n == "pairwiseSum") {
      const int len = uniform(1, maxlen);
      const int hi = (M - 1) / 2;
      return {TaskValue(list(len, 1, hi)), TaskValue(list(len, 1, hi))};
    }
    throw std::invalid_argument("generate_examples: unknown task " + n);
  }
};

std::string input_key(const std::vector<TaskValue>& inputs) {
  std::string key;
  for (const TaskValue& v : inputs) key += to_string(v) + ";";
  return key;
}

}  // namespace

ExampleSet generate_examples(const Task& t, int max_int, int max_list_len, int group,
                             uint64_t seed) {
  if (max_int < 3) throw std::invalid_argument("generate_examples: max_int too small");
  if (max_list_len < 1) throw std::invalid_argument("generate_examples: empty list bound");

  uint64_t h = fnv1a(t.name);
  h = fnv1a(static_cast<uint64_t>(t.k), h);
  h = fnv1a(static_cast<uint64_t>(group), h);
  h = fnv1a(seed, h);
  Gen gen{t, max_int, max_list_len, std::mt19937_64(h)};

  ExampleSet set;
  std::set<std::string> train_keys;
  const auto draw = [&](bool train) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      std::vector<TaskValue> inputs = gen.sample();
      const std::string key = input_key(inputs);
      // Train inputs are mutually distinct; test inputs only avoid the train
      // set (tiny input domains could not fill 25 distinct test examples).
      if (train_keys.count(key) > 0) continue;
      if (train) train_keys.insert(key);
      TaskOutput out = reference(t, inputs);
      const auto in_domain = [&](int v) { return v >= 0 && v < max_int; };
      for (const TaskValue& v : inputs) {
        const bool ok = std::holds_alternative<int>(v)
                            ? in_domain(std::get<int>(v))
                            : std::all_of(std::get<std::vector<int>>(v).begin(),
                                          std::get<std::vector<int>>(v).end(), in_domain);
        if (!ok) throw std::invalid_argument("generate_examples: input overflows max_int");
      }
      if (out.kind == OutputKind::List) {
        if (!std::all_of(out.list.begin(), out.list.end(), in_domain))
          throw std::invalid_argument("generate_examples: output overflows max_int");
      } else if (!in_domain(out.scalar)) {
        throw std::invalid_argument("generate_examples: output overflows max_int");
      }
      return Example{std::move(inputs), std::move(out)};
    }
    throw std::invalid_argument("generate_examples: input domain too small for " + t.name);
  };
  for (int i = 0; i < 5; ++i) set.train.push_back(draw(true));
  for (int i = 0; i < 25; ++i) set.test.push_back(draw(false));
  return set;
}

}  // namespace gradsynth
