#pragma once

// The benchmark task registry: reference semantics for each list/scalar task
// and deterministic example generation with disjoint train/test splits.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gradsynth/values.hpp"

namespace gradsynth {

struct Task {
  std::string name;
  std::vector<ValueKind> inputs;        // program input signature
  OutputKind output = OutputKind::Int;
  int k = -1;                           // construction-time parameter (dupK/getK)
  std::string preset;                   // the natural model preset for the task
};

// All task names, in registry order.
const std::vector<std::string>& task_names();

// Builds a task by name; `k` applies to the parameterized families (dupK: how
// many copies, getK: which element) and is ignored elsewhere.  Throws
// std::invalid_argument for unknown names.
Task make_task(const std::string& name, int k = 2);

// Ground-truth output for the given inputs.  Total on the generated domain;
// the generator keeps outputs within [0, max_int).
TaskOutput reference(const Task& t, const std::vector<TaskValue>& inputs);

struct ExampleSet {
  std::vector<Example> train;  // 5 examples
  std::vector<Example> test;   // 25 examples, inputs disjoint from train
};

// Deterministic per (task, k, group, seed).  Lengths are uniform in
// [1, max_list_len], elements are uniform, nonzero and leave headroom so no
// reference output overflows max_int; throws when the bounds make that
// impossible.
ExampleSet generate_examples(const Task& t, int max_int, int max_list_len, int group,
                             uint64_t seed);

// FNV-1a, the stable hash used to derive per-task and per-restart seeds.
inline uint64_t fnv1a(std::string_view s, uint64_t h = 14695981039346656037ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}
inline uint64_t fnv1a(uint64_t v, uint64_t h = 14695981039346656037ULL) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace gradsynth
