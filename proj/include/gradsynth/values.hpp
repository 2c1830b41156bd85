#pragma once

// Small value-level vocabulary shared by the machine, tasks and training:
// discrete distributions over finite domains, and concrete task inputs and
// outputs (ints and int lists).

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace gradsynth {

// A distribution over the finite domain [0, n).
struct Dist {
  std::vector<double> p;

  Dist() = default;
  explicit Dist(std::vector<double> probs) : p(std::move(probs)) {}

  int n() const { return static_cast<int>(p.size()); }

  static Dist point(int n, int index) {
    if (index < 0 || index >= n) throw std::invalid_argument("Dist::point: index out of domain");
    Dist d;
    d.p.assign(static_cast<size_t>(n), 0.0);
    d.p[static_cast<size_t>(index)] = 1.0;
    return d;
  }

  static Dist uniform(int n) {
    Dist d;
    d.p.assign(static_cast<size_t>(n), 1.0 / n);
    return d;
  }

  // Mode of the distribution; ties resolve to the lowest index.
  int argmax() const {
    int best = 0;
    for (int k = 1; k < n(); ++k)
      if (p[static_cast<size_t>(k)] > p[static_cast<size_t>(best)]) best = k;
    return best;
  }

  double mass() const {
    double s = 0.0;
    for (double v : p) s += v;
    return s;
  }

  // Throws unless entries are non-negative and sum to 1 within tol.
  void validate(double tol = 1e-9) const {
    for (double v : p)
      if (v < -tol) throw std::invalid_argument("Dist: negative probability");
    if (std::abs(mass() - 1.0) > tol) throw std::invalid_argument("Dist: unnormalized");
  }
};

// The value domains a register or task input can carry.
enum class ValueKind { Int, Ptr, Bool };

// A task input: a machine integer or a list laid out on the heap.
using TaskValue = std::variant<int, std::vector<int>>;

enum class OutputKind { Int, Bool, List };

struct TaskOutput {
  OutputKind kind = OutputKind::Int;
  int scalar = 0;               // Int/Bool outputs (bool as 0/1)
  std::vector<int> list;        // List outputs

  static TaskOutput of_int(int v) { return {OutputKind::Int, v, {}}; }
  static TaskOutput of_bool(bool v) { return {OutputKind::Bool, v ? 1 : 0, {}}; }
  static TaskOutput of_list(std::vector<int> v) { return {OutputKind::List, 0, std::move(v)}; }

  bool operator==(const TaskOutput& o) const {
    if (kind != o.kind) return false;
    return kind == OutputKind::List ? list == o.list : scalar == o.scalar;
  }

  std::string to_string() const;
};

std::string to_string(const TaskValue& v);

// One input/output example.
struct Example {
  std::vector<TaskValue> inputs;
  TaskOutput output;
};

}  // namespace gradsynth
