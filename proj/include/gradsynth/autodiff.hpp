#pragma once

// Reverse-mode automatic differentiation over dense probability vectors.
//
// The interpreter graphs built on top of this are almost entirely multilinear
// mixtures, so the op set is small: weighted sums whose coefficients are
// (scaled) products of scalar entries read from other nodes, table-driven
// liftings of discrete functions, softmax for parameters, and log/dot/select
// for the loss. The graph is built once and re-evaluated by forward() after
// leaf updates; backward() accumulates adjoints in reverse order.

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace gradsynth::ad {

using NodeId = int32_t;
inline constexpr NodeId kNoNode = -1;

// Probabilities are clamped to this floor before taking logs.
inline constexpr double kProbFloor = 1e-30;

enum class Op : uint8_t {
  Leaf,
  WeightedSum,  // out = sum_t coeff_t * vec_t, coeff_t = scale * prod(factors)
  Softmax,
  Log,          // elementwise log(max(x, kProbFloor))
  Dot,          // scalar <a, b>
  Select,       // scalar a[elem]
  Mul,          // elementwise a * b
  Table1,       // out[f(x)] += a[x]
  Table2,       // out[f(x, y)] += a[x] * b[y]
};

// A scalar coefficient factor: one entry of another node's value vector.
struct Factor {
  NodeId node = kNoNode;
  int32_t elem = 0;
};

// One term of a WeightedSum: coeff = scale * prod_i value(fac[i]).
struct Term {
  NodeId vec = kNoNode;
  double scale = 1.0;
  std::array<Factor, 3> fac{};
  int nfac = 0;

  Term() = default;
  explicit Term(NodeId v, double s = 1.0) : vec(v), scale(s) {}
  Term& with(NodeId node, int elem) {
    fac[static_cast<size_t>(nfac++)] = Factor{node, elem};
    return *this;
  }
};

// Lookup table for a discrete function lifted to distributions.
// Table1: map has a_n entries, value = f(x).  Table2: row-major a_n * b_n
// entries, value = f(x, y).  Entries outside [0, out_n) are rejected.
struct Table {
  int32_t a_n = 0;
  int32_t b_n = 0;  // 0 for unary tables
  int32_t out_n = 0;
  std::vector<int32_t> map;
};

struct Node {
  Op op = Op::Leaf;
  int32_t len = 0;
  int64_t ofs = 0;       // offset into the value/adjoint arenas
  NodeId a = kNoNode;    // first operand (softmax/log/dot/select/mul/table)
  NodeId b = kNoNode;    // second operand (dot/mul/table2)
  int32_t elem = 0;      // Select index
  int32_t term_ofs = 0;  // WeightedSum terms [term_ofs, term_ofs + term_cnt)
  int32_t term_cnt = 0;
  int32_t table = -1;    // index into the tape's table registry
  bool is_param = false;
};

class Tape {
 public:
  // --- graph construction -------------------------------------------------
  NodeId leaf(std::span<const double> v, bool is_param = false);
  NodeId leaf(std::initializer_list<double> v, bool is_param = false);
  // Point mass at `index` over a domain of size `n`.
  NodeId point(int n, int index);
  NodeId weighted_sum(int len, std::span<const Term> terms);
  NodeId weighted_sum(int len, std::initializer_list<Term> terms);
  NodeId softmax(NodeId logits);
  NodeId log(NodeId x);
  NodeId dot(NodeId a, NodeId b);
  NodeId select(NodeId a, int elem);
  NodeId mul(NodeId a, NodeId b);
  int register_table(std::shared_ptr<const Table> t);
  NodeId table1(NodeId a, int table);
  NodeId table2(NodeId a, NodeId b, int table);

  // --- evaluation ---------------------------------------------------------
  void forward();               // recompute every non-leaf node in order
  void backward(NodeId loss);   // zero adjoints, seed d(loss)=1, accumulate

  std::span<const double> value(NodeId n) const;
  std::span<const double> adjoint(NodeId n) const;
  double scalar(NodeId n) const;  // value of a length-1 node

  void set_leaf(NodeId n, std::span<const double> v);
  void poke(NodeId n, int elem, double v);  // single-element leaf update
  double peek(NodeId n, int elem) const;

  const std::vector<NodeId>& param_leaves() const { return params_; }
  size_t node_count() const { return nodes_.size(); }
  int length(NodeId n) const { return nodes_[static_cast<size_t>(n)].len; }

 private:
  NodeId push(Node n);
  std::span<double> mut_value(NodeId n);

  std::vector<Node> nodes_;
  std::vector<Term> terms_;
  std::vector<std::shared_ptr<const Table>> tables_;
  std::vector<double> val_;
  std::vector<double> adj_;
  std::vector<NodeId> params_;
};

// Finite-difference gradient check (central differences, the oracle for all
// backward implementations). Compares d loss / d theta for parameter-leaf
// coordinates; when max_coords is smaller than the total coordinate count, a
// deterministic sample is drawn with `seed`.
struct GradCheckResult {
  double max_rel_err = 0.0;
  size_t coords_checked = 0;
};

GradCheckResult check_gradients(Tape& tape, NodeId loss, double h = 1e-6,
                                size_t max_coords = SIZE_MAX,
                                uint64_t seed = 0);

}  // namespace gradsynth::ad
