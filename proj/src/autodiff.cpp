#include "gradsynth/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace gradsynth::ad {

namespace {
size_t idx(NodeId n) { return static_cast<size_t>(n); }
}  // namespace

NodeId Tape::push(Node n) {
  n.ofs = static_cast<int64_t>(val_.size());
  val_.resize(val_.size() + static_cast<size_t>(n.len), 0.0);
  adj_.resize(val_.size(), 0.0);
  nodes_.push_back(n);
  return static_cast<NodeId>(nodes_.size() - 1);
}

std::span<double> Tape::mut_value(NodeId n) {
  const Node& node = nodes_[idx(n)];
  return {val_.data() + node.ofs, static_cast<size_t>(node.len)};
}

NodeId Tape::leaf(std::span<const double> v, bool is_param) {
  Node n;
  n.op = Op::Leaf;
  n.len = static_cast<int32_t>(v.size());
  n.is_param = is_param;
  NodeId id = push(n);
  std::copy(v.begin(), v.end(), mut_value(id).begin());
  if (is_param) params_.push_back(id);
  return id;
}

NodeId Tape::leaf(std::initializer_list<double> v, bool is_param) {
  return leaf(std::span<const double>(v.begin(), v.size()), is_param);
}

NodeId Tape::point(int n, int index) {
  if (index < 0 || index >= n) throw std::invalid_argument("point: index out of domain");
  std::vector<double> v(static_cast<size_t>(n), 0.0);
  v[static_cast<size_t>(index)] = 1.0;
  return leaf(v);
}

NodeId Tape::weighted_sum(int len, std::span<const Term> terms) {
  for (const Term& t : terms) {
    if (t.vec == kNoNode || nodes_[idx(t.vec)].len != len)
      throw std::invalid_argument("weighted_sum: operand length mismatch");
    for (int i = 0; i < t.nfac; ++i) {
      const Factor& f = t.fac[static_cast<size_t>(i)];
      if (f.node == kNoNode || f.elem < 0 || f.elem >= nodes_[idx(f.node)].len)
        throw std::invalid_argument("weighted_sum: factor element out of range");
    }
  }
  Node n;
  n.op = Op::WeightedSum;
  n.len = len;
  n.term_ofs = static_cast<int32_t>(terms_.size());
  n.term_cnt = static_cast<int32_t>(terms.size());
  terms_.insert(terms_.end(), terms.begin(), terms.end());
  return push(n);
}

NodeId Tape::weighted_sum(int len, std::initializer_list<Term> terms) {
  return weighted_sum(len, std::span<const Term>(terms.begin(), terms.size()));
}

NodeId Tape::softmax(NodeId a) {
  Node n;
  n.op = Op::Softmax;
  n.len = nodes_[idx(a)].len;
  n.a = a;
  return push(n);
}

NodeId Tape::log(NodeId a) {
  Node n;
  n.op = Op::Log;
  n.len = nodes_[idx(a)].len;
  n.a = a;
  return push(n);
}

NodeId Tape::dot(NodeId a, NodeId b) {
  if (nodes_[idx(a)].len != nodes_[idx(b)].len)
    throw std::invalid_argument("dot: length mismatch");
  Node n;
  n.op = Op::Dot;
  n.len = 1;
  n.a = a;
  n.b = b;
  return push(n);
}

NodeId Tape::select(NodeId a, int elem) {
  if (elem < 0 || elem >= nodes_[idx(a)].len)
    throw std::invalid_argument("select: element out of range");
  Node n;
  n.op = Op::Select;
  n.len = 1;
  n.a = a;
  n.elem = elem;
  return push(n);
}

NodeId Tape::mul(NodeId a, NodeId b) {
  if (nodes_[idx(a)].len != nodes_[idx(b)].len)
    throw std::invalid_argument("mul: length mismatch");
  Node n;
  n.op = Op::Mul;
  n.len = nodes_[idx(a)].len;
  n.a = a;
  n.b = b;
  return push(n);
}

int Tape::register_table(std::shared_ptr<const Table> t) {
  if (!t) throw std::invalid_argument("register_table: null table");
  const size_t expect = t->b_n == 0 ? static_cast<size_t>(t->a_n)
                                    : static_cast<size_t>(t->a_n) * static_cast<size_t>(t->b_n);
  if (t->map.size() != expect) throw std::invalid_argument("register_table: map size mismatch");
  for (int32_t v : t->map)
    if (v < 0 || v >= t->out_n) throw std::invalid_argument("register_table: entry out of range");
  tables_.push_back(std::move(t));
  return static_cast<int>(tables_.size() - 1);
}

NodeId Tape::table1(NodeId a, int table) {
  const Table& t = *tables_.at(static_cast<size_t>(table));
  if (t.b_n != 0) throw std::invalid_argument("table1: binary table supplied");
  if (nodes_[idx(a)].len != t.a_n) throw std::invalid_argument("table1: operand length mismatch");
  Node n;
  n.op = Op::Table1;
  n.len = t.out_n;
  n.a = a;
  n.table = table;
  return push(n);
}

NodeId Tape::table2(NodeId a, NodeId b, int table) {
  const Table& t = *tables_.at(static_cast<size_t>(table));
  if (t.b_n == 0) throw std::invalid_argument("table2: unary table supplied");
  if (nodes_[idx(a)].len != t.a_n || nodes_[idx(b)].len != t.b_n)
    throw std::invalid_argument("table2: operand length mismatch");
  Node n;
  n.op = Op::Table2;
  n.len = t.out_n;
  n.a = a;
  n.b = b;
  n.table = table;
  return push(n);
}

void Tape::forward() {
  for (size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    double* out = val_.data() + n.ofs;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::WeightedSum: {
        std::fill(out, out + n.len, 0.0);
        for (int32_t ti = n.term_ofs; ti < n.term_ofs + n.term_cnt; ++ti) {
          const Term& t = terms_[static_cast<size_t>(ti)];
          double c = t.scale;
          for (int fi = 0; fi < t.nfac; ++fi) {
            const Factor& f = t.fac[static_cast<size_t>(fi)];
            c *= val_[static_cast<size_t>(nodes_[idx(f.node)].ofs + f.elem)];
          }
          if (c == 0.0) continue;
          const double* v = val_.data() + nodes_[idx(t.vec)].ofs;
          for (int k = 0; k < n.len; ++k) out[k] += c * v[k];
        }
        break;
      }
      case Op::Softmax: {
        const double* z = val_.data() + nodes_[idx(n.a)].ofs;
        double m = z[0];
        for (int k = 0; k < n.len; ++k) {
          if (!std::isfinite(z[k])) throw std::runtime_error("softmax: non-finite input");
          m = std::max(m, z[k]);
        }
        double s = 0.0;
        for (int k = 0; k < n.len; ++k) {
          out[k] = std::exp(z[k] - m);
          s += out[k];
        }
        for (int k = 0; k < n.len; ++k) out[k] /= s;
        break;
      }
      case Op::Log: {
        const double* x = val_.data() + nodes_[idx(n.a)].ofs;
        for (int k = 0; k < n.len; ++k) out[k] = std::log(std::max(x[k], kProbFloor));
        break;
      }
      case Op::Dot: {
        const double* x = val_.data() + nodes_[idx(n.a)].ofs;
        const double* y = val_.data() + nodes_[idx(n.b)].ofs;
        double s = 0.0;
        for (int k = 0; k < nodes_[idx(n.a)].len; ++k) s += x[k] * y[k];
        out[0] = s;
        break;
      }
      case Op::Select:
        out[0] = val_[static_cast<size_t>(nodes_[idx(n.a)].ofs + n.elem)];
        break;
      case Op::Mul: {
        const double* x = val_.data() + nodes_[idx(n.a)].ofs;
        const double* y = val_.data() + nodes_[idx(n.b)].ofs;
        for (int k = 0; k < n.len; ++k) out[k] = x[k] * y[k];
        break;
      }
      case Op::Table1: {
        const Table& t = *tables_[static_cast<size_t>(n.table)];
        const double* x = val_.data() + nodes_[idx(n.a)].ofs;
        std::fill(out, out + n.len, 0.0);
        for (int32_t xa = 0; xa < t.a_n; ++xa) out[t.map[static_cast<size_t>(xa)]] += x[xa];
        break;
      }
      case Op::Table2: {
        const Table& t = *tables_[static_cast<size_t>(n.table)];
        const double* x = val_.data() + nodes_[idx(n.a)].ofs;
        const double* y = val_.data() + nodes_[idx(n.b)].ofs;
        std::fill(out, out + n.len, 0.0);
        const int32_t* row = t.map.data();
        for (int32_t xa = 0; xa < t.a_n; ++xa, row += t.b_n) {
          const double px = x[xa];
          if (px == 0.0) continue;
          for (int32_t yb = 0; yb < t.b_n; ++yb) out[row[yb]] += px * y[yb];
        }
        break;
      }
    }
  }
}

void Tape::backward(NodeId loss) {
  if (nodes_[idx(loss)].len != 1) throw std::invalid_argument("backward: loss must be scalar");
  std::fill(adj_.begin(), adj_.end(), 0.0);
  adj_[static_cast<size_t>(nodes_[idx(loss)].ofs)] = 1.0;

  for (size_t i = nodes_.size(); i-- > 0;) {
    const Node& n = nodes_[i];
    const double* g = adj_.data() + n.ofs;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::WeightedSum: {
        for (int32_t ti = n.term_ofs; ti < n.term_ofs + n.term_cnt; ++ti) {
          const Term& t = terms_[static_cast<size_t>(ti)];
          double fv[3];
          double c = t.scale;
          for (int fi = 0; fi < t.nfac; ++fi) {
            const Factor& f = t.fac[static_cast<size_t>(fi)];
            fv[fi] = val_[static_cast<size_t>(nodes_[idx(f.node)].ofs + f.elem)];
            c *= fv[fi];
          }
          const Node& vn = nodes_[idx(t.vec)];
          const double* v = val_.data() + vn.ofs;
          double* gv = adj_.data() + vn.ofs;
          if (c != 0.0)
            for (int k = 0; k < n.len; ++k) gv[k] += c * g[k];
          if (t.nfac > 0) {
            double gdotv = 0.0;
            for (int k = 0; k < n.len; ++k) gdotv += g[k] * v[k];
            for (int fi = 0; fi < t.nfac; ++fi) {
              double other = t.scale;
              for (int fj = 0; fj < t.nfac; ++fj)
                if (fj != fi) other *= fv[fj];
              const Factor& f = t.fac[static_cast<size_t>(fi)];
              adj_[static_cast<size_t>(nodes_[idx(f.node)].ofs + f.elem)] += other * gdotv;
            }
          }
        }
        break;
      }
      case Op::Softmax: {
        const double* y = val_.data() + n.ofs;
        double* gz = adj_.data() + nodes_[idx(n.a)].ofs;
        double gy_dot_y = 0.0;
        for (int k = 0; k < n.len; ++k) gy_dot_y += g[k] * y[k];
        for (int k = 0; k < n.len; ++k) gz[k] += (g[k] - gy_dot_y) * y[k];
        break;
      }
      case Op::Log: {
        const double* x = val_.data() + nodes_[idx(n.a)].ofs;
        double* gx = adj_.data() + nodes_[idx(n.a)].ofs;
        for (int k = 0; k < n.len; ++k)
          if (x[k] > kProbFloor) gx[k] += g[k] / x[k];
        break;
      }
      case Op::Dot: {
        const Node& an = nodes_[idx(n.a)];
        const Node& bn = nodes_[idx(n.b)];
        const double* x = val_.data() + an.ofs;
        const double* y = val_.data() + bn.ofs;
        double* gx = adj_.data() + an.ofs;
        double* gy = adj_.data() + bn.ofs;
        for (int k = 0; k < an.len; ++k) {
          gx[k] += g[0] * y[k];
          gy[k] += g[0] * x[k];
        }
        break;
      }
      case Op::Select:
        adj_[static_cast<size_t>(nodes_[idx(n.a)].ofs + n.elem)] += g[0];
        break;
      case Op::Mul: {
        const Node& an = nodes_[idx(n.a)];
        const Node& bn = nodes_[idx(n.b)];
        const double* x = val_.data() + an.ofs;
        const double* y = val_.data() + bn.ofs;
        double* gx = adj_.data() + an.ofs;
        double* gy = adj_.data() + bn.ofs;
        for (int k = 0; k < n.len; ++k) {
          gx[k] += g[k] * y[k];
          gy[k] += g[k] * x[k];
        }
        break;
      }
      case Op::Table1: {
        const Table& t = *tables_[static_cast<size_t>(n.table)];
        double* gx = adj_.data() + nodes_[idx(n.a)].ofs;
        for (int32_t xa = 0; xa < t.a_n; ++xa) gx[xa] += g[t.map[static_cast<size_t>(xa)]];
        break;
      }
      case Op::Table2: {
        const Table& t = *tables_[static_cast<size_t>(n.table)];
        const Node& an = nodes_[idx(n.a)];
        const Node& bn = nodes_[idx(n.b)];
        const double* x = val_.data() + an.ofs;
        const double* y = val_.data() + bn.ofs;
        double* gx = adj_.data() + an.ofs;
        double* gy = adj_.data() + bn.ofs;
        const int32_t* row = t.map.data();
        for (int32_t xa = 0; xa < t.a_n; ++xa, row += t.b_n) {
          double acc = 0.0;
          const double px = x[xa];
          for (int32_t yb = 0; yb < t.b_n; ++yb) {
            const double gz = g[row[yb]];
            acc += gz * y[yb];
            if (px != 0.0) gy[yb] += gz * px;
          }
          gx[xa] += acc;
        }
        break;
      }
    }
  }
}

std::span<const double> Tape::value(NodeId n) const {
  const Node& node = nodes_[idx(n)];
  return {val_.data() + node.ofs, static_cast<size_t>(node.len)};
}

std::span<const double> Tape::adjoint(NodeId n) const {
  const Node& node = nodes_[idx(n)];
  return {adj_.data() + node.ofs, static_cast<size_t>(node.len)};
}

double Tape::scalar(NodeId n) const {
  if (nodes_[idx(n)].len != 1) throw std::invalid_argument("scalar: node is not length 1");
  return val_[static_cast<size_t>(nodes_[idx(n)].ofs)];
}

void Tape::set_leaf(NodeId n, std::span<const double> v) {
  Node& node = nodes_[idx(n)];
  if (node.op != Op::Leaf) throw std::invalid_argument("set_leaf: node is not a leaf");
  if (static_cast<size_t>(node.len) != v.size())
    throw std::invalid_argument("set_leaf: length mismatch");
  std::copy(v.begin(), v.end(), val_.begin() + node.ofs);
}

void Tape::poke(NodeId n, int elem, double v) {
  Node& node = nodes_[idx(n)];
  if (node.op != Op::Leaf) throw std::invalid_argument("poke: node is not a leaf");
  if (elem < 0 || elem >= node.len) throw std::invalid_argument("poke: element out of range");
  val_[static_cast<size_t>(node.ofs + elem)] = v;
}

double Tape::peek(NodeId n, int elem) const {
  const Node& node = nodes_[idx(n)];
  if (elem < 0 || elem >= node.len) throw std::invalid_argument("peek: element out of range");
  return val_[static_cast<size_t>(node.ofs + elem)];
}

GradCheckResult check_gradients(Tape& tape, NodeId loss, double h, size_t max_coords,
                                uint64_t seed) {
  tape.forward();
  tape.backward(loss);

  struct Coord {
    NodeId node;
    int elem;
    double grad;
  };
  std::vector<Coord> coords;
  for (NodeId p : tape.param_leaves())
    for (int e = 0; e < tape.length(p); ++e) coords.push_back({p, e, tape.adjoint(p)[static_cast<size_t>(e)]});

  if (coords.size() > max_coords) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
  }

  GradCheckResult res;
  res.coords_checked = coords.size();
  for (const Coord& c : coords) {
    const double orig = tape.peek(c.node, c.elem);
    tape.poke(c.node, c.elem, orig + h);
    tape.forward();
    const double fp = tape.value(loss)[0];
    tape.poke(c.node, c.elem, orig - h);
    tape.forward();
    const double fm = tape.value(loss)[0];
    tape.poke(c.node, c.elem, orig);
    const double fd = (fp - fm) / (2.0 * h);
    const double rel = std::abs(c.grad - fd) /
                       std::max({std::abs(c.grad), std::abs(fd), 1e-5});
    res.max_rel_err = std::max(res.max_rel_err, rel);
  }
  tape.forward();  // restore values
  return res;
}

}  // namespace gradsynth::ad
