#include "motformer/autodiff.hpp"

#include <cmath>
#include <sstream>

namespace motformer::ad {
namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << "(" << m.rows() << "x" << m.cols() << ")";
  return os.str();
}

[[noreturn]] void shape_error(std::string_view op, std::initializer_list<const Matrix*> ms,
                              std::string_view detail = {}) {
  std::ostringstream os;
  os << "shape mismatch in " << op << ":";
  for (const Matrix* m : ms) os << " " << shape_str(*m);
  if (!detail.empty()) os << " (" << detail << ")";
  throw AutodiffError(os.str());
}

Tape& tape_of(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->valid()) throw AutodiffError("operation on an invalid tensor");
    if (tape == nullptr) {
      tape = t->tape();
    } else if (tape != t->tape()) {
      throw AutodiffError("tensors from different tapes");
    }
  }
  return *tape;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double stable_log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---- ParameterSet -----------------------------------------------------------

ParameterSet::ParameterSet(const ParameterSet& other)
    : params_(other.params_), index_(other.index_) {}

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
  params_ = other.params_;
  index_ = other.index_;
  return *this;
}

Parameter& ParameterSet::add(std::string name, Matrix init) {
  if (index_.contains(name)) throw AutodiffError("duplicate parameter name: " + name);
  const std::size_t idx = params_.size();
  index_.emplace(name, idx);
  Parameter& p = params_.emplace_back();
  p.name = std::move(name);
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  p.index = idx;
  return p;
}

Parameter& ParameterSet::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw AutodiffError("unknown parameter: " + std::string(name));
  return params_[it->second];
}

const Parameter& ParameterSet::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw AutodiffError("unknown parameter: " + std::string(name));
  return params_[it->second];
}

bool ParameterSet::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

void ParameterSet::zero_grad() {
  for (Parameter& p : params_) p.grad.setZero();
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

GradientBuffer make_gradient_buffer(const ParameterSet& params) {
  GradientBuffer buf;
  buf.reserve(params.size());
  for (const Parameter& p : params) buf.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  return buf;
}

// ---- Tensor / Tape ------------------------------------------------------------

const Matrix& Tensor::value() const {
  if (tape_ == nullptr) throw AutodiffError("value() of an invalid tensor");
  return tape_->value_of(id_);
}

bool Tensor::requires_grad() const { return tape_ != nullptr && tape_->requires_grad_of(id_); }

double Tensor::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw AutodiffError("item() of non-scalar tensor " + shape_str(v));
  return v(0, 0);
}

Tensor Tape::constant(Matrix value) {
  if (!value.allFinite()) throw AutodiffError("non-finite constant");
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::param(Parameter& p) {
  if (auto it = param_leaves_.find(&p); it != param_leaves_.end())
    return Tensor(this, it->second);
  Node& n = nodes_.emplace_back();
  n.value = p.value;
  n.requires_grad = grad_enabled_;
  n.param = grad_enabled_ ? &p : nullptr;
  const std::size_t id = nodes_.size() - 1;
  param_leaves_.emplace(&p, id);
  return Tensor(this, id);
}

Tensor Tape::record(Matrix value, std::initializer_list<Tensor> inputs, BackwardFn fn,
                    std::string_view op) {
  return record(std::move(value), std::span<const Tensor>(inputs.begin(), inputs.size()),
                std::move(fn), op);
}

Tensor Tape::record(Matrix value, std::span<const Tensor> inputs, BackwardFn fn,
                    std::string_view op) {
  if (!value.allFinite())
    throw AutodiffError("non-finite output in " + std::string(op) + " " + shape_str(value));
  bool needs = false;
  if (grad_enabled_) {
    for (const Tensor& t : inputs) needs = needs || t.requires_grad();
  }
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(fn);
  return Tensor(this, nodes_.size() - 1);
}

std::uint64_t Tape::next_dropout_seed() {
  return splitmix64(dropout_seed_ ^ splitmix64(++dropout_counter_));
}

void Tape::backward(const Tensor& loss) { run_backward(loss, nullptr); }

void Tape::backward(const Tensor& loss, GradientBuffer& buffer) { run_backward(loss, &buffer); }

void Tape::run_backward(const Tensor& loss, GradientBuffer* buffer) {
  if (loss.tape() != this) throw AutodiffError("backward on a tensor from another tape");
  const Matrix& lv = value_of(loss.id());
  if (lv.size() != 1)
    throw AutodiffError("backward requires a scalar loss, got " + shape_str(lv));
  if (nodes_[loss.id()].requires_grad) {
    nodes_[loss.id()].grad = Matrix::Ones(1, 1);
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.grad.size() == 0) continue;
      if (n.backward) {
        n.backward(*this, n.grad, n.value);
      } else if (n.param != nullptr) {
        if (buffer != nullptr) {
          (*buffer)[n.param->index] += n.grad;
        } else {
          n.param->grad += n.grad;
        }
      }
      n.grad.resize(0, 0);
    }
  }
  clear();
}

void Tape::clear() {
  nodes_.clear();
  param_leaves_.clear();
  branch_signature_ = 0;
}

void Tape::note_branch(std::uint64_t value) {
  std::uint64_t z = branch_signature_ + 0x9e3779b97f4a7c15ULL + value;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  branch_signature_ = z ^ (z >> 31);
}

namespace {

template <typename Pred>
void note_pattern(Tape& tape, const Matrix& m, Pred pred) {
  std::uint64_t word = 0;
  int bits = 0;
  for (Index i = 0; i < m.size(); ++i) {
    word = (word << 1) | (pred(m.data()[i]) ? 1u : 0u);
    if (++bits == 64) {
      tape.note_branch(word);
      word = 0;
      bits = 0;
    }
  }
  tape.note_branch(word ^ (static_cast<std::uint64_t>(m.size()) << 32));
}

}  // namespace

// ---- ops ----------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape& tape = tape_of({&a, &b});
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", {&av, &bv});
  Matrix out;
  out.noalias() = av * bv;
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(
      std::move(out), {a, b},
      [ia, ib](Tape& t, const Matrix& g, const Matrix&) {
        if (t.requires_grad_of(ia)) {
          Matrix ga;
          ga.noalias() = g * t.value_of(ib).transpose();
          t.accumulate(ia, ga);
        }
        if (t.requires_grad_of(ib)) {
          Matrix gb;
          gb.noalias() = t.value_of(ia).transpose() * g;
          t.accumulate(ib, gb);
        }
      },
      "matmul");
}

namespace {

Tensor add_impl(const Tensor& a, const Tensor& b, double sign, std::string_view op) {
  Tape& tape = tape_of({&a, &b});
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const std::size_t ia = a.id(), ib = b.id();
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    Matrix out = sign > 0 ? Matrix(av + bv) : Matrix(av - bv);
    return tape.record(
        std::move(out), {a, b},
        [ia, ib, sign](Tape& t, const Matrix& g, const Matrix&) {
          t.accumulate(ia, g);
          if (sign > 0) {
            t.accumulate(ib, g);
          } else {
            t.accumulate(ib, -g);
          }
        },
        op);
  }
  if (bv.rows() == 1 && bv.cols() == av.cols()) {
    Matrix out = av;
    if (sign > 0) {
      out.rowwise() += bv.row(0);
    } else {
      out.rowwise() -= bv.row(0);
    }
    return tape.record(
        std::move(out), {a, b},
        [ia, ib, sign](Tape& t, const Matrix& g, const Matrix&) {
          t.accumulate(ia, g);
          if (t.requires_grad_of(ib)) {
            Matrix gb = g.colwise().sum();
            if (sign < 0) gb = -gb;
            t.accumulate(ib, gb);
          }
        },
        op);
  }
  shape_error(op, {&av, &bv});
}

template <typename F, typename DF>
Tensor unary(const Tensor& a, std::string_view op, F f, DF df) {
  Tape& tape = tape_of({&a});
  Matrix out = a.value().unaryExpr(f);
  const std::size_t ia = a.id();
  return tape.record(
      std::move(out), {a},
      [ia, df](Tape& t, const Matrix& g, const Matrix& y) {
        const Matrix& x = t.value_of(ia);
        Matrix gx(x.rows(), x.cols());
        for (Index i = 0; i < x.size(); ++i)
          gx.data()[i] = g.data()[i] * df(x.data()[i], y.data()[i]);
        t.accumulate(ia, gx);
      },
      op);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_impl(a, b, 1.0, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_impl(a, b, -1.0, "sub"); }

Tensor mul(const Tensor& a, const Tensor& b) {
  Tape& tape = tape_of({&a, &b});
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_error("mul", {&av, &bv});
  Matrix out = av.cwiseProduct(bv);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(
      std::move(out), {a, b},
      [ia, ib](Tape& t, const Matrix& g, const Matrix&) {
        if (t.requires_grad_of(ia)) t.accumulate(ia, g.cwiseProduct(t.value_of(ib)));
        if (t.requires_grad_of(ib)) t.accumulate(ib, g.cwiseProduct(t.value_of(ia)));
      },
      "mul");
}

Tensor scale(const Tensor& a, double factor) {
  Tape& tape = tape_of({&a});
  const std::size_t ia = a.id();
  return tape.record(
      Matrix(a.value() * factor), {a},
      [ia, factor](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(ia, g * factor); }, "scale");
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw AutodiffError("concat of zero tensors");
  if (axis != 0 && axis != 1) throw AutodiffError("concat axis must be 0 or 1");
  Tape& tape = tape_of({&parts[0]});
  Index rows = 0, cols = 0;
  for (const Tensor& p : parts) {
    if (p.tape() != &tape) throw AutodiffError("tensors from different tapes");
    const Matrix& v = p.value();
    if (axis == 0) {
      if (rows == 0 && cols == 0) cols = v.cols();
      if (v.cols() != cols) shape_error("concat(axis=0)", {&parts[0].value(), &v});
      rows += v.rows();
    } else {
      if (rows == 0 && cols == 0) rows = v.rows();
      if (v.rows() != rows) shape_error("concat(axis=1)", {&parts[0].value(), &v});
      cols += v.cols();
    }
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<Index> offsets;
  Index off = 0;
  for (const Tensor& p : parts) {
    const Matrix& v = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    if (axis == 0) {
      out.middleRows(off, v.rows()) = v;
      off += v.rows();
    } else {
      out.middleCols(off, v.cols()) = v;
      off += v.cols();
    }
  }
  return tape.record(
      std::move(out), parts,
      [ids, offsets, axis](Tape& t, const Matrix& g, const Matrix&) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.requires_grad_of(ids[k])) continue;
          const Matrix& v = t.value_of(ids[k]);
          if (axis == 0) {
            t.accumulate(ids[k], g.middleRows(offsets[k], v.rows()));
          } else {
            t.accumulate(ids[k], g.middleCols(offsets[k], v.cols()));
          }
        }
      },
      "concat");
}

Tensor row_gather(const Tensor& a, std::span<const int> indices) {
  Tape& tape = tape_of({&a});
  const Matrix& av = a.value();
  Matrix out(static_cast<Index>(indices.size()), av.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const int r = indices[k];
    if (r < 0 || r >= av.rows())
      shape_error("row_gather", {&av}, "index " + std::to_string(r) + " out of range");
    out.row(static_cast<Index>(k)) = av.row(r);
  }
  const std::size_t ia = a.id();
  std::vector<int> idx(indices.begin(), indices.end());
  return tape.record(
      std::move(out), {a},
      [ia, idx = std::move(idx)](Tape& t, const Matrix& g, const Matrix&) {
        const Matrix& x = t.value_of(ia);
        Matrix gx = Matrix::Zero(x.rows(), x.cols());
        for (std::size_t k = 0; k < idx.size(); ++k) gx.row(idx[k]) += g.row(static_cast<Index>(k));
        t.accumulate(ia, gx);
      },
      "row_gather");
}

Tensor index_add_rows(const Tensor& a, std::span<const int> indices, Index rows) {
  Tape& tape = tape_of({&a});
  const Matrix& av = a.value();
  if (static_cast<Index>(indices.size()) != av.rows())
    shape_error("index_add_rows", {&av}, "index count " + std::to_string(indices.size()));
  Matrix out = Matrix::Zero(rows, av.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const int r = indices[k];
    if (r < 0 || r >= rows)
      shape_error("index_add_rows", {&av}, "index " + std::to_string(r) + " out of range");
    out.row(r) += av.row(static_cast<Index>(k));
  }
  const std::size_t ia = a.id();
  std::vector<int> idx(indices.begin(), indices.end());
  return tape.record(
      std::move(out), {a},
      [ia, idx = std::move(idx)](Tape& t, const Matrix& g, const Matrix&) {
        Matrix gx(static_cast<Index>(idx.size()), g.cols());
        for (std::size_t k = 0; k < idx.size(); ++k) gx.row(static_cast<Index>(k)) = g.row(idx[k]);
        t.accumulate(ia, gx);
      },
      "index_add_rows");
}

Tensor relu(const Tensor& a) {
  note_pattern(tape_of({&a}), a.value(), [](double x) { return x > 0.0; });
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid", [](double x) { return stable_sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor log_sigmoid(const Tensor& a) {
  return unary(
      a, "log_sigmoid", [](double x) { return stable_log_sigmoid(x); },
      [](double x, double) { return stable_sigmoid(-x); });
}

Tensor log(const Tensor& a) {
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor smooth_l1(const Tensor& a, double beta) {
  note_pattern(tape_of({&a}), a.value(), [beta](double x) { return std::abs(x) <= beta; });
  return unary(
      a, "smooth_l1",
      [beta](double x) {
        const double ax = std::abs(x);
        return ax <= beta ? 0.5 * x * x / beta : ax - 0.5 * beta;
      },
      [beta](double x, double) {
        if (std::abs(x) <= beta) return x / beta;
        return x > 0.0 ? 1.0 : -1.0;
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  Tape& tape = tape_of({&x, &gain, &bias});
  const Matrix& xv = x.value();
  const Matrix& gv = gain.value();
  const Matrix& bv = bias.value();
  const Index n = xv.cols();
  if (gv.rows() != 1 || gv.cols() != n || bv.rows() != 1 || bv.cols() != n)
    shape_error("layer_norm", {&xv, &gv, &bv});
  Matrix xhat(xv.rows(), n);
  Eigen::VectorXd inv_std(xv.rows());
  for (Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = xhat;
  out.array().rowwise() *= gv.row(0).array();
  out.rowwise() += bv.row(0);
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return tape.record(
      std::move(out), {x, gain, bias},
      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t,
                                                                         const Matrix& g, const Matrix&) {
        const Matrix& gv = t.value_of(ig);
        if (t.requires_grad_of(ix)) {
          Matrix dxhat = g;
          dxhat.array().rowwise() *= gv.row(0).array();
          Matrix dx(dxhat.rows(), dxhat.cols());
          for (Index r = 0; r < dxhat.rows(); ++r) {
            const double m1 = dxhat.row(r).mean();
            const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
            dx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r);
          }
          t.accumulate(ix, dx);
        }
        if (t.requires_grad_of(ig)) t.accumulate(ig, Matrix(g.cwiseProduct(xhat).colwise().sum()));
        if (t.requires_grad_of(ib)) t.accumulate(ib, Matrix(g.colwise().sum()));
      },
      "layer_norm");
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias) {
  Tensor y = matmul(x, weight);
  return bias != nullptr ? add(y, *bias) : y;
}

bool dropout_keep(std::uint64_t seed, std::uint64_t k, double rate) {
  const std::uint64_t h = splitmix64(seed ^ splitmix64(k + 0x632BE59BD9B4E019ull));
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u >= rate;
}

Tensor dropout(const Tensor& a, double rate, std::uint64_t seed, bool train) {
  if (!(rate >= 0.0 && rate < 1.0)) throw AutodiffError("dropout rate must be in [0, 1)");
  if (!train || rate == 0.0) return a;
  Tape& tape = tape_of({&a});
  const Matrix& av = a.value();
  Matrix mask(av.rows(), av.cols());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Index i = 0; i < av.size(); ++i)
    mask.data()[i] = dropout_keep(seed, static_cast<std::uint64_t>(i), rate) ? keep_scale : 0.0;
  Matrix out = av.cwiseProduct(mask);
  const std::size_t ia = a.id();
  return tape.record(
      std::move(out), {a},
      [ia, mask = std::move(mask)](Tape& t, const Matrix& g, const Matrix&) {
        t.accumulate(ia, g.cwiseProduct(mask));
      },
      "dropout");
}

Tensor sum_col_blocks(const Tensor& a, Index block) {
  Tape& tape = tape_of({&a});
  const Matrix& av = a.value();
  if (block <= 0 || av.cols() % block != 0)
    shape_error("sum_col_blocks", {&av}, "block " + std::to_string(block));
  const Index groups = av.cols() / block;
  Matrix out(av.rows(), groups);
  for (Index c = 0; c < groups; ++c) out.col(c) = av.middleCols(c * block, block).rowwise().sum();
  const std::size_t ia = a.id();
  return tape.record(
      std::move(out), {a},
      [ia, block, groups](Tape& t, const Matrix& g, const Matrix&) {
        Matrix gx(g.rows(), groups * block);
        for (Index c = 0; c < groups; ++c)
          gx.middleCols(c * block, block) = g.col(c).replicate(1, block);
        t.accumulate(ia, gx);
      },
      "sum_col_blocks");
}

Tensor repeat_col_blocks(const Tensor& a, Index block) {
  Tape& tape = tape_of({&a});
  const Matrix& av = a.value();
  if (block <= 0) shape_error("repeat_col_blocks", {&av}, "block " + std::to_string(block));
  const Index groups = av.cols();
  Matrix out(av.rows(), groups * block);
  for (Index c = 0; c < groups; ++c) out.middleCols(c * block, block) = av.col(c).replicate(1, block);
  const std::size_t ia = a.id();
  return tape.record(
      std::move(out), {a},
      [ia, block, groups](Tape& t, const Matrix& g, const Matrix&) {
        Matrix gx(g.rows(), groups);
        for (Index c = 0; c < groups; ++c) gx.col(c) = g.middleCols(c * block, block).rowwise().sum();
        t.accumulate(ia, gx);
      },
      "repeat_col_blocks");
}

Tensor sum(const Tensor& a) {
  Tape& tape = tape_of({&a});
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const std::size_t ia = a.id();
  return tape.record(
      std::move(out), {a},
      [ia](Tape& t, const Matrix& g, const Matrix&) {
        const Matrix& x = t.value_of(ia);
        t.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
      },
      "sum");
}

Tensor mean(const Tensor& a) {
  const Index n = a.value().size();
  if (n == 0) throw AutodiffError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Tensor segment_softmax(const Tensor& logits, std::span<const int> segments, Index num_segments) {
  Tape& tape = tape_of({&logits});
  const Matrix& lv = logits.value();
  if (static_cast<Index>(segments.size()) != lv.rows())
    shape_error("segment_softmax", {&lv}, "segment count " + std::to_string(segments.size()));
  for (int s : segments) {
    if (s < 0 || s >= num_segments)
      shape_error("segment_softmax", {&lv}, "segment " + std::to_string(s) + " out of range");
  }
  const Index cols = lv.cols();
  Matrix seg_max = Matrix::Constant(num_segments, cols, -std::numeric_limits<double>::infinity());
  for (Index e = 0; e < lv.rows(); ++e)
    seg_max.row(segments[e]) = seg_max.row(segments[e]).cwiseMax(lv.row(e));
  Matrix out(lv.rows(), cols);
  Matrix seg_sum = Matrix::Zero(num_segments, cols);
  for (Index e = 0; e < lv.rows(); ++e) {
    out.row(e) = (lv.row(e) - seg_max.row(segments[e])).array().exp().matrix();
    seg_sum.row(segments[e]) += out.row(e);
  }
  for (Index e = 0; e < lv.rows(); ++e) out.row(e).array() /= seg_sum.row(segments[e]).array();
  const std::size_t il = logits.id();
  std::vector<int> seg(segments.begin(), segments.end());
  return tape.record(
      std::move(out), {logits},
      [il, seg = std::move(seg), num_segments](Tape& t, const Matrix& g, const Matrix& y) {
        Matrix dot = Matrix::Zero(num_segments, y.cols());
        for (Index e = 0; e < y.rows(); ++e) dot.row(seg[e]) += y.row(e).cwiseProduct(g.row(e));
        Matrix gx(y.rows(), y.cols());
        for (Index e = 0; e < y.rows(); ++e)
          gx.row(e) = y.row(e).cwiseProduct(g.row(e) - dot.row(seg[e]));
        t.accumulate(il, gx);
      },
      "segment_softmax");
}

// ---- AdamW --------------------------------------------------------------------

AdamWState make_adamw_state(const ParameterSet& params) {
  AdamWState s;
  for (const Parameter& p : params) {
    s.m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    s.v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
  return s;
}

void adamw_step(ParameterSet& params, AdamWState& state, const AdamWConfig& cfg) {
  if (state.m.size() != params.size()) throw AutodiffError("AdamW state does not match parameters");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    for (Index k = 0; k < p.value.size(); ++k) {
      double& w = p.value.data()[k];
      const double g = p.grad.data()[k];
      w -= cfg.lr * cfg.weight_decay * w;
      double& mk = m.data()[k];
      double& vk = v.data()[k];
      mk = cfg.beta1 * mk + (1.0 - cfg.beta1) * g;
      vk = cfg.beta2 * vk + (1.0 - cfg.beta2) * g * g;
      const double mhat = mk / bc1;
      const double vhat = vk / bc2;
      w -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace motformer::ad
