#pragma once

// Dense 2D tensors with a recording tape for reverse-mode differentiation.
//
// Every tensor lives on a Tape. Operations on tensors that (transitively)
// depend on a Parameter record a backward closure; Tape::backward walks the
// records in reverse order exactly once and accumulates parameter gradients.
// All values are 64-bit floats; a non-finite result of any op throws.

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace motformer::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

class AutodiffError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  std::size_t index = 0;  // position within the owning ParameterSet
};

// Named parameters with stable addresses. Names are unique.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet& other);
  ParameterSet& operator=(const ParameterSet& other);
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  Parameter& add(std::string name, Matrix init);
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Per-parameter gradient accumulators aligned with a ParameterSet, used to
// collect one clip's contribution in isolation.
using GradientBuffer = std::vector<Matrix>;
GradientBuffer make_gradient_buffer(const ParameterSet& params);

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; invalid after the
// owning tape is cleared.
class Tensor {
 public:
  Tensor() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const;
  double item() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn =
      std::function<void(Tape&, const Matrix& out_grad, const Matrix& out_value)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Matrix value);
  // Leaf bound to a parameter; one leaf per parameter per tape.
  Tensor param(Parameter& p);

  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  // Accumulates d(loss)/d(param) into each reachable parameter's grad (or
  // into `buffer` when given), then clears the tape.
  void backward(const Tensor& loss);
  void backward(const Tensor& loss, GradientBuffer& buffer);

  void clear();
  std::size_t size() const { return nodes_.size(); }

  // Running hash of data-dependent branch choices: ReLU signs, smooth-L1
  // regimes and any discrete decision a caller reports. Two evaluations with
  // equal signatures lie on the same smooth piece of the function.
  void note_branch(std::uint64_t value);
  std::uint64_t branch_signature() const { return branch_signature_; }

  // Dropout mask stream: each dropout call draws a fresh counter range.
  void set_dropout(bool train, std::uint64_t seed) {
    dropout_train_ = train;
    dropout_seed_ = seed;
    dropout_counter_ = 0;
  }
  bool dropout_train() const { return dropout_train_; }
  std::uint64_t next_dropout_seed();

  // Op plumbing.
  const Matrix& value_of(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad_of(std::size_t id) const { return nodes_[id].requires_grad; }
  Tensor record(Matrix value, std::initializer_list<Tensor> inputs, BackwardFn fn,
                std::string_view op);
  Tensor record(Matrix value, std::span<const Tensor> inputs, BackwardFn fn,
                std::string_view op);
  template <typename Expr>
  void accumulate(std::size_t id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  void run_backward(const Tensor& loss, GradientBuffer* buffer);

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_leaves_;
  bool grad_enabled_ = true;
  bool dropout_train_ = false;
  std::uint64_t dropout_seed_ = 0;
  std::uint64_t dropout_counter_ = 0;
  std::uint64_t branch_signature_ = 0;
};

// ---- core ops -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// Elementwise; `b` may also be a 1 x cols row broadcast over a's rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// Elementwise product of equal shapes.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// axis 0 stacks rows, axis 1 stacks columns.
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor row_gather(const Tensor& a, std::span<const int> indices);
// out[indices[k]] += a[k]; out has `rows` rows.
Tensor index_add_rows(const Tensor& a, std::span<const int> indices, Index rows);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log_sigmoid(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
// Gradient taken as 0 at 0.
Tensor sqrt(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
// x * W (+ b broadcast over rows).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias = nullptr);
Tensor dropout(const Tensor& a, double rate, std::uint64_t seed, bool train);
// Sums every `block`-wide column group: (R x C*block) -> (R x C).
Tensor sum_col_blocks(const Tensor& a, Index block);
// Repeats every column `block` times: (R x C) -> (R x C*block).
Tensor repeat_col_blocks(const Tensor& a, Index block);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Elementwise smooth-L1 with transition point beta.
Tensor smooth_l1(const Tensor& a, double beta);

// Softmax over the edges sharing a destination, independently per column.
// logits: E x C, segments[e] in [0, num_segments).
Tensor segment_softmax(const Tensor& logits, std::span<const int> segments,
                       Index num_segments);

// Deterministic dropout keep-mask value for element `k` under `seed`.
bool dropout_keep(std::uint64_t seed, std::uint64_t k, double rate);

// ---- optimizer --------------------------------------------------------------

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
};

AdamWState make_adamw_state(const ParameterSet& params);

// One AdamW update using each parameter's `grad`. Increments state.step
// first, so the bias correction of the first call uses step 1.
void adamw_step(ParameterSet& params, AdamWState& state, const AdamWConfig& cfg);

}  // namespace motformer::ad
