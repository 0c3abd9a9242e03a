#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "geod/common.hpp"

namespace geod {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

struct TensorImpl {
  Shape shape;
  std::vector<double> values;  // row-major
  bool requires_grad = false;
  int node_id = -1;        // producing tape node, -1 for leaves/constants
  uint64_t tape_epoch = 0; // tape generation the node belongs to
};

// Value handle. Copies share storage; leaves (node_id == -1) may be mutated
// in place by the optimizer, recorded outputs are treated as immutable.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double value);
  static Tensor scalar(double value) { return full({}, value); }
  static Tensor from_data(const Shape& shape, std::vector<double> values);
  static Tensor randn(const Shape& shape, Rng& rng, double stddev = 1.0);
  static Tensor uniform(const Shape& shape, Rng& rng, double lo, double hi);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int64_t numel() const;
  int dim(int axis) const;
  int ndim() const;

  const std::vector<double>& values() const;
  std::vector<double>& mutable_values();  // leaves only

  double item() const;  // numel()==1 only
  double at(std::initializer_list<int> idx) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool v);

  // Value copy detached from any graph.
  Tensor detach() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
  friend Tensor make_tensor(Shape shape, std::vector<double> values);
};

Tensor make_tensor(Shape shape, std::vector<double> values);

// ---------------------------------------------------------------------------
// Primitive ops. The op set is closed: everything differentiable in the
// system is built from these kinds, and backward() emits VJPs through the
// same apply() entry point so double-backward works where the kinds are
// closed under differentiation (the gradient-penalty path).
// ---------------------------------------------------------------------------

enum class Op {
  kAdd,
  kSub,
  kMul,
  kDiv,
  kMatmul,
  kSin,
  kExp,
  kLog,
  kSoftplus,
  kSigmoid,
  kTanh,
  kRelu,
  kMaxConst,   // elementwise max(x, c)
  kClip,       // clamp(x, lo, hi)
  kSum,
  kMean,
  kReshape,
  kConcat,
  kSlice,
  kBroadcast,
  kL2NormLast,     // x / sqrt(sum(x^2, last) + eps)
  kGridSample,     // bilinear, clamp-to-edge, pixel-center coords
  kFlip,           // reverse one axis
  kConv2d,         // direct small conv, [Cin,H,W] * [Cout,Cin,kh,kw]
  kConv2dDGrad,    // data-gradient of kConv2d (transposed conv); backward-only kind
  kConv2dWGrad,    // weight-gradient of kConv2d; backward-only kind
};

const char* op_name(Op op);
Op op_from_name(const std::string& name);  // throws Error on unknown kind

struct OpAttrs {
  bool has_scalar = false;  // binary elementwise ops: rhs is attrs.scalar
  double scalar = 0.0;
  double lo = 0.0, hi = 0.0;      // kClip
  double eps = 0.0;               // kL2NormLast
  Shape shape;                    // kReshape / kBroadcast target
  std::vector<int> axes;          // kSum / kMean (empty = all axes)
  bool keepdims = false;
  int axis = 0;                   // kConcat / kSlice / kFlip
  int start = 0, stop = 0;        // kSlice
  bool trans_a = false, trans_b = false;  // kMatmul
  int stride = 1, pad = 0;        // conv family
  int out_h = 0, out_w = 0;       // kConv2dDGrad output spatial size
};

// Evaluates the op, shape-checks inputs, verifies the output is finite and
// records a tape node when grad recording is active and any input requires
// grad. Throws Error on unknown kind / bad shapes / non-finite output.
Tensor apply(Op kind, const std::vector<Tensor>& inputs, const OpAttrs& attrs = {});

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

struct TapeNode {
  Op kind;
  OpAttrs attrs;
  std::vector<Tensor> inputs;
  Tensor output;
};

class GradMap {
 public:
  // Gradient for `t`; zeros(t.shape) if `t` was not reached by backward.
  Tensor get(const Tensor& t) const;
  bool has(const Tensor& t) const;
  void accumulate(const std::shared_ptr<TensorImpl>& key, const Tensor& g);

  std::unordered_map<const TensorImpl*, Tensor> grads;
};

class Tape {
 public:
  static Tape& active();

  int record(TapeNode node);
  void clear();  // arena reset; called once per training step
  size_t size() const { return nodes_.size(); }
  uint64_t epoch() const { return epoch_; }

  // Reverse-mode sweep from scalar `loss`. With create_graph=true the VJP
  // computations are themselves recorded so a second backward() can
  // differentiate through them (gradient-penalty pattern); ops outside the
  // differentiation-closed subset throw in that mode.
  GradMap backward(const Tensor& loss, bool create_graph = false);

 private:
  std::vector<TapeNode> nodes_;
  uint64_t epoch_ = 1;
  bool consumed_ = false;
};

// RAII guard: disables grad recording in scope (values flow, no tape nodes).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_recording_enabled();

// ---------------------------------------------------------------------------
// Sugar over apply()
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, double b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, double b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, double b);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, b); }
inline Tensor operator*(double a, const Tensor& b) { return mul(b, a); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator/(const Tensor& a, double b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
Tensor sin_t(const Tensor& x);
Tensor cos_t(const Tensor& x);  // sin(x + pi/2)
Tensor exp_t(const Tensor& x);
Tensor log_t(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_t(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = 0.2);
Tensor max_const(const Tensor& x, double c);
Tensor clip(const Tensor& x, double lo, double hi);
Tensor abs_t(const Tensor& x);  // relu(x) + relu(-x)
Tensor sum(const Tensor& x, const std::vector<int>& axes = {}, bool keepdims = false);
Tensor mean(const Tensor& x, const std::vector<int>& axes = {}, bool keepdims = false);
Tensor reshape(const Tensor& x, const Shape& shape);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, int start, int stop);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor l2_normalize_last(const Tensor& x, double eps = 1e-12);
// image [H,W,C], coords [...,2] as (u,v) pixel centers -> [...,C]
Tensor grid_sample_bilinear(const Tensor& image, const Tensor& coords);
Tensor flip(const Tensor& x, int axis);
// x [Cin,H,W], w [Cout,Cin,kh,kw] -> [Cout,Ho,Wo]
Tensor conv2d(const Tensor& x, const Tensor& w, int stride = 1, int pad = 0);

// Image layout bridges, built from slice/reshape/concat (cheap for small C).
Tensor hwc_to_chw(const Tensor& x);  // [H,W,C] -> [C,H,W]
Tensor chw_to_hwc(const Tensor& x);  // [C,H,W] -> [H,W,C]
// Nearest-neighbor x2 upsampling of a [C,H,W] map via reshape+broadcast.
Tensor upsample2x_nearest(const Tensor& x);
// 2x2 average pooling of a [C,H,W] map (H and W must be even).
Tensor avgpool2x(const Tensor& x);

GradMap backward(const Tensor& loss, bool create_graph = false);

// Max relative error between analytic gradient and central finite
// differences of `fn` at `point`, probed on every coordinate.
double grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point,
                  double eps = 1e-4);

}  // namespace geod
