#include "geod/tensor.hpp"

#include <algorithm>
#include <cblas.h>
#include <cmath>
#include <cstring>
#include <numeric>

extern "C" void openblas_set_num_threads(int);

namespace geod {

namespace {

// Results must be bitwise reproducible across runs, so BLAS is pinned to a
// single thread (threaded reductions reorder sums).
void init_blas_once() {
  static bool done = [] {
    openblas_set_num_threads(1);
    return true;
  }();
  (void)done;
}

thread_local bool g_recording = true;

int64_t checked_index(const Shape& shape, std::initializer_list<int> idx) {
  GEOD_CHECK(idx.size() == shape.size(), "index rank " << idx.size() << " vs tensor rank " << shape.size());
  int64_t flat = 0;
  int d = 0;
  for (int i : idx) {
    GEOD_CHECK(i >= 0 && i < shape[d], "index " << i << " out of bounds for axis " << d << " (" << shape[d] << ")");
    flat = flat * shape[d] + i;
    ++d;
  }
  return flat;
}

}  // namespace

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    GEOD_CHECK(d >= 0, "negative dimension in shape " << shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor make_tensor(Shape shape, std::vector<double> values) {
  GEOD_CHECK(shape_numel(shape) == static_cast<int64_t>(values.size()),
             "value count " << values.size() << " does not match shape " << shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(const Shape& shape) {
  return make_tensor(shape, std::vector<double>(shape_numel(shape), 0.0));
}

Tensor Tensor::full(const Shape& shape, double value) {
  return make_tensor(shape, std::vector<double>(shape_numel(shape), value));
}

Tensor Tensor::from_data(const Shape& shape, std::vector<double> values) {
  return make_tensor(shape, std::move(values));
}

Tensor Tensor::randn(const Shape& shape, Rng& rng, double stddev) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal() * stddev;
  return make_tensor(shape, std::move(v));
}

Tensor Tensor::uniform(const Shape& shape, Rng& rng, double lo, double hi) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return make_tensor(shape, std::move(v));
}

const Shape& Tensor::shape() const {
  GEOD_CHECK(impl_, "use of undefined tensor");
  return impl_->shape;
}

int64_t Tensor::numel() const { return shape_numel(shape()); }

int Tensor::dim(int axis) const {
  const Shape& s = shape();
  GEOD_CHECK(axis >= 0 && axis < static_cast<int>(s.size()), "axis " << axis << " out of range for " << shape_str(s));
  return s[axis];
}

int Tensor::ndim() const { return static_cast<int>(shape().size()); }

const std::vector<double>& Tensor::values() const {
  GEOD_CHECK(impl_, "use of undefined tensor");
  return impl_->values;
}

std::vector<double>& Tensor::mutable_values() {
  GEOD_CHECK(impl_, "use of undefined tensor");
  GEOD_CHECK(impl_->node_id < 0, "in-place mutation of a recorded tensor");
  return impl_->values;
}

double Tensor::item() const {
  GEOD_CHECK(numel() == 1, "item() on tensor of shape " << shape_str(shape()));
  return values()[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  return values()[checked_index(shape(), idx)];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
  GEOD_CHECK(impl_, "use of undefined tensor");
  GEOD_CHECK(!v || impl_->node_id < 0, "set_requires_grad on a recorded tensor");
  impl_->requires_grad = v;
  return *this;
}

Tensor Tensor::detach() const {
  GEOD_CHECK(impl_, "use of undefined tensor");
  return make_tensor(impl_->shape, impl_->values);
}

// ---------------------------------------------------------------------------
// Op table
// ---------------------------------------------------------------------------

namespace {

struct OpInfo {
  Op op;
  const char* name;
  // Closed under differentiation: the VJP emits only ops whose VJPs are in
  // turn expressible, so backward(create_graph=true) may pass through.
  bool graph_closed;
};

const OpInfo kOpTable[] = {
    {Op::kAdd, "add", true},
    {Op::kSub, "sub", true},
    {Op::kMul, "mul", true},
    {Op::kDiv, "div", true},
    {Op::kMatmul, "matmul", true},
    {Op::kSin, "sin", true},
    {Op::kExp, "exp", true},
    {Op::kLog, "log", true},
    {Op::kSoftplus, "softplus", true},
    {Op::kSigmoid, "sigmoid", true},
    {Op::kTanh, "tanh", true},
    {Op::kRelu, "relu", true},
    {Op::kMaxConst, "max_with_const", true},
    {Op::kClip, "clip", true},
    {Op::kSum, "sum", true},
    {Op::kMean, "mean", true},
    {Op::kReshape, "reshape", true},
    {Op::kConcat, "concat", true},
    {Op::kSlice, "slice", true},
    {Op::kBroadcast, "broadcast", true},
    {Op::kL2NormLast, "l2_normalize_lastdim", false},
    {Op::kGridSample, "grid_sample_bilinear", false},
    {Op::kFlip, "flip_horizontal", true},
    {Op::kConv2d, "conv2d_small", true},
    {Op::kConv2dDGrad, "conv2d_dgrad", true},
    {Op::kConv2dWGrad, "conv2d_wgrad", true},
};

const OpInfo& op_info(Op op) {
  for (const auto& e : kOpTable) {
    if (e.op == op) return e;
  }
  throw Error("unknown primitive op kind");
}

}  // namespace

const char* op_name(Op op) { return op_info(op).name; }

Op op_from_name(const std::string& name) {
  for (const auto& e : kOpTable) {
    if (name == e.name) return e.op;
  }
  throw Error("unknown primitive op kind: '" + name + "'");
}

// ---------------------------------------------------------------------------
// Forward evaluation
// ---------------------------------------------------------------------------

namespace {

void check_finite(const std::vector<double>& v, Op op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw Error(std::string("non-finite value produced by op '") + op_name(op) + "'");
    }
  }
}

using Values = std::vector<double>;

struct Evaluated {
  Shape shape;
  Values values;
};

Evaluated eval_binary(Op op, const std::vector<Tensor>& in, const OpAttrs& attrs) {
  const Tensor& a = in[0];
  Evaluated out{a.shape(), Values(a.numel())};
  const Values& av = a.values();
  auto apply_fn = [&](auto fn) {
    if (attrs.has_scalar) {
      double b = attrs.scalar;
      for (size_t i = 0; i < av.size(); ++i) out.values[i] = fn(av[i], b);
    } else {
      GEOD_CHECK(in.size() == 2, op_name(op) << ": expected two inputs");
      GEOD_CHECK(same_shape(a.shape(), in[1].shape()),
                 op_name(op) << ": shape mismatch " << shape_str(a.shape()) << " vs " << shape_str(in[1].shape()));
      const Values& bv = in[1].values();
      for (size_t i = 0; i < av.size(); ++i) out.values[i] = fn(av[i], bv[i]);
    }
  };
  switch (op) {
    case Op::kAdd: apply_fn([](double x, double y) { return x + y; }); break;
    case Op::kSub: apply_fn([](double x, double y) { return x - y; }); break;
    case Op::kMul: apply_fn([](double x, double y) { return x * y; }); break;
    case Op::kDiv: apply_fn([](double x, double y) { return x / y; }); break;
    default: throw Error("eval_binary: bad op");
  }
  return out;
}

Evaluated eval_unary(Op op, const Tensor& a) {
  Evaluated out{a.shape(), Values(a.numel())};
  const Values& av = a.values();
  auto apply_fn = [&](auto fn) {
    for (size_t i = 0; i < av.size(); ++i) out.values[i] = fn(av[i]);
  };
  switch (op) {
    case Op::kSin: apply_fn([](double x) { return std::sin(x); }); break;
    case Op::kExp: apply_fn([](double x) { return std::exp(x); }); break;
    case Op::kLog: apply_fn([](double x) { return std::log(x); }); break;
    // Stable softplus: log(1+e^x) = max(x,0) + log1p(e^-|x|).
    case Op::kSoftplus: apply_fn([](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }); break;
    case Op::kSigmoid: apply_fn([](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }); break;
    case Op::kTanh: apply_fn([](double x) { return std::tanh(x); }); break;
    case Op::kRelu: apply_fn([](double x) { return x > 0 ? x : 0.0; }); break;
    default: throw Error("eval_unary: bad op");
  }
  return out;
}

Evaluated eval_matmul(const std::vector<Tensor>& in, const OpAttrs& attrs) {
  init_blas_once();
  const Tensor& a = in[0];
  const Tensor& b = in[1];
  GEOD_CHECK(a.ndim() == 2 && b.ndim() == 2, "matmul: expected 2-D inputs, got "
                                                 << shape_str(a.shape()) << " and " << shape_str(b.shape()));
  int m = attrs.trans_a ? a.dim(1) : a.dim(0);
  int k = attrs.trans_a ? a.dim(0) : a.dim(1);
  int kb = attrs.trans_b ? b.dim(1) : b.dim(0);
  int n = attrs.trans_b ? b.dim(0) : b.dim(1);
  GEOD_CHECK(k == kb, "matmul: inner dims " << k << " vs " << kb);
  Evaluated out{{m, n}, Values(static_cast<size_t>(m) * n)};
  if (m > 0 && n > 0 && k > 0) {
    cblas_dgemm(CblasRowMajor, attrs.trans_a ? CblasTrans : CblasNoTrans,
                attrs.trans_b ? CblasTrans : CblasNoTrans, m, n, k, 1.0, a.values().data(),
                a.dim(1), b.values().data(), b.dim(1), 0.0, out.values.data(), n);
  }
  return out;
}

std::vector<int> normalize_axes(const std::vector<int>& axes, int ndim) {
  std::vector<int> ax = axes;
  if (ax.empty()) {
    ax.resize(ndim);
    std::iota(ax.begin(), ax.end(), 0);
  }
  std::sort(ax.begin(), ax.end());
  ax.erase(std::unique(ax.begin(), ax.end()), ax.end());
  for (int a : ax) GEOD_CHECK(a >= 0 && a < ndim, "reduce axis " << a << " out of range for rank " << ndim);
  return ax;
}

Shape reduced_shape(const Shape& s, const std::vector<int>& axes, bool keepdims) {
  Shape out;
  for (int d = 0; d < static_cast<int>(s.size()); ++d) {
    bool reduced = std::find(axes.begin(), axes.end(), d) != axes.end();
    if (!reduced) {
      out.push_back(s[d]);
    } else if (keepdims) {
      out.push_back(1);
    }
  }
  return out;
}

Evaluated eval_reduce(Op op, const Tensor& a, const OpAttrs& attrs) {
  std::vector<int> axes = normalize_axes(attrs.axes, a.ndim());
  Shape out_shape = reduced_shape(a.shape(), axes, attrs.keepdims);
  const Shape& s = a.shape();
  // Row-major iteration: map each input index to its output slot.
  std::vector<bool> is_reduced(s.size(), false);
  for (int ax : axes) is_reduced[ax] = true;
  int64_t out_n = shape_numel(out_shape);
  Values acc(out_n, 0.0);
  const Values& av = a.values();
  // Output strides over the non-reduced axes.
  std::vector<int64_t> out_stride(s.size(), 0);
  {
    int64_t stride = 1;
    for (int d = static_cast<int>(s.size()) - 1; d >= 0; --d) {
      if (!is_reduced[d]) {
        out_stride[d] = stride;
        stride *= s[d];
      }
    }
  }
  std::vector<int> idx(s.size(), 0);
  for (int64_t flat = 0; flat < static_cast<int64_t>(av.size()); ++flat) {
    int64_t o = 0;
    for (size_t d = 0; d < s.size(); ++d) o += out_stride[d] * idx[d];
    acc[o] += av[flat];
    for (int d = static_cast<int>(s.size()) - 1; d >= 0; --d) {
      if (++idx[d] < s[d]) break;
      idx[d] = 0;
    }
  }
  if (op == Op::kMean) {
    int64_t count = av.empty() ? 1 : av.size() / std::max<int64_t>(out_n, 1);
    for (double& x : acc) x /= static_cast<double>(count);
  }
  return {std::move(out_shape), std::move(acc)};
}

Evaluated eval_concat(const std::vector<Tensor>& in, const OpAttrs& attrs) {
  GEOD_CHECK(!in.empty(), "concat: no inputs");
  int axis = attrs.axis;
  const Shape& s0 = in[0].shape();
  GEOD_CHECK(axis >= 0 && axis < static_cast<int>(s0.size()), "concat: axis " << axis << " out of range");
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const Tensor& t : in) {
    const Shape& s = t.shape();
    GEOD_CHECK(s.size() == s0.size(), "concat: rank mismatch");
    for (size_t d = 0; d < s.size(); ++d) {
      if (static_cast<int>(d) != axis) GEOD_CHECK(s[d] == s0[d], "concat: shape mismatch on axis " << d);
    }
    out_shape[axis] += s[axis];
  }
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s0[d];
  for (int d = axis + 1; d < static_cast<int>(s0.size()); ++d) inner *= s0[d];
  Evaluated out{out_shape, Values(shape_numel(out_shape))};
  int64_t out_row = static_cast<int64_t>(out_shape[axis]) * inner;
  int64_t offset = 0;
  for (const Tensor& t : in) {
    int64_t rows = static_cast<int64_t>(t.shape()[axis]) * inner;
    const Values& tv = t.values();
    for (int64_t g = 0; g < outer; ++g) {
      std::memcpy(out.values.data() + g * out_row + offset, tv.data() + g * rows, rows * sizeof(double));
    }
    offset += rows;
  }
  return out;
}

Evaluated eval_slice(const Tensor& a, const OpAttrs& attrs) {
  const Shape& s = a.shape();
  int axis = attrs.axis;
  GEOD_CHECK(axis >= 0 && axis < static_cast<int>(s.size()), "slice: axis out of range");
  GEOD_CHECK(attrs.start >= 0 && attrs.stop <= s[axis] && attrs.start < attrs.stop,
             "slice: bad range [" << attrs.start << "," << attrs.stop << ") for axis size " << s[axis]);
  Shape out_shape = s;
  out_shape[axis] = attrs.stop - attrs.start;
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[d];
  for (int d = axis + 1; d < static_cast<int>(s.size()); ++d) inner *= s[d];
  Evaluated out{out_shape, Values(shape_numel(out_shape))};
  const Values& av = a.values();
  int64_t in_row = static_cast<int64_t>(s[axis]) * inner;
  int64_t out_row = static_cast<int64_t>(out_shape[axis]) * inner;
  for (int64_t g = 0; g < outer; ++g) {
    std::memcpy(out.values.data() + g * out_row, av.data() + g * in_row + attrs.start * inner,
                out_row * sizeof(double));
  }
  return out;
}

Evaluated eval_broadcast(const Tensor& a, const OpAttrs& attrs) {
  const Shape& in_s = a.shape();
  const Shape& out_s = attrs.shape;
  GEOD_CHECK(in_s.size() <= out_s.size(), "broadcast: target rank smaller than input");
  int k = static_cast<int>(out_s.size() - in_s.size());
  for (size_t d = 0; d < in_s.size(); ++d) {
    GEOD_CHECK(in_s[d] == out_s[d + k] || in_s[d] == 1,
               "broadcast: dim " << d << " (" << in_s[d] << ") incompatible with target " << out_s[d + k]);
  }
  Evaluated out{out_s, Values(shape_numel(out_s))};
  const Values& av = a.values();
  std::vector<int64_t> in_stride(out_s.size(), 0);
  {
    int64_t stride = 1;
    for (int d = static_cast<int>(in_s.size()) - 1; d >= 0; --d) {
      in_stride[d + k] = (in_s[d] == 1) ? 0 : stride;
      stride *= in_s[d];
    }
  }
  std::vector<int> idx(out_s.size(), 0);
  for (int64_t flat = 0; flat < static_cast<int64_t>(out.values.size()); ++flat) {
    int64_t src = 0;
    for (size_t d = 0; d < out_s.size(); ++d) src += in_stride[d] * idx[d];
    out.values[flat] = av[src];
    for (int d = static_cast<int>(out_s.size()) - 1; d >= 0; --d) {
      if (++idx[d] < out_s[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

Evaluated eval_l2norm_last(const Tensor& a, const OpAttrs& attrs) {
  const Shape& s = a.shape();
  GEOD_CHECK(!s.empty(), "l2_normalize_lastdim: scalar input");
  int64_t last = s.back();
  int64_t rows = a.numel() / std::max<int64_t>(last, 1);
  Evaluated out{s, Values(a.numel())};
  const Values& av = a.values();
  for (int64_t r = 0; r < rows; ++r) {
    double ss = attrs.eps;
    for (int64_t c = 0; c < last; ++c) ss += av[r * last + c] * av[r * last + c];
    double inv = 1.0 / std::sqrt(ss);
    for (int64_t c = 0; c < last; ++c) out.values[r * last + c] = av[r * last + c] * inv;
  }
  return out;
}

// Bilinear sample with clamp-to-edge; coords are (u,v) pixel centers, so
// (0,0) reads the corner texel exactly.
Evaluated eval_grid_sample(const Tensor& img, const Tensor& coords) {
  GEOD_CHECK(img.ndim() == 3, "grid_sample: image must be [H,W,C], got " << shape_str(img.shape()));
  GEOD_CHECK(coords.ndim() >= 1 && coords.shape().back() == 2,
             "grid_sample: coords must end in 2, got " << shape_str(coords.shape()));
  int h = img.dim(0), w = img.dim(1), c = img.dim(2);
  int64_t q = coords.numel() / 2;
  Shape out_shape(coords.shape().begin(), coords.shape().end() - 1);
  out_shape.push_back(c);
  Evaluated out{out_shape, Values(q * c)};
  const Values& iv = img.values();
  const Values& cv = coords.values();
  for (int64_t i = 0; i < q; ++i) {
    double u = std::clamp(cv[i * 2 + 0], 0.0, static_cast<double>(w - 1));
    double v = std::clamp(cv[i * 2 + 1], 0.0, static_cast<double>(h - 1));
    int x0 = static_cast<int>(std::floor(u));
    int y0 = static_cast<int>(std::floor(v));
    int x1 = std::min(x0 + 1, w - 1);
    int y1 = std::min(y0 + 1, h - 1);
    double fu = u - x0, fv = v - y0;
    for (int ch = 0; ch < c; ++ch) {
      double v00 = iv[(static_cast<int64_t>(y0) * w + x0) * c + ch];
      double v01 = iv[(static_cast<int64_t>(y0) * w + x1) * c + ch];
      double v10 = iv[(static_cast<int64_t>(y1) * w + x0) * c + ch];
      double v11 = iv[(static_cast<int64_t>(y1) * w + x1) * c + ch];
      out.values[i * c + ch] =
          (1 - fv) * ((1 - fu) * v00 + fu * v01) + fv * ((1 - fu) * v10 + fu * v11);
    }
  }
  return out;
}

Evaluated eval_flip(const Tensor& a, const OpAttrs& attrs) {
  const Shape& s = a.shape();
  int axis = attrs.axis;
  GEOD_CHECK(axis >= 0 && axis < static_cast<int>(s.size()), "flip: axis out of range");
  Evaluated out{s, Values(a.numel())};
  const Values& av = a.values();
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[d];
  for (int d = axis + 1; d < static_cast<int>(s.size()); ++d) inner *= s[d];
  int64_t n = s[axis];
  for (int64_t g = 0; g < outer; ++g) {
    for (int64_t i = 0; i < n; ++i) {
      std::memcpy(out.values.data() + (g * n + i) * inner, av.data() + (g * n + (n - 1 - i)) * inner,
                  inner * sizeof(double));
    }
  }
  return out;
}

// im2col layout: [Ci*kh*kw, Ho*Wo], so conv = W[Co, Ci*kh*kw] @ cols.
void im2col(const Values& x, int ci, int h, int w, int kh, int kw, int stride, int pad, int ho,
            int wo, Values& cols) {
  cols.assign(static_cast<size_t>(ci) * kh * kw * ho * wo, 0.0);
  int64_t spatial = static_cast<int64_t>(ho) * wo;
  for (int c = 0; c < ci; ++c) {
    for (int a = 0; a < kh; ++a) {
      for (int b = 0; b < kw; ++b) {
        int64_t row = (static_cast<int64_t>(c) * kh + a) * kw + b;
        double* dst = cols.data() + row * spatial;
        for (int i = 0; i < ho; ++i) {
          int yy = i * stride + a - pad;
          if (yy < 0 || yy >= h) continue;
          const double* src = x.data() + (static_cast<int64_t>(c) * h + yy) * w;
          for (int j = 0; j < wo; ++j) {
            int xx = j * stride + b - pad;
            if (xx >= 0 && xx < w) dst[static_cast<int64_t>(i) * wo + j] = src[xx];
          }
        }
      }
    }
  }
}

void col2im(const Values& cols, int ci, int h, int w, int kh, int kw, int stride, int pad, int ho,
            int wo, Values& x) {
  x.assign(static_cast<size_t>(ci) * h * w, 0.0);
  int64_t spatial = static_cast<int64_t>(ho) * wo;
  for (int c = 0; c < ci; ++c) {
    for (int a = 0; a < kh; ++a) {
      for (int b = 0; b < kw; ++b) {
        int64_t row = (static_cast<int64_t>(c) * kh + a) * kw + b;
        const double* src = cols.data() + row * spatial;
        for (int i = 0; i < ho; ++i) {
          int yy = i * stride + a - pad;
          if (yy < 0 || yy >= h) continue;
          double* dst = x.data() + (static_cast<int64_t>(c) * h + yy) * w;
          for (int j = 0; j < wo; ++j) {
            int xx = j * stride + b - pad;
            if (xx >= 0 && xx < w) dst[xx] += src[static_cast<int64_t>(i) * wo + j];
          }
        }
      }
    }
  }
}

int conv_out_size(int in, int k, int stride, int pad) {
  int out = (in + 2 * pad - k) / stride + 1;
  GEOD_CHECK(out > 0, "conv: non-positive output size");
  GEOD_CHECK((out - 1) * stride + k - 2 * pad == in || (out - 1) * stride + k - 2 * pad <= in,
             "conv: geometry mismatch");
  return out;
}

Evaluated eval_conv2d(const std::vector<Tensor>& in, const OpAttrs& attrs) {
  init_blas_once();
  const Tensor& x = in[0];
  const Tensor& w = in[1];
  GEOD_CHECK(x.ndim() == 3 && w.ndim() == 4, "conv2d: expected x [Ci,H,W], w [Co,Ci,kh,kw], got "
                                                 << shape_str(x.shape()) << " and " << shape_str(w.shape()));
  int ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
  int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  GEOD_CHECK(w.dim(1) == ci, "conv2d: channel mismatch " << w.dim(1) << " vs " << ci);
  int ho = conv_out_size(h, kh, attrs.stride, attrs.pad);
  int wo = conv_out_size(wd, kw, attrs.stride, attrs.pad);
  Values cols;
  im2col(x.values(), ci, h, wd, kh, kw, attrs.stride, attrs.pad, ho, wo, cols);
  Evaluated out{{co, ho, wo}, Values(static_cast<size_t>(co) * ho * wo)};
  int m = co, k = ci * kh * kw, n = ho * wo;
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, m, n, k, 1.0, w.values().data(), k,
              cols.data(), n, 0.0, out.values.data(), n);
  return out;
}

// Transposed conv: distributes g [Co,Ho,Wo] back through w to an x-shaped map.
Evaluated eval_conv2d_dgrad(const std::vector<Tensor>& in, const OpAttrs& attrs) {
  init_blas_once();
  const Tensor& g = in[0];
  const Tensor& w = in[1];
  GEOD_CHECK(g.ndim() == 3 && w.ndim() == 4 && attrs.shape.size() == 3, "conv2d_dgrad: bad inputs");
  int co = g.dim(0), ho = g.dim(1), wo = g.dim(2);
  int ci = attrs.shape[0], h = attrs.shape[1], wd = attrs.shape[2];
  GEOD_CHECK(w.dim(0) == co && w.dim(1) == ci, "conv2d_dgrad: channel mismatch");
  int kh = w.dim(2), kw = w.dim(3);
  GEOD_CHECK(conv_out_size(h, kh, attrs.stride, attrs.pad) == ho &&
                 conv_out_size(wd, kw, attrs.stride, attrs.pad) == wo,
             "conv2d_dgrad: geometry mismatch");
  // cols = W^T [Ci*kh*kw, Co] @ g [Co, Ho*Wo], then col2im scatters.
  int m = ci * kh * kw, k = co, n = ho * wo;
  Values cols(static_cast<size_t>(m) * n);
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, m, n, k, 1.0, w.values().data(), m,
              g.values().data(), n, 0.0, cols.data(), n);
  Evaluated out{attrs.shape, {}};
  col2im(cols, ci, h, wd, kh, kw, attrs.stride, attrs.pad, ho, wo, out.values);
  return out;
}

Evaluated eval_conv2d_wgrad(const std::vector<Tensor>& in, const OpAttrs& attrs) {
  init_blas_once();
  const Tensor& g = in[0];
  const Tensor& x = in[1];
  GEOD_CHECK(g.ndim() == 3 && x.ndim() == 3 && attrs.shape.size() == 4, "conv2d_wgrad: bad inputs");
  int co = g.dim(0), ho = g.dim(1), wo = g.dim(2);
  int ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
  int kh = attrs.shape[2], kw = attrs.shape[3];
  GEOD_CHECK(attrs.shape[0] == co && attrs.shape[1] == ci, "conv2d_wgrad: channel mismatch");
  GEOD_CHECK(conv_out_size(h, kh, attrs.stride, attrs.pad) == ho &&
                 conv_out_size(wd, kw, attrs.stride, attrs.pad) == wo,
             "conv2d_wgrad: geometry mismatch");
  Values cols;
  im2col(x.values(), ci, h, wd, kh, kw, attrs.stride, attrs.pad, ho, wo, cols);
  // dw [Co, Ci*kh*kw] = g [Co, Ho*Wo] @ cols^T.
  int m = co, k = ho * wo, n = ci * kh * kw;
  Evaluated out{attrs.shape, Values(static_cast<size_t>(m) * n)};
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, m, n, k, 1.0, g.values().data(), k,
              cols.data(), k, 0.0, out.values.data(), n);
  return out;
}

Evaluated evaluate(Op kind, const std::vector<Tensor>& in, const OpAttrs& attrs) {
  switch (kind) {
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv:
      GEOD_CHECK(!in.empty(), "binary op: missing inputs");
      return eval_binary(kind, in, attrs);
    case Op::kSin:
    case Op::kExp:
    case Op::kLog:
    case Op::kSoftplus:
    case Op::kSigmoid:
    case Op::kTanh:
    case Op::kRelu:
      GEOD_CHECK(in.size() == 1, "unary op: expected one input");
      return eval_unary(kind, in[0]);
    case Op::kMaxConst: {
      GEOD_CHECK(in.size() == 1, "max_with_const: expected one input");
      Evaluated out{in[0].shape(), Values(in[0].numel())};
      const Values& av = in[0].values();
      for (size_t i = 0; i < av.size(); ++i) out.values[i] = std::max(av[i], attrs.scalar);
      return out;
    }
    case Op::kClip: {
      GEOD_CHECK(in.size() == 1, "clip: expected one input");
      GEOD_CHECK(attrs.lo <= attrs.hi, "clip: lo > hi");
      Evaluated out{in[0].shape(), Values(in[0].numel())};
      const Values& av = in[0].values();
      for (size_t i = 0; i < av.size(); ++i) out.values[i] = std::clamp(av[i], attrs.lo, attrs.hi);
      return out;
    }
    case Op::kMatmul:
      GEOD_CHECK(in.size() == 2, "matmul: expected two inputs");
      return eval_matmul(in, attrs);
    case Op::kSum:
    case Op::kMean:
      GEOD_CHECK(in.size() == 1, "reduce: expected one input");
      return eval_reduce(kind, in[0], attrs);
    case Op::kReshape: {
      GEOD_CHECK(in.size() == 1, "reshape: expected one input");
      GEOD_CHECK(shape_numel(attrs.shape) == in[0].numel(),
                 "reshape: numel mismatch " << shape_str(in[0].shape()) << " -> " << shape_str(attrs.shape));
      return {attrs.shape, in[0].values()};
    }
    case Op::kConcat:
      return eval_concat(in, attrs);
    case Op::kSlice:
      GEOD_CHECK(in.size() == 1, "slice: expected one input");
      return eval_slice(in[0], attrs);
    case Op::kBroadcast:
      GEOD_CHECK(in.size() == 1, "broadcast: expected one input");
      return eval_broadcast(in[0], attrs);
    case Op::kL2NormLast:
      GEOD_CHECK(in.size() == 1, "l2_normalize_lastdim: expected one input");
      return eval_l2norm_last(in[0], attrs);
    case Op::kGridSample:
      GEOD_CHECK(in.size() == 2, "grid_sample: expected image and coords");
      return eval_grid_sample(in[0], in[1]);
    case Op::kFlip:
      GEOD_CHECK(in.size() == 1, "flip: expected one input");
      return eval_flip(in[0], attrs);
    case Op::kConv2d:
      GEOD_CHECK(in.size() == 2, "conv2d: expected x and w");
      return eval_conv2d(in, attrs);
    case Op::kConv2dDGrad:
      GEOD_CHECK(in.size() == 2, "conv2d_dgrad: expected g and w");
      return eval_conv2d_dgrad(in, attrs);
    case Op::kConv2dWGrad:
      GEOD_CHECK(in.size() == 2, "conv2d_wgrad: expected g and x");
      return eval_conv2d_wgrad(in, attrs);
  }
  throw Error("unknown primitive op kind");
}

}  // namespace

// ---------------------------------------------------------------------------
// apply + tape
// ---------------------------------------------------------------------------

bool grad_recording_enabled() { return g_recording; }

NoGradGuard::NoGradGuard() : prev_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = prev_; }

namespace {
// Scoped force-set used by backward: create_graph=true must record even if
// the caller wrapped backward in something, create_graph=false must not.
class RecordingOverride {
 public:
  explicit RecordingOverride(bool enable) : prev_(g_recording) { g_recording = enable; }
  ~RecordingOverride() { g_recording = prev_; }

 private:
  bool prev_;
};
}  // namespace

Tape& Tape::active() {
  static thread_local Tape tape;
  return tape;
}

int Tape::record(TapeNode node) {
  nodes_.push_back(std::move(node));
  int id = static_cast<int>(nodes_.size()) - 1;
  nodes_[id].output.impl()->node_id = id;
  nodes_[id].output.impl()->tape_epoch = epoch_;
  return id;
}

void Tape::clear() {
  // Outputs keep their node_id/epoch so a later backward through them is
  // caught as a stale-tape error; their values stay readable.
  nodes_.clear();
  ++epoch_;
  consumed_ = false;
}

Tensor apply(Op kind, const std::vector<Tensor>& inputs, const OpAttrs& attrs) {
  for (const Tensor& t : inputs) GEOD_CHECK(t.defined(), op_name(kind) << ": undefined input tensor");
  Evaluated ev = evaluate(kind, inputs, attrs);
  check_finite(ev.values, kind);
  Tensor out = make_tensor(std::move(ev.shape), std::move(ev.values));
  bool needs_grad = false;
  for (const Tensor& t : inputs) needs_grad = needs_grad || t.requires_grad();
  if (needs_grad && g_recording) {
    out.impl()->requires_grad = true;
    Tape::active().record(TapeNode{kind, attrs, inputs, out});
  }
  return out;
}

// ---------------------------------------------------------------------------
// VJPs
// ---------------------------------------------------------------------------

namespace {

Tensor constant_like(const Tensor& t, std::vector<double> values) {
  return Tensor::from_data(t.shape(), std::move(values));
}

// VJP for one node; slots align with node.inputs, undefined tensor = no grad.
std::vector<Tensor> vjp(const TapeNode& node, const Tensor& g, bool create_graph) {
  const auto& in = node.inputs;
  const OpAttrs& at = node.attrs;
  const Tensor& y = node.output;
  if (create_graph && !op_info(node.kind).graph_closed) {
    throw Error(std::string("backward(create_graph): op '") + op_name(node.kind) +
                "' is not closed under differentiation");
  }
  switch (node.kind) {
    case Op::kAdd:
      return at.has_scalar ? std::vector<Tensor>{g} : std::vector<Tensor>{g, g};
    case Op::kSub:
      return at.has_scalar ? std::vector<Tensor>{g} : std::vector<Tensor>{g, neg(g)};
    case Op::kMul:
      return at.has_scalar ? std::vector<Tensor>{mul(g, at.scalar)}
                           : std::vector<Tensor>{mul(g, in[1]), mul(g, in[0])};
    case Op::kDiv:
      return at.has_scalar ? std::vector<Tensor>{mul(g, 1.0 / at.scalar)}
                           : std::vector<Tensor>{div(g, in[1]), neg(div(mul(g, y), in[1]))};
    case Op::kMatmul: {
      Tensor da, db;
      if (!at.trans_a) {
        da = matmul(g, in[1], false, !at.trans_b);
      } else {
        da = matmul(in[1], g, at.trans_b, true);
      }
      if (!at.trans_b) {
        db = matmul(in[0], g, !at.trans_a, false);
      } else {
        db = matmul(g, in[0], true, at.trans_a);
      }
      return {da, db};
    }
    case Op::kSin:
      return {mul(g, cos_t(in[0]))};
    case Op::kExp:
      return {mul(g, y)};
    case Op::kLog:
      return {div(g, in[0])};
    case Op::kSoftplus:
      return {mul(g, sigmoid(in[0]))};
    case Op::kSigmoid:
      return {mul(g, mul(y, add(neg(y), 1.0)))};
    case Op::kTanh:
      return {mul(g, add(neg(mul(y, y)), 1.0))};
    case Op::kRelu:
    case Op::kMaxConst:
    case Op::kClip: {
      const Values& xv = in[0].values();
      std::vector<double> mask(xv.size());
      if (node.kind == Op::kRelu) {
        for (size_t i = 0; i < xv.size(); ++i) mask[i] = xv[i] > 0 ? 1.0 : 0.0;
      } else if (node.kind == Op::kMaxConst) {
        for (size_t i = 0; i < xv.size(); ++i) mask[i] = xv[i] > at.scalar ? 1.0 : 0.0;
      } else {
        for (size_t i = 0; i < xv.size(); ++i) mask[i] = (xv[i] > at.lo && xv[i] < at.hi) ? 1.0 : 0.0;
      }
      return {mul(g, constant_like(in[0], std::move(mask)))};
    }
    case Op::kSum: {
      std::vector<int> axes = normalize_axes(at.axes, in[0].ndim());
      Shape keep = reduced_shape(in[0].shape(), axes, true);
      return {broadcast_to(reshape(g, keep), in[0].shape())};
    }
    case Op::kMean: {
      std::vector<int> axes = normalize_axes(at.axes, in[0].ndim());
      Shape keep = reduced_shape(in[0].shape(), axes, true);
      int64_t count = 1;
      for (int ax : axes) count *= in[0].shape()[ax];
      return {broadcast_to(reshape(mul(g, 1.0 / static_cast<double>(count)), keep), in[0].shape())};
    }
    case Op::kReshape:
      return {reshape(g, in[0].shape())};
    case Op::kConcat: {
      std::vector<Tensor> grads;
      int offset = 0;
      for (const Tensor& t : in) {
        int extent = t.shape()[at.axis];
        grads.push_back(slice(g, at.axis, offset, offset + extent));
        offset += extent;
      }
      return grads;
    }
    case Op::kSlice: {
      // Zero-pad g back to the input extent along the axis.
      const Shape& s = in[0].shape();
      std::vector<Tensor> pieces;
      if (at.start > 0) {
        Shape z = s;
        z[at.axis] = at.start;
        pieces.push_back(Tensor::zeros(z));
      }
      pieces.push_back(g);
      if (at.stop < s[at.axis]) {
        Shape z = s;
        z[at.axis] = s[at.axis] - at.stop;
        pieces.push_back(Tensor::zeros(z));
      }
      return {pieces.size() == 1 ? g : concat(pieces, at.axis)};
    }
    case Op::kBroadcast: {
      const Shape& in_s = in[0].shape();
      const Shape& out_s = at.shape;
      int k = static_cast<int>(out_s.size() - in_s.size());
      std::vector<int> axes;
      for (int d = 0; d < static_cast<int>(out_s.size()); ++d) {
        if (d < k || in_s[d - k] == 1) axes.push_back(d);
      }
      Tensor r = axes.empty() ? g : sum(g, axes, true);
      return {reshape(r, in_s)};
    }
    case Op::kL2NormLast: {
      // d(x/r) = (g - y * sum(g*y, last)) / r with r recomputed from x.
      const Shape& s = in[0].shape();
      int64_t last = s.back();
      int64_t rows = in[0].numel() / std::max<int64_t>(last, 1);
      const Values& xv = in[0].values();
      std::vector<double> rinv(in[0].numel());
      for (int64_t r = 0; r < rows; ++r) {
        double ss = at.eps;
        for (int64_t c = 0; c < last; ++c) ss += xv[r * last + c] * xv[r * last + c];
        double inv = 1.0 / std::sqrt(ss);
        for (int64_t c = 0; c < last; ++c) rinv[r * last + c] = inv;
      }
      int last_axis = static_cast<int>(s.size()) - 1;
      Tensor dot = sum(mul(g, y), {last_axis}, true);
      return {mul(sub(g, mul(y, broadcast_to(dot, s))), constant_like(in[0], std::move(rinv)))};
    }
    case Op::kGridSample: {
      const Tensor& img = in[0];
      const Tensor& coords = in[1];
      int h = img.dim(0), w = img.dim(1), c = img.dim(2);
      int64_t q = coords.numel() / 2;
      const Values& iv = img.values();
      const Values& cv = coords.values();
      const Values& gv = g.values();
      std::vector<double> dimg(img.numel(), 0.0);
      std::vector<double> dco(coords.numel(), 0.0);
      for (int64_t i = 0; i < q; ++i) {
        double uraw = cv[i * 2 + 0], vraw = cv[i * 2 + 1];
        double u = std::clamp(uraw, 0.0, static_cast<double>(w - 1));
        double v = std::clamp(vraw, 0.0, static_cast<double>(h - 1));
        bool u_in = uraw > 0.0 && uraw < static_cast<double>(w - 1);
        bool v_in = vraw > 0.0 && vraw < static_cast<double>(h - 1);
        int x0 = static_cast<int>(std::floor(u));
        int y0 = static_cast<int>(std::floor(v));
        int x1 = std::min(x0 + 1, w - 1);
        int y1 = std::min(y0 + 1, h - 1);
        double fu = u - x0, fv = v - y0;
        for (int ch = 0; ch < c; ++ch) {
          double go = gv[i * c + ch];
          if (go == 0.0) continue;
          int64_t i00 = (static_cast<int64_t>(y0) * w + x0) * c + ch;
          int64_t i01 = (static_cast<int64_t>(y0) * w + x1) * c + ch;
          int64_t i10 = (static_cast<int64_t>(y1) * w + x0) * c + ch;
          int64_t i11 = (static_cast<int64_t>(y1) * w + x1) * c + ch;
          dimg[i00] += go * (1 - fv) * (1 - fu);
          dimg[i01] += go * (1 - fv) * fu;
          dimg[i10] += go * fv * (1 - fu);
          dimg[i11] += go * fv * fu;
          if (u_in) dco[i * 2 + 0] += go * ((1 - fv) * (iv[i01] - iv[i00]) + fv * (iv[i11] - iv[i10]));
          if (v_in) dco[i * 2 + 1] += go * ((1 - fu) * (iv[i10] - iv[i00]) + fu * (iv[i11] - iv[i01]));
        }
      }
      return {constant_like(img, std::move(dimg)), constant_like(coords, std::move(dco))};
    }
    case Op::kFlip:
      return {flip(g, at.axis)};
    case Op::kConv2d: {
      OpAttrs da = at;
      da.shape = in[0].shape();
      OpAttrs dw = at;
      dw.shape = in[1].shape();
      return {apply(Op::kConv2dDGrad, {g, in[1]}, da), apply(Op::kConv2dWGrad, {g, in[0]}, dw)};
    }
    case Op::kConv2dDGrad: {
      // Forward was u = dgrad(g0, w); seed g is u-shaped.
      OpAttrs ca;
      ca.stride = at.stride;
      ca.pad = at.pad;
      OpAttrs dw;
      dw.stride = at.stride;
      dw.pad = at.pad;
      dw.shape = in[1].shape();
      return {apply(Op::kConv2d, {g, in[1]}, ca), apply(Op::kConv2dWGrad, {in[0], g}, dw)};
    }
    case Op::kConv2dWGrad: {
      // Forward was v = wgrad(g0, x); seed g is w-shaped.
      OpAttrs ca;
      ca.stride = at.stride;
      ca.pad = at.pad;
      OpAttrs dx;
      dx.stride = at.stride;
      dx.pad = at.pad;
      dx.shape = in[1].shape();
      return {apply(Op::kConv2d, {in[1], g}, ca), apply(Op::kConv2dDGrad, {in[0], g}, dx)};
    }
  }
  throw Error("vjp: unknown op kind");
}

}  // namespace

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

Tensor GradMap::get(const Tensor& t) const {
  auto it = grads.find(t.impl());
  if (it == grads.end()) return Tensor::zeros(t.shape());
  return it->second;
}

bool GradMap::has(const Tensor& t) const { return grads.count(t.impl()) > 0; }

void GradMap::accumulate(const std::shared_ptr<TensorImpl>& key, const Tensor& g) {
  auto it = grads.find(key.get());
  if (it == grads.end()) {
    grads.emplace(key.get(), g);
  } else {
    it->second = add(it->second, g);
  }
}

GradMap Tape::backward(const Tensor& loss, bool create_graph) {
  GEOD_CHECK(loss.defined(), "backward: undefined loss");
  GEOD_CHECK(loss.numel() == 1, "backward: loss must be scalar, got " << shape_str(loss.shape()));
  GradMap out;
  TensorImpl* li = loss.impl();
  if (li->node_id < 0) {
    if (li->requires_grad) out.accumulate(loss.impl_ptr(), Tensor::full(loss.shape(), 1.0));
    return out;
  }
  GEOD_CHECK(li->tape_epoch == epoch_, "backward: loss belongs to a cleared tape");
  GEOD_CHECK(!consumed_,
             "backward: tape already consumed by a previous backward(); "
             "re-run the forward pass or use create_graph for the first sweep");
  if (!create_graph) consumed_ = true;

  RecordingOverride rec(create_graph);
  std::vector<Tensor> node_grads(li->node_id + 1);
  node_grads[li->node_id] = Tensor::full(loss.shape(), 1.0);
  for (int id = li->node_id; id >= 0; --id) {
    if (!node_grads[id].defined()) continue;
    // Copy: with create_graph the VJPs append to nodes_, which may reallocate.
    TapeNode node = nodes_[id];
    std::vector<Tensor> gs = vjp(node, node_grads[id], create_graph);
    GEOD_CHECK(gs.size() == node.inputs.size(), "vjp arity mismatch for op " << op_name(node.kind));
    for (size_t i = 0; i < node.inputs.size(); ++i) {
      const Tensor& input = node.inputs[i];
      if (!input.requires_grad() || !gs[i].defined()) continue;
      TensorImpl* ii = input.impl();
      if (ii->node_id >= 0) {
        GEOD_CHECK(ii->tape_epoch == epoch_, "backward: input from a cleared tape");
        GEOD_CHECK(ii->node_id < id, "backward: tape order violated");
        Tensor& slot = node_grads[ii->node_id];
        slot = slot.defined() ? add(slot, gs[i]) : gs[i];
      } else {
        out.accumulate(input.impl_ptr(), gs[i]);
      }
    }
  }
  return out;
}

GradMap backward(const Tensor& loss, bool create_graph) {
  return Tape::active().backward(loss, create_graph);
}

// ---------------------------------------------------------------------------
// Sugar
// ---------------------------------------------------------------------------

namespace {
Tensor binary_scalar(Op op, const Tensor& a, double b) {
  OpAttrs at;
  at.has_scalar = true;
  at.scalar = b;
  return apply(op, {a}, at);
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return apply(Op::kAdd, {a, b}); }
Tensor add(const Tensor& a, double b) { return binary_scalar(Op::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return apply(Op::kSub, {a, b}); }
Tensor sub(const Tensor& a, double b) { return binary_scalar(Op::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return apply(Op::kMul, {a, b}); }
Tensor mul(const Tensor& a, double b) { return binary_scalar(Op::kMul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return apply(Op::kDiv, {a, b}); }
Tensor div(const Tensor& a, double b) { return binary_scalar(Op::kDiv, a, b); }
Tensor neg(const Tensor& a) { return mul(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  OpAttrs at;
  at.trans_a = trans_a;
  at.trans_b = trans_b;
  return apply(Op::kMatmul, {a, b}, at);
}

Tensor sin_t(const Tensor& x) { return apply(Op::kSin, {x}); }
Tensor cos_t(const Tensor& x) { return sin_t(add(x, M_PI / 2)); }
Tensor exp_t(const Tensor& x) { return apply(Op::kExp, {x}); }
Tensor log_t(const Tensor& x) { return apply(Op::kLog, {x}); }
Tensor softplus(const Tensor& x) { return apply(Op::kSoftplus, {x}); }
Tensor sigmoid(const Tensor& x) { return apply(Op::kSigmoid, {x}); }
Tensor tanh_t(const Tensor& x) { return apply(Op::kTanh, {x}); }
Tensor relu(const Tensor& x) { return apply(Op::kRelu, {x}); }

Tensor leaky_relu(const Tensor& x, double slope) {
  return sub(relu(x), mul(relu(neg(x)), slope));
}

Tensor max_const(const Tensor& x, double c) {
  OpAttrs at;
  at.scalar = c;
  return apply(Op::kMaxConst, {x}, at);
}

Tensor clip(const Tensor& x, double lo, double hi) {
  OpAttrs at;
  at.lo = lo;
  at.hi = hi;
  return apply(Op::kClip, {x}, at);
}

Tensor abs_t(const Tensor& x) { return add(relu(x), relu(neg(x))); }

Tensor sum(const Tensor& x, const std::vector<int>& axes, bool keepdims) {
  OpAttrs at;
  at.axes = axes;
  at.keepdims = keepdims;
  return apply(Op::kSum, {x}, at);
}

Tensor mean(const Tensor& x, const std::vector<int>& axes, bool keepdims) {
  OpAttrs at;
  at.axes = axes;
  at.keepdims = keepdims;
  return apply(Op::kMean, {x}, at);
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  OpAttrs at;
  at.shape = shape;
  return apply(Op::kReshape, {x}, at);
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  OpAttrs at;
  at.axis = axis;
  return apply(Op::kConcat, xs, at);
}

Tensor slice(const Tensor& x, int axis, int start, int stop) {
  OpAttrs at;
  at.axis = axis;
  at.start = start;
  at.stop = stop;
  return apply(Op::kSlice, {x}, at);
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  OpAttrs at;
  at.shape = shape;
  return apply(Op::kBroadcast, {x}, at);
}

Tensor l2_normalize_last(const Tensor& x, double eps) {
  OpAttrs at;
  at.eps = eps;
  return apply(Op::kL2NormLast, {x}, at);
}

Tensor grid_sample_bilinear(const Tensor& image, const Tensor& coords) {
  return apply(Op::kGridSample, {image, coords});
}

Tensor flip(const Tensor& x, int axis) {
  OpAttrs at;
  at.axis = axis;
  return apply(Op::kFlip, {x}, at);
}

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
  OpAttrs at;
  at.stride = stride;
  at.pad = pad;
  return apply(Op::kConv2d, {x, w}, at);
}

Tensor hwc_to_chw(const Tensor& x) {
  GEOD_CHECK(x.ndim() == 3, "hwc_to_chw: expect [H,W,C], got " << shape_str(x.shape()));
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  std::vector<Tensor> planes;
  planes.reserve(c);
  for (int i = 0; i < c; ++i) planes.push_back(reshape(slice(x, 2, i, i + 1), {1, h, w}));
  return concat(planes, 0);
}

Tensor chw_to_hwc(const Tensor& x) {
  GEOD_CHECK(x.ndim() == 3, "chw_to_hwc: expect [C,H,W], got " << shape_str(x.shape()));
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<Tensor> planes;
  planes.reserve(c);
  for (int i = 0; i < c; ++i) planes.push_back(reshape(slice(x, 0, i, i + 1), {h, w, 1}));
  return concat(planes, 2);
}

Tensor upsample2x_nearest(const Tensor& x) {
  GEOD_CHECK(x.ndim() == 3, "upsample2x_nearest: expect [C,H,W], got " << shape_str(x.shape()));
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor wide = broadcast_to(reshape(x, {c, h, 1, w, 1}), {c, h, 2, w, 2});
  return reshape(wide, {c, 2 * h, 2 * w});
}

Tensor avgpool2x(const Tensor& x) {
  GEOD_CHECK(x.ndim() == 3, "avgpool2x: expect [C,H,W], got " << shape_str(x.shape()));
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  GEOD_CHECK(h % 2 == 0 && w % 2 == 0, "avgpool2x: spatial size " << h << "x" << w
                                                                  << " must be even");
  return mean(reshape(x, {c, h / 2, 2, w / 2, 2}), {2, 4});
}

// ---------------------------------------------------------------------------
// grad_check
// ---------------------------------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point, double eps) {
  GEOD_CHECK(eps > 0, "grad_check: eps must be positive");
  Tape& tape = Tape::active();
  tape.clear();
  Tensor p = point.detach();
  p.set_requires_grad(true);
  Tensor loss = fn(p);
  GEOD_CHECK(loss.numel() == 1, "grad_check: fn must return a scalar");
  GradMap gm = tape.backward(loss);
  Tensor analytic = gm.get(p);
  double max_rel = 0.0;
  {
    NoGradGuard no_grad;
    const std::vector<double>& base = p.values();
    for (size_t i = 0; i < base.size(); ++i) {
      std::vector<double> vp = base, vm = base;
      vp[i] += eps;
      vm[i] -= eps;
      double fp = fn(Tensor::from_data(p.shape(), std::move(vp))).item();
      double fm = fn(Tensor::from_data(p.shape(), std::move(vm))).item();
      double fd = (fp - fm) / (2 * eps);
      double an = analytic.values()[i];
      double rel = std::fabs(fd - an) / std::max(std::fabs(fd) + std::fabs(an), 1e-6);
      max_rel = std::max(max_rel, rel);
    }
  }
  tape.clear();
  return max_rel;
}

}  // namespace geod
