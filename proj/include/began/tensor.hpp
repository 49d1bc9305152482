#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace began {

// Storage scalar. Accumulations are always carried out in double so that
// finite-difference gradient checks stay meaningful in float32 builds.
#ifdef BEGAN_REAL32
using real = float;
#else
using real = double;
#endif

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

// Dense n-dimensional array, immutable after creation. A tensor may be
// recorded on a tape, in which case ops consuming it record backward
// closures there. Construction rejects non-finite values: NaN/Inf never
// propagates silently through a forward pass.
class Tensor {
  public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<real> values);

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t size() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

    const std::vector<real>& data() const;
    std::shared_ptr<const std::vector<real>> storage() const { return data_; }

    // scalar tensors only
    double value() const;
    double at(std::initializer_list<int> index) const;

    bool tracked() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    int node() const { return node_; }

  private:
    friend class Tape;
    friend Tensor with_node(const Tensor& t, Tape* tape, int node);
    friend Tensor reshape(const Tensor& t, Shape new_shape);

    Shape shape_;
    std::shared_ptr<const std::vector<real>> data_;
    Tape* tape_ = nullptr;
    int node_ = -1;
};

// Reverse-mode gradient tape. Single owner, not shareable across threads;
// backward replays recorded nodes in exact reverse recording order.
// Gradients accumulate in double regardless of the storage scalar.
class Tape {
  public:
    using BackwardFn = std::function<void(Tape&, const std::vector<double>&)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Registers a copy of `t` as a differentiable leaf on this tape.
    Tensor leaf(const Tensor& t);

    // loss must be a scalar recorded on this tape.
    void backward(const Tensor& loss);

    // Accumulated gradient of a tensor recorded on this tape. Exactly zero
    // for tensors unused downstream of the loss. Valid after backward().
    const std::vector<double>& grad(const Tensor& t);
    Tensor grad_tensor(const Tensor& t);

    void reset();
    size_t node_count() const { return nodes_.size(); }

    // op recording interface
    int record(int64_t out_size, BackwardFn fn);
    std::vector<double>& grad_buf(int node);

  private:
    struct Node {
        int64_t out_size;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
    bool ran_backward_ = false;
};

// --- operator set (exactly what the architecture needs) ---

// 3x3 convolution, stride 1, zero same-padding of 1. input [b,cin,h,w],
// weights [cout,cin,3,3], bias [cout] -> [b,cout,h,w].
Tensor conv2d_3x3(const Tensor& input, const Tensor& weights, const Tensor& bias);

// x >= 0 ? x : exp(x)-1
Tensor elu(const Tensor& x);

// stride-2 subsampling keeping the top-left element of each 2x2 block.
// [b,c,h,w] -> [b,c,h/2,w/2]; h and w must be even.
Tensor subsample2(const Tensor& x);

// nearest-neighbor 2x upsampling. [b,c,h,w] -> [b,c,2h,2w]
Tensor upsample_nearest2(const Tensor& x);

// affine map without activation. input [b,nin], weights [nout,nin],
// bias [nout] -> [b,nout]
Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& x, double c);
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);

// mean over the given axes (removed from the shape); mean over all axes
// yields a rank-0 scalar tensor.
Tensor mean(const Tensor& x, std::vector<int> axes);
Tensor mean_all(const Tensor& x);

// [b,c1,h,w] ++ [b,c2,h,w] -> [b,c1+c2,h,w]
Tensor concat_channels(const Tensor& a, const Tensor& b);

// reverse along the last axis. Data op only: rejects tracked tensors.
Tensor flip_horizontal(const Tensor& x);

// same element count, shared storage, gradient passes through
Tensor reshape(const Tensor& t, Shape new_shape);

}  // namespace began
