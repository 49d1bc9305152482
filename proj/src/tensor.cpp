#include "began/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace began {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("shape extent must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void ensure_finite(const std::vector<real>& values, const char* what) {
    for (real v : values) {
        if (!std::isfinite(static_cast<double>(v))) {
            throw std::runtime_error(std::string(what) + ": non-finite value");
        }
    }
}

// Ops taking several tensors require that all tracked inputs live on the
// same tape; the result is recorded there.
Tape* common_tape(std::initializer_list<const Tensor*> inputs, const char* op) {
    Tape* tape = nullptr;
    for (const Tensor* t : inputs) {
        if (!t->tracked()) continue;
        if (tape == nullptr) {
            tape = t->tape();
        } else if (tape != t->tape()) {
            throw std::invalid_argument(std::string(op) + ": inputs recorded on different tapes");
        }
    }
    return tape;
}

void require_4d(const Tensor& t, const char* op) {
    if (t.ndim() != 4) {
        throw std::invalid_argument(std::string(op) + ": expected a [b,c,h,w] tensor, got " + shape_str(t.shape()));
    }
}

}  // namespace

Tensor with_node(const Tensor& t, Tape* tape, int node) {
    Tensor r = t;
    r.tape_ = tape;
    r.node_ = node;
    return r;
}

Tensor::Tensor(Shape shape, std::vector<real> values) : shape_(std::move(shape)) {
    int64_t n = shape_numel(shape_);
    if (n != static_cast<int64_t>(values.size())) {
        throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                    " does not match shape " + shape_str(shape_));
    }
    ensure_finite(values, "tensor");
    data_ = std::make_shared<const std::vector<real>>(std::move(values));
}

Tensor Tensor::zeros(Shape shape) {
    int64_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<real>(static_cast<size_t>(n), real(0)));
}

Tensor Tensor::full(Shape shape, double value) {
    int64_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<real>(static_cast<size_t>(n), static_cast<real>(value)));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {static_cast<real>(value)}); }

const std::vector<real>& Tensor::data() const {
    if (!data_) throw std::logic_error("tensor is not defined");
    return *data_;
}

double Tensor::value() const {
    if (size() != 1) throw std::invalid_argument("value() requires a scalar tensor, got " + shape_str(shape_));
    return static_cast<double>((*data_)[0]);
}

double Tensor::at(std::initializer_list<int> index) const {
    if (static_cast<int>(index.size()) != ndim()) {
        throw std::invalid_argument("at(): index rank does not match tensor rank");
    }
    int64_t off = 0;
    int i = 0;
    for (int idx : index) {
        int extent = shape_[static_cast<size_t>(i)];
        if (idx < 0 || idx >= extent) throw std::out_of_range("at(): index out of range");
        off = off * extent + idx;
        ++i;
    }
    return static_cast<double>((*data_)[static_cast<size_t>(off)]);
}

// --- Tape ---

int Tape::record(int64_t out_size, BackwardFn fn) {
    nodes_.push_back(Node{out_size, std::move(fn)});
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::leaf(const Tensor& t) {
    if (!t.defined()) throw std::invalid_argument("leaf: undefined tensor");
    int node = record(t.size(), nullptr);
    return with_node(t, this, node);
}

std::vector<double>& Tape::grad_buf(int node) {
    auto& g = grads_.at(static_cast<size_t>(node));
    if (g.empty()) g.assign(static_cast<size_t>(nodes_[static_cast<size_t>(node)].out_size), 0.0);
    return g;
}

void Tape::backward(const Tensor& loss) {
    if (loss.tape() != this || loss.node() < 0) {
        throw std::invalid_argument("backward: loss is not recorded on this tape");
    }
    if (loss.size() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
    }
    grads_.assign(nodes_.size(), {});
    grad_buf(loss.node())[0] = 1.0;
    for (int i = loss.node(); i >= 0; --i) {
        auto& g = grads_[static_cast<size_t>(i)];
        if (g.empty()) continue;  // unused downstream: gradient is exactly zero
        if (nodes_[static_cast<size_t>(i)].backward) {
            nodes_[static_cast<size_t>(i)].backward(*this, g);
        }
    }
    ran_backward_ = true;
}

const std::vector<double>& Tape::grad(const Tensor& t) {
    if (t.tape() != this || t.node() < 0) {
        throw std::invalid_argument("grad: tensor is not recorded on this tape");
    }
    if (!ran_backward_) throw std::logic_error("grad: backward() has not run");
    return grad_buf(t.node());
}

Tensor Tape::grad_tensor(const Tensor& t) {
    const auto& g = grad(t);
    std::vector<real> values(g.size());
    for (size_t i = 0; i < g.size(); ++i) values[i] = static_cast<real>(g[i]);
    return Tensor(t.shape(), std::move(values));
}

void Tape::reset() {
    nodes_.clear();
    grads_.clear();
    ran_backward_ = false;
}

// --- ops ---

Tensor conv2d_3x3(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    require_4d(input, "conv2d_3x3");
    if (weights.ndim() != 4 || weights.dim(2) != 3 || weights.dim(3) != 3) {
        throw std::invalid_argument("conv2d_3x3: weights must be [cout,cin,3,3], got " + shape_str(weights.shape()));
    }
    const int b = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int cout = weights.dim(0);
    if (weights.dim(1) != cin) {
        throw std::invalid_argument("conv2d_3x3: input channels " + std::to_string(cin) +
                                    " do not match weight channels " + std::to_string(weights.dim(1)));
    }
    if (bias.ndim() != 1 || bias.dim(0) != cout) {
        throw std::invalid_argument("conv2d_3x3: bias must be [cout]");
    }

    const real* in = input.data().data();
    const real* wt = weights.data().data();
    const real* bs = bias.data().data();
    const int64_t plane = static_cast<int64_t>(h) * w;

    std::vector<real> out(static_cast<size_t>(b) * cout * plane);
    std::vector<double> acc(static_cast<size_t>(plane));
    for (int ib = 0; ib < b; ++ib) {
        for (int oc = 0; oc < cout; ++oc) {
            std::fill(acc.begin(), acc.end(), static_cast<double>(bs[oc]));
            for (int ic = 0; ic < cin; ++ic) {
                const real* ip = in + (static_cast<int64_t>(ib) * cin + ic) * plane;
                const real* wp = wt + (static_cast<int64_t>(oc) * cin + ic) * 9;
                for (int ky = 0; ky < 3; ++ky) {
                    const int dy = ky - 1;
                    const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                    for (int kx = 0; kx < 3; ++kx) {
                        const int dx = kx - 1;
                        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                        const double wv = static_cast<double>(wp[ky * 3 + kx]);
                        for (int y = y0; y < y1; ++y) {
                            const real* irow = ip + static_cast<int64_t>(y + dy) * w + dx;
                            double* arow = acc.data() + static_cast<int64_t>(y) * w;
                            for (int x = x0; x < x1; ++x) arow[x] += wv * static_cast<double>(irow[x]);
                        }
                    }
                }
            }
            real* op = out.data() + (static_cast<int64_t>(ib) * cout + oc) * plane;
            for (int64_t i = 0; i < plane; ++i) op[i] = static_cast<real>(acc[static_cast<size_t>(i)]);
        }
    }

    Tensor result(Shape{b, cout, h, w}, std::move(out));

    Tape* tape = common_tape({&input, &weights, &bias}, "conv2d_3x3");
    if (!tape) return result;

    auto in_sp = input.storage();
    auto wt_sp = weights.storage();
    const int pin = input.node(), pw = weights.node(), pb = bias.node();
    int node = tape->record(result.size(), [=](Tape& t, const std::vector<double>& gout) {
        const real* inp = in_sp->data();
        const real* wp = wt_sp->data();
        const int64_t pl = static_cast<int64_t>(h) * w;
        if (pin >= 0) {
            auto& gi = t.grad_buf(pin);
            for (int ib = 0; ib < b; ++ib)
                for (int oc = 0; oc < cout; ++oc) {
                    const double* gp = gout.data() + (static_cast<int64_t>(ib) * cout + oc) * pl;
                    for (int ic = 0; ic < cin; ++ic) {
                        double* gip = gi.data() + (static_cast<int64_t>(ib) * cin + ic) * pl;
                        const real* wk = wp + (static_cast<int64_t>(oc) * cin + ic) * 9;
                        for (int ky = 0; ky < 3; ++ky) {
                            const int dy = ky - 1;
                            const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                            for (int kx = 0; kx < 3; ++kx) {
                                const int dx = kx - 1;
                                const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                                const double wv = static_cast<double>(wk[ky * 3 + kx]);
                                for (int y = y0; y < y1; ++y) {
                                    const double* grow = gp + static_cast<int64_t>(y) * w;
                                    double* girow = gip + static_cast<int64_t>(y + dy) * w + dx;
                                    for (int x = x0; x < x1; ++x) girow[x] += wv * grow[x];
                                }
                            }
                        }
                    }
                }
        }
        if (pw >= 0) {
            auto& gw = t.grad_buf(pw);
            for (int oc = 0; oc < cout; ++oc)
                for (int ic = 0; ic < cin; ++ic) {
                    double* gwk = gw.data() + (static_cast<int64_t>(oc) * cin + ic) * 9;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int dy = ky - 1;
                        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                        for (int kx = 0; kx < 3; ++kx) {
                            const int dx = kx - 1;
                            const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                            double s = 0.0;
                            for (int ib = 0; ib < b; ++ib) {
                                const double* gp = gout.data() + (static_cast<int64_t>(ib) * cout + oc) * pl;
                                const real* ipp = inp + (static_cast<int64_t>(ib) * cin + ic) * pl;
                                for (int y = y0; y < y1; ++y) {
                                    const double* grow = gp + static_cast<int64_t>(y) * w;
                                    const real* irow = ipp + static_cast<int64_t>(y + dy) * w + dx;
                                    for (int x = x0; x < x1; ++x) s += grow[x] * static_cast<double>(irow[x]);
                                }
                            }
                            gwk[ky * 3 + kx] += s;
                        }
                    }
                }
        }
        if (pb >= 0) {
            auto& gb = t.grad_buf(pb);
            for (int ib = 0; ib < b; ++ib)
                for (int oc = 0; oc < cout; ++oc) {
                    const double* gp = gout.data() + (static_cast<int64_t>(ib) * cout + oc) * pl;
                    double s = 0.0;
                    for (int64_t i = 0; i < pl; ++i) s += gp[i];
                    gb[static_cast<size_t>(oc)] += s;
                }
        }
    });
    return with_node(result, tape, node);
}

Tensor elu(const Tensor& x) {
    const auto& in = x.data();
    std::vector<real> out(in.size());
    for (size_t i = 0; i < in.size(); ++i) {
        double v = static_cast<double>(in[i]);
        out[i] = static_cast<real>(v >= 0.0 ? v : std::expm1(v));
    }
    Tensor result(x.shape(), std::move(out));
    if (Tape* tape = x.tape()) {
        auto in_sp = x.storage();
        const int p = x.node();
        int node = tape->record(result.size(), [=](Tape& t, const std::vector<double>& gout) {
            if (p < 0) return;
            auto& g = t.grad_buf(p);
            const real* ip = in_sp->data();
            for (size_t i = 0; i < gout.size(); ++i) {
                double v = static_cast<double>(ip[i]);
                g[i] += gout[i] * (v >= 0.0 ? 1.0 : std::exp(v));
            }
        });
        return with_node(result, tape, node);
    }
    return result;
}

Tensor subsample2(const Tensor& x) {
    require_4d(x, "subsample2");
    const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % 2 != 0 || w % 2 != 0) {
        throw std::invalid_argument("subsample2: odd spatial extent " + shape_str(x.shape()));
    }
    const int oh = h / 2, ow = w / 2;
    const real* in = x.data().data();
    std::vector<real> out(static_cast<size_t>(b) * c * oh * ow);
    for (int64_t p = 0; p < static_cast<int64_t>(b) * c; ++p) {
        const real* ip = in + p * h * w;
        real* op = out.data() + p * oh * ow;
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx) op[y * ow + xx] = ip[(2 * y) * w + 2 * xx];
    }
    Tensor result(Shape{b, c, oh, ow}, std::move(out));
    if (Tape* tape = x.tape()) {
        const int p = x.node();
        int node = tape->record(result.size(), [=](Tape& t, const std::vector<double>& gout) {
            if (p < 0) return;
            auto& g = t.grad_buf(p);
            for (int64_t pn = 0; pn < static_cast<int64_t>(b) * c; ++pn) {
                const double* gp = gout.data() + pn * oh * ow;
                double* gi = g.data() + pn * h * w;
                for (int y = 0; y < oh; ++y)
                    for (int xx = 0; xx < ow; ++xx) gi[(2 * y) * w + 2 * xx] += gp[y * ow + xx];
            }
        });
        return with_node(result, tape, node);
    }
    return result;
}

Tensor upsample_nearest2(const Tensor& x) {
    require_4d(x, "upsample_nearest2");
    const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = 2 * h, ow = 2 * w;
    const real* in = x.data().data();
    std::vector<real> out(static_cast<size_t>(b) * c * oh * ow);
    for (int64_t p = 0; p < static_cast<int64_t>(b) * c; ++p) {
        const real* ip = in + p * h * w;
        real* op = out.data() + p * oh * ow;
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx) op[y * ow + xx] = ip[(y / 2) * w + xx / 2];
    }
    Tensor result(Shape{b, c, oh, ow}, std::move(out));
    if (Tape* tape = x.tape()) {
        const int p = x.node();
        int node = tape->record(result.size(), [=](Tape& t, const std::vector<double>& gout) {
            if (p < 0) return;
            auto& g = t.grad_buf(p);
            for (int64_t pn = 0; pn < static_cast<int64_t>(b) * c; ++pn) {
                const double* gp = gout.data() + pn * oh * ow;
                double* gi = g.data() + pn * h * w;
                for (int y = 0; y < oh; ++y)
                    for (int xx = 0; xx < ow; ++xx) gi[(y / 2) * w + xx / 2] += gp[y * ow + xx];
            }
        });
        return with_node(result, tape, node);
    }
    return result;
}

Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    if (input.ndim() != 2) {
        throw std::invalid_argument("fully_connected: input must be [b,nin], got " + shape_str(input.shape()));
    }
    if (weights.ndim() != 2) {
        throw std::invalid_argument("fully_connected: weights must be [nout,nin], got " + shape_str(weights.shape()));
    }
    const int b = input.dim(0), nin = input.dim(1), nout = weights.dim(0);
    if (weights.dim(1) != nin) {
        throw std::invalid_argument("fully_connected: input width " + std::to_string(nin) +
                                    " does not match weights " + shape_str(weights.shape()));
    }
    if (bias.ndim() != 1 || bias.dim(0) != nout) {
        throw std::invalid_argument("fully_connected: bias must be [nout]");
    }

    const real* in = input.data().data();
    const real* wt = weights.data().data();
    const real* bs = bias.data().data();
    std::vector<real> out(static_cast<size_t>(b) * nout);
    for (int ib = 0; ib < b; ++ib) {
        const real* ip = in + static_cast<int64_t>(ib) * nin;
        for (int o = 0; o < nout; ++o) {
            const real* wp = wt + static_cast<int64_t>(o) * nin;
            double s = static_cast<double>(bs[o]);
            for (int i = 0; i < nin; ++i) s += static_cast<double>(ip[i]) * static_cast<double>(wp[i]);
            out[static_cast<size_t>(ib) * nout + o] = static_cast<real>(s);
        }
    }
    Tensor result(Shape{b, nout}, std::move(out));

    Tape* tape = common_tape({&input, &weights, &bias}, "fully_connected");
    if (!tape) return result;

    auto in_sp = input.storage();
    auto wt_sp = weights.storage();
    const int pin = input.node(), pw = weights.node(), pb = bias.node();
    int node = tape->record(result.size(), [=](Tape& t, const std::vector<double>& gout) {
        const real* ip = in_sp->data();
        const real* wp = wt_sp->data();
        if (pin >= 0) {
            auto& gi = t.grad_buf(pin);
            for (int ib = 0; ib < b; ++ib)
                for (int o = 0; o < nout; ++o) {
                    const double go = gout[static_cast<size_t>(ib) * nout + o];
                    const real* wr = wp + static_cast<int64_t>(o) * nin;
                    double* gr = gi.data() + static_cast<int64_t>(ib) * nin;
                    for (int i = 0; i < nin; ++i) gr[i] += go * static_cast<double>(wr[i]);
                }
        }
        if (pw >= 0) {
            auto& gw = t.grad_buf(pw);
            for (int ib = 0; ib < b; ++ib)
                for (int o = 0; o < nout; ++o) {
                    const double go = gout[static_cast<size_t>(ib) * nout + o];
                    const real* ir = ip + static_cast<int64_t>(ib) * nin;
                    double* gr = gw.data() + static_cast<int64_t>(o) * nin;
                    for (int i = 0; i < nin; ++i) gr[i] += go * static_cast<double>(ir[i]);
                }
        }
        if (pb >= 0) {
            auto& gb = t.grad_buf(pb);
            for (int ib = 0; ib < b; ++ib)
                for (int o = 0; o < nout; ++o) gb[static_cast<size_t>(o)] += gout[static_cast<size_t>(ib) * nout + o];
        }
    });
    return with_node(result, tape, node);
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<real> out(av.size());
    for (size_t i = 0; i < av.size(); ++i)
        out[i] = static_cast<real>(static_cast<double>(av[i]) + static_cast<double>(bv[i]));
    Tensor result(a.shape(), std::move(out));
    Tape* tape = common_tape({&a, &b}, "add");
    if (!tape) return result;
    const int pa = a.node(), pb = b.node();
    int node = tape->record(result.size(), [=](Tape& t, const std::vector<double>& gout) {
        for (int p : {pa, pb}) {
            if (p < 0) continue;
            auto& g = t.grad_buf(p);
            for (size_t i = 0; i < gout.size(); ++i) g[i] += gout[i];
        }
    });
    return with_node(result, tape, node);
}

Tensor subtract(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "subtract");
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<real> out(av.size());
    for (size_t i = 0; i < av.size(); ++i)
        out[i] = static_cast<real>(static_cast<double>(av[i]) - static_cast<double>(bv[i]));
    Tensor result(a.shape(), std::move(out));
    Tape* tape = common_tape({&a, &b}, "subtract");
    if (!tape) return result;
    const int pa = a.node(), pb = b.node();
    int node = tape->record(result.size(), [=](Tape& t, const std::vector<double>& gout) {
        if (pa >= 0) {
            auto& g = t.grad_buf(pa);
            for (size_t i = 0; i < gout.size(); ++i) g[i] += gout[i];
        }
        if (pb >= 0) {
            auto& g = t.grad_buf(pb);
            for (size_t i = 0; i < gout.size(); ++i) g[i] -= gout[i];
        }
    });
    return with_node(result, tape, node);
}

Tensor scalar_mul(const Tensor& x, double c) {
    const auto& in = x.data();
    std::vector<real> out(in.size());
    for (size_t i = 0; i < in.size(); ++i) out[i] = static_cast<real>(static_cast<double>(in[i]) * c);
    Tensor result(x.shape(), std::move(out));
    if (Tape* tape = x.tape()) {
        const int p = x.node();
        int node = tape->record(result.size(), [=](Tape& t, const std::vector<double>& gout) {
            if (p < 0) return;
            auto& g = t.grad_buf(p);
            for (size_t i = 0; i < gout.size(); ++i) g[i] += c * gout[i];
        });
        return with_node(result, tape, node);
    }
    return result;
}

Tensor abs(const Tensor& x) {
    const auto& in = x.data();
    std::vector<real> out(in.size());
    for (size_t i = 0; i < in.size(); ++i) out[i] = static_cast<real>(std::fabs(static_cast<double>(in[i])));
    Tensor result(x.shape(), std::move(out));
    if (Tape* tape = x.tape()) {
        auto in_sp = x.storage();
        const int p = x.node();
        // subgradient 0 at exactly zero
        int node = tape->record(result.size(), [=](Tape& t, const std::vector<double>& gout) {
            if (p < 0) return;
            auto& g = t.grad_buf(p);
            const real* ip = in_sp->data();
            for (size_t i = 0; i < gout.size(); ++i) {
                double v = static_cast<double>(ip[i]);
                g[i] += gout[i] * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
            }
        });
        return with_node(result, tape, node);
    }
    return result;
}

Tensor square(const Tensor& x) {
    const auto& in = x.data();
    std::vector<real> out(in.size());
    for (size_t i = 0; i < in.size(); ++i) {
        double v = static_cast<double>(in[i]);
        out[i] = static_cast<real>(v * v);
    }
    Tensor result(x.shape(), std::move(out));
    if (Tape* tape = x.tape()) {
        auto in_sp = x.storage();
        const int p = x.node();
        int node = tape->record(result.size(), [=](Tape& t, const std::vector<double>& gout) {
            if (p < 0) return;
            auto& g = t.grad_buf(p);
            const real* ip = in_sp->data();
            for (size_t i = 0; i < gout.size(); ++i) g[i] += gout[i] * 2.0 * static_cast<double>(ip[i]);
        });
        return with_node(result, tape, node);
    }
    return result;
}

Tensor mean(const Tensor& x, std::vector<int> axes) {
    std::sort(axes.begin(), axes.end());
    axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
    for (int a : axes) {
        if (a < 0 || a >= x.ndim()) throw std::invalid_argument("mean: axis " + std::to_string(a) + " out of range");
    }
    std::vector<bool> reduced(static_cast<size_t>(x.ndim()), false);
    for (int a : axes) reduced[static_cast<size_t>(a)] = true;

    Shape out_shape;
    int64_t count = 1;
    for (int i = 0; i < x.ndim(); ++i) {
        if (reduced[static_cast<size_t>(i)]) {
            count *= x.dim(i);
        } else {
            out_shape.push_back(x.dim(i));
        }
    }
    const int64_t out_n = shape_numel(out_shape);

    // linear offset of the output element each input element feeds into
    const int nd = x.ndim();
    std::vector<int64_t> out_stride(static_cast<size_t>(nd), 0);
    {
        int64_t s = 1;
        for (int i = nd - 1; i >= 0; --i) {
            if (!reduced[static_cast<size_t>(i)]) {
                out_stride[static_cast<size_t>(i)] = s;
                s *= x.dim(i);
            }
        }
    }

    const auto& in = x.data();
    std::vector<double> acc(static_cast<size_t>(out_n), 0.0);
    std::vector<int> idx(static_cast<size_t>(nd), 0);
    for (size_t lin = 0; lin < in.size(); ++lin) {
        int64_t off = 0;
        for (int i = 0; i < nd; ++i) off += out_stride[static_cast<size_t>(i)] * idx[static_cast<size_t>(i)];
        acc[static_cast<size_t>(off)] += static_cast<double>(in[lin]);
        for (int i = nd - 1; i >= 0; --i) {
            if (++idx[static_cast<size_t>(i)] < x.dim(i)) break;
            idx[static_cast<size_t>(i)] = 0;
        }
    }
    std::vector<real> out(static_cast<size_t>(out_n));
    const double inv = 1.0 / static_cast<double>(count);
    for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<real>(acc[i] * inv);
    Tensor result(out_shape, std::move(out));

    if (Tape* tape = x.tape()) {
        const int p = x.node();
        Shape in_shape = x.shape();
        int node = tape->record(result.size(), [=](Tape& t, const std::vector<double>& gout) {
            if (p < 0) return;
            auto& g = t.grad_buf(p);
            std::vector<int> ix(static_cast<size_t>(nd), 0);
            for (size_t lin = 0; lin < g.size(); ++lin) {
                int64_t off = 0;
                for (int i = 0; i < nd; ++i) off += out_stride[static_cast<size_t>(i)] * ix[static_cast<size_t>(i)];
                g[lin] += gout[static_cast<size_t>(off)] * inv;
                for (int i = nd - 1; i >= 0; --i) {
                    if (++ix[static_cast<size_t>(i)] < in_shape[static_cast<size_t>(i)]) break;
                    ix[static_cast<size_t>(i)] = 0;
                }
            }
        });
        return with_node(result, tape, node);
    }
    return result;
}

Tensor mean_all(const Tensor& x) {
    std::vector<int> axes(static_cast<size_t>(x.ndim()));
    std::iota(axes.begin(), axes.end(), 0);
    return mean(x, std::move(axes));
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_4d(a, "concat_channels");
    require_4d(b, "concat_channels");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
        throw std::invalid_argument("concat_channels: incompatible shapes " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
    const int nb = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    const int64_t plane = static_cast<int64_t>(h) * w;
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<real> out(static_cast<size_t>(nb) * (ca + cb) * plane);
    for (int ib = 0; ib < nb; ++ib) {
        real* op = out.data() + static_cast<int64_t>(ib) * (ca + cb) * plane;
        std::copy_n(av.data() + static_cast<int64_t>(ib) * ca * plane, ca * plane, op);
        std::copy_n(bv.data() + static_cast<int64_t>(ib) * cb * plane, cb * plane, op + ca * plane);
    }
    Tensor result(Shape{nb, ca + cb, h, w}, std::move(out));
    Tape* tape = common_tape({&a, &b}, "concat_channels");
    if (!tape) return result;
    const int pa = a.node(), pb = b.node();
    int node = tape->record(result.size(), [=](Tape& t, const std::vector<double>& gout) {
        for (int ib = 0; ib < nb; ++ib) {
            const double* gp = gout.data() + static_cast<int64_t>(ib) * (ca + cb) * plane;
            if (pa >= 0) {
                auto& g = t.grad_buf(pa);
                double* gd = g.data() + static_cast<int64_t>(ib) * ca * plane;
                for (int64_t i = 0; i < ca * plane; ++i) gd[i] += gp[i];
            }
            if (pb >= 0) {
                auto& g = t.grad_buf(pb);
                double* gd = g.data() + static_cast<int64_t>(ib) * cb * plane;
                for (int64_t i = 0; i < cb * plane; ++i) gd[i] += gp[ca * plane + i];
            }
        }
    });
    return with_node(result, tape, node);
}

Tensor flip_horizontal(const Tensor& x) {
    if (x.tracked()) {
        throw std::invalid_argument("flip_horizontal: data op only, not differentiable");
    }
    if (x.ndim() < 1) throw std::invalid_argument("flip_horizontal: rank-0 tensor");
    const int w = x.dim(x.ndim() - 1);
    const auto& in = x.data();
    std::vector<real> out(in.size());
    const int64_t rows = static_cast<int64_t>(in.size()) / w;
    for (int64_t r = 0; r < rows; ++r) {
        const real* ip = in.data() + r * w;
        real* op = out.data() + r * w;
        for (int i = 0; i < w; ++i) op[i] = ip[w - 1 - i];
    }
    return Tensor(x.shape(), std::move(out));
}

Tensor reshape(const Tensor& t, Shape new_shape) {
    if (shape_numel(new_shape) != t.size()) {
        throw std::invalid_argument("reshape: element count mismatch " + shape_str(t.shape()) + " -> " +
                                    shape_str(new_shape));
    }
    Tensor result;
    result.shape_ = std::move(new_shape);
    result.data_ = t.data_;
    if (Tape* tape = t.tape()) {
        const int p = t.node();
        int node = tape->record(result.size(), [=](Tape& tp, const std::vector<double>& gout) {
            if (p < 0) return;
            auto& g = tp.grad_buf(p);
            for (size_t i = 0; i < gout.size(); ++i) g[i] += gout[i];
        });
        result.tape_ = tape;
        result.node_ = node;
    }
    return result;
}

}  // namespace began
