#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "pixelcl/tensor.hpp"

namespace pxcl {

// Reverse-mode tape over whole-tensor primitives. One tape per training
// step; single writer. Node ids are indices into `nodes`.
class Tape {
  public:
    enum class Op {
        kLeaf,
        kAdd,         // broadcasting
        kMul,         // broadcasting
        kDiv,         // broadcasting
        kMatmul,
        kTranspose,
        kRelu,
        kLog,
        kExp,
        kConv3x3,     // a = input, b = weight, c = bias
        kBilinear,
        kSoftmax,
        kAxisSum,
        kSum,
        kMean,
        kGatherRows,
        kConcatRows,
        kL2NormRows,
        kReshape,
    };

    struct Node {
        Op op = Op::kLeaf;
        int a = -1, b = -1, c = -1;
        std::vector<int> parents;  // kConcatRows only
        Tensor value;
        std::int64_t axis = 0;
        double eps = 0.0;
        std::vector<std::int64_t> indices;
        bool trainable = false;
    };

    int leaf(Tensor v, bool trainable = false) {
        Node n;
        n.op = Op::kLeaf;
        n.value = std::move(v);
        n.trainable = trainable;
        return push(std::move(n));
    }
    int constant(Tensor v) { return leaf(std::move(v), false); }
    int constant_scalar(double v) { return leaf(Tensor::scalar(v), false); }

    int add(int a, int b) { return binary(Op::kAdd, a, b, pxcl::add(val(a), val(b))); }
    int mul(int a, int b) { return binary(Op::kMul, a, b, pxcl::mul(val(a), val(b))); }
    int div(int a, int b) { return binary(Op::kDiv, a, b, pxcl::divide(val(a), val(b))); }
    int matmul(int a, int b) { return binary(Op::kMatmul, a, b, pxcl::matmul(val(a), val(b))); }

    int transpose(int a) { return unary(Op::kTranspose, a, pxcl::transpose2d(val(a))); }
    int relu(int a) { return unary(Op::kRelu, a, pxcl::relu(val(a))); }
    int log(int a) { return unary(Op::kLog, a, pxcl::log(val(a))); }
    int exp(int a) { return unary(Op::kExp, a, pxcl::exp(val(a))); }

    int conv3x3(int input, int weight, int bias) {
        Node n;
        n.op = Op::kConv3x3;
        n.a = input;
        n.b = weight;
        n.c = bias;
        n.value = pxcl::conv3x3(val(input), val(weight), val(bias));
        return push(std::move(n));
    }

    int bilinear(int a, std::int64_t h, std::int64_t w) {
        Node n;
        n.op = Op::kBilinear;
        n.a = a;
        n.value = pxcl::bilinear_resize(val(a), h, w);
        return push(std::move(n));
    }

    int softmax(int a, std::int64_t axis) {
        Node n;
        n.op = Op::kSoftmax;
        n.a = a;
        n.axis = axis;
        n.value = pxcl::softmax(val(a), axis);
        return push(std::move(n));
    }

    int axis_sum(int a, std::int64_t axis) {
        Node n;
        n.op = Op::kAxisSum;
        n.a = a;
        n.axis = axis;
        n.value = pxcl::axis_sum(val(a), axis, /*keepdim=*/true);
        return push(std::move(n));
    }

    int sum(int a) { return unary(Op::kSum, a, Tensor::scalar(pxcl::sum(val(a)))); }
    int mean(int a) { return unary(Op::kMean, a, Tensor::scalar(pxcl::mean(val(a)))); }

    int gather_rows(int a, std::vector<std::int64_t> idx) {
        Node n;
        n.op = Op::kGatherRows;
        n.a = a;
        n.value = pxcl::gather_rows(val(a), idx);
        n.indices = std::move(idx);
        return push(std::move(n));
    }

    int concat_rows(std::vector<int> parts) {
        if (parts.empty()) throw ArgumentError("concat_rows: empty input");
        std::int64_t rows = 0;
        const std::int64_t cols = val(parts[0]).shape.at(1);
        for (const int p : parts) {
            if (val(p).rank() != 2 || val(p).shape[1] != cols) throw ArgumentError("concat_rows: shape mismatch");
            rows += val(p).shape[0];
        }
        Tensor out(Shape{rows, cols});
        std::int64_t off = 0;
        for (const int p : parts) {
            std::copy(val(p).data.begin(), val(p).data.end(), out.data.begin() + off);
            off += val(p).size();
        }
        Node n;
        n.op = Op::kConcatRows;
        n.parents = std::move(parts);
        n.value = std::move(out);
        return push(std::move(n));
    }

    // Unit-normalizes each row; rows with norm < eps pass through unchanged.
    int l2norm_rows(int a, double eps = 1e-12) {
        Node n;
        n.op = Op::kL2NormRows;
        n.a = a;
        n.eps = eps;
        n.value = pxcl::l2_normalize(val(a), val(a).rank() - 1, eps);
        return push(std::move(n));
    }

    int reshape(int a, Shape s) {
        Node n;
        n.op = Op::kReshape;
        n.a = a;
        n.value = pxcl::reshape(val(a), std::move(s));
        return push(std::move(n));
    }

    // --- composite helpers (built from primitives) ---

    int scale(int a, double c) { return mul(a, constant_scalar(c)); }
    int neg(int a) { return scale(a, -1.0); }
    int sub(int a, int b) { return add(a, neg(b)); }

    // log(sum(exp)) over `axis`, with a detached max shift for stability.
    int logsumexp(int a, std::int64_t axis) {
        const Tensor m = pxcl::axis_max(val(a), axis, /*keepdim=*/true);
        const int mc = constant(m);
        return add(log(axis_sum(exp(sub(a, mc)), axis)), mc);
    }

    // softplus(x) = max(x,0) + log(1 + exp(-|x|)), elementwise, stable.
    int softplus(int a) {
        const int ax = add(relu(a), relu(neg(a)));
        const int one = constant(Tensor(Shape{1}, std::vector<double>{1.0}));
        return add(relu(a), log(add(one, exp(neg(ax)))));
    }

    // sigmoid(x) = exp(x - softplus(x)); the exponent is always <= 0.
    int sigmoid(int a) { return exp(sub(a, softplus(a))); }

    int log_softmax(int a, std::int64_t axis) { return sub(a, logsumexp(a, axis)); }

    const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    std::size_t size() const { return nodes_.size(); }

    // Gradients of scalar node `root` with respect to every node.
    // Entry i is empty (size 0) if no gradient reached node i.
    std::vector<Tensor> backward(int root) const {
        if (val(root).size() != 1) throw ArgumentError("backward: root must be scalar");
        std::vector<Tensor> grads(nodes_.size());
        grads[static_cast<std::size_t>(root)] = Tensor(val(root).shape, 1.0);
        for (int id = root; id >= 0; --id) {
            const Node& n = nodes_[static_cast<std::size_t>(id)];
            Tensor& g = grads[static_cast<std::size_t>(id)];
            if (g.size() == 0) continue;
            switch (n.op) {
                case Op::kLeaf:
                    break;
                case Op::kAdd:
                    accum(grads, n.a, reduce_to_shape(g, val(n.a).shape));
                    accum(grads, n.b, reduce_to_shape(g, val(n.b).shape));
                    break;
                case Op::kMul:
                    accum(grads, n.a, reduce_to_shape(pxcl::mul(g, val(n.b)), val(n.a).shape));
                    accum(grads, n.b, reduce_to_shape(pxcl::mul(g, val(n.a)), val(n.b).shape));
                    break;
                case Op::kDiv: {
                    accum(grads, n.a, reduce_to_shape(pxcl::divide(g, val(n.b)), val(n.a).shape));
                    Tensor gb = pxcl::mul(g, pxcl::divide(n.value, val(n.b)));
                    accum(grads, n.b, reduce_to_shape(pxcl::scale(gb, -1.0), val(n.b).shape));
                    break;
                }
                case Op::kMatmul:
                    accum(grads, n.a, pxcl::matmul(g, pxcl::transpose2d(val(n.b))));
                    accum(grads, n.b, pxcl::matmul(pxcl::transpose2d(val(n.a)), g));
                    break;
                case Op::kTranspose:
                    accum(grads, n.a, pxcl::transpose2d(g));
                    break;
                case Op::kRelu: {
                    Tensor ga = g;
                    for (std::int64_t i = 0; i < ga.size(); ++i)
                        if (val(n.a)[i] <= 0.0) ga[i] = 0.0;
                    accum(grads, n.a, std::move(ga));
                    break;
                }
                case Op::kLog:
                    accum(grads, n.a, pxcl::divide(g, val(n.a)));
                    break;
                case Op::kExp:
                    accum(grads, n.a, pxcl::mul(g, n.value));
                    break;
                case Op::kConv3x3:
                    backward_conv(n, g, grads);
                    break;
                case Op::kBilinear:
                    accum(grads, n.a, bilinear_backward(g, val(n.a).shape));
                    break;
                case Op::kSoftmax: {
                    // g' = s * (g - sum(g * s) along axis)
                    const Tensor& s = n.value;
                    Tensor inner = pxcl::axis_sum(pxcl::mul(g, s), n.axis, true);
                    accum(grads, n.a, pxcl::mul(s, pxcl::sub(g, inner)));
                    break;
                }
                case Op::kAxisSum: {
                    // broadcast g along the reduced axis
                    accum(grads, n.a, pxcl::add(g, Tensor(val(n.a).shape)));
                    break;
                }
                case Op::kSum:
                    accum(grads, n.a, Tensor(val(n.a).shape, g[0]));
                    break;
                case Op::kMean:
                    accum(grads, n.a, Tensor(val(n.a).shape, g[0] / static_cast<double>(val(n.a).size())));
                    break;
                case Op::kGatherRows: {
                    Tensor ga(val(n.a).shape);
                    const std::int64_t d = ga.shape[1];
                    for (std::size_t i = 0; i < n.indices.size(); ++i)
                        for (std::int64_t j = 0; j < d; ++j)
                            ga[n.indices[i] * d + j] += g[static_cast<std::int64_t>(i) * d + j];
                    accum(grads, n.a, std::move(ga));
                    break;
                }
                case Op::kConcatRows: {
                    std::int64_t off = 0;
                    for (const int p : n.parents) {
                        Tensor gp(val(p).shape);
                        std::copy_n(g.data.begin() + off, gp.size(), gp.data.begin());
                        off += gp.size();
                        accum(grads, p, std::move(gp));
                    }
                    break;
                }
                case Op::kL2NormRows: {
                    const Tensor& x = val(n.a);
                    const std::int64_t d = x.shape[x.rank() - 1];
                    const std::int64_t rows = x.size() / d;
                    Tensor ga(x.shape);
                    for (std::int64_t r = 0; r < rows; ++r) {
                        const double* xr = x.data.data() + r * d;
                        const double* zr = n.value.data.data() + r * d;
                        const double* gr = g.data.data() + r * d;
                        double* out = ga.data.data() + r * d;
                        double nn = 0.0;
                        for (std::int64_t j = 0; j < d; ++j) nn += xr[j] * xr[j];
                        const double norm = std::sqrt(nn);
                        if (norm < n.eps) {
                            std::copy_n(gr, d, out);
                            continue;
                        }
                        double zg = 0.0;
                        for (std::int64_t j = 0; j < d; ++j) zg += zr[j] * gr[j];
                        for (std::int64_t j = 0; j < d; ++j) out[j] = (gr[j] - zr[j] * zg) / norm;
                    }
                    accum(grads, n.a, std::move(ga));
                    break;
                }
                case Op::kReshape:
                    accum(grads, n.a, pxcl::reshape(g, val(n.a).shape));
                    break;
            }
        }
        return grads;
    }

  private:
    std::vector<Node> nodes_;

    int push(Node n) {
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }
    int unary(Op op, int a, Tensor v) {
        Node n;
        n.op = op;
        n.a = a;
        n.value = std::move(v);
        return push(std::move(n));
    }
    int binary(Op op, int a, int b, Tensor v) {
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.value = std::move(v);
        return push(std::move(n));
    }

    static void accum(std::vector<Tensor>& grads, int id, Tensor g) {
        Tensor& slot = grads[static_cast<std::size_t>(id)];
        if (slot.size() == 0) {
            slot = std::move(g);
        } else {
            for (std::int64_t i = 0; i < slot.size(); ++i) slot[i] += g[i];
        }
    }

    void backward_conv(const Node& n, const Tensor& g, std::vector<Tensor>& grads) const {
        const Tensor& input = val(n.a);
        const Tensor& weight = val(n.b);
        const std::int64_t cin = input.shape[0], h = input.shape[1], w = input.shape[2];
        const std::int64_t cout = weight.shape[0];
        Tensor gin(input.shape);
        Tensor gw(weight.shape);
        Tensor gb(Shape{cout});
        for (std::int64_t co = 0; co < cout; ++co) {
            const double* gc = g.data.data() + co * h * w;
            for (std::int64_t i = 0; i < h * w; ++i) gb[co] += gc[i];
            for (std::int64_t ci = 0; ci < cin; ++ci) {
                const double* ic = input.data.data() + ci * h * w;
                const double* kw = weight.data.data() + (co * cin + ci) * 9;
                double* giw = gin.data.data() + ci * h * w;
                double* gww = gw.data.data() + (co * cin + ci) * 9;
                for (std::int64_t y = 0; y < h; ++y) {
                    for (std::int64_t x = 0; x < w; ++x) {
                        const double gv = gc[y * w + x];
                        if (gv == 0.0) continue;
                        for (std::int64_t dy = -1; dy <= 1; ++dy) {
                            const std::int64_t sy = y + dy;
                            if (sy < 0 || sy >= h) continue;
                            for (std::int64_t dx = -1; dx <= 1; ++dx) {
                                const std::int64_t sx = x + dx;
                                if (sx < 0 || sx >= w) continue;
                                giw[sy * w + sx] += gv * kw[(dy + 1) * 3 + (dx + 1)];
                                gww[(dy + 1) * 3 + (dx + 1)] += gv * ic[sy * w + sx];
                            }
                        }
                    }
                }
            }
        }
        accum(grads, n.a, std::move(gin));
        accum(grads, n.b, std::move(gw));
        accum(grads, n.c, std::move(gb));
    }

    static Tensor bilinear_backward(const Tensor& g, const Shape& in_shape) {
        const std::int64_t in_h = in_shape[in_shape.size() - 2];
        const std::int64_t in_w = in_shape[in_shape.size() - 1];
        const std::int64_t h = g.shape[g.shape.size() - 2];
        const std::int64_t w = g.shape[g.shape.size() - 1];
        Tensor out(in_shape);
        if (in_h == h && in_w == w) {
            out.data = g.data;
            return out;
        }
        const std::int64_t channels = g.size() / (h * w);
        for (std::int64_t c = 0; c < channels; ++c) {
            const double* gc = g.data.data() + c * h * w;
            double* oc = out.data.data() + c * in_h * in_w;
            for (std::int64_t y = 0; y < h; ++y) {
                const auto wy = detail::lin_weight(y, h, in_h);
                for (std::int64_t x = 0; x < w; ++x) {
                    const auto wx = detail::lin_weight(x, w, in_w);
                    const double gv = gc[y * w + x];
                    oc[wy.i0 * in_w + wx.i0] += gv * wy.w0 * wx.w0;
                    oc[wy.i0 * in_w + wx.i1] += gv * wy.w0 * wx.w1;
                    oc[wy.i1 * in_w + wx.i0] += gv * wy.w1 * wx.w0;
                    oc[wy.i1 * in_w + wx.i1] += gv * wy.w1 * wx.w1;
                }
            }
        }
        return out;
    }
};

}  // namespace pxcl
