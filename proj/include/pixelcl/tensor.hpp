#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "pixelcl/errors.hpp"
#include "pixelcl/rng.hpp"

namespace pxcl {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (const std::int64_t e : shape) n *= e;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense row-major tensor of 64-bit floats.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)) {
        for (const std::int64_t e : shape)
            if (e < 0) throw ArgumentError("tensor extent must be nonnegative");
        data.assign(static_cast<std::size_t>(numel(shape)), fill);
    }
    Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
        if (static_cast<std::int64_t>(data.size()) != numel(shape))
            throw ArgumentError("tensor data length does not match shape " + shape_str(shape));
    }
    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }

    double& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    double& at(std::initializer_list<std::int64_t> idx) { return data[static_cast<std::size_t>(flat(idx))]; }
    double at(std::initializer_list<std::int64_t> idx) const { return data[static_cast<std::size_t>(flat(idx))]; }

    std::int64_t flat(std::initializer_list<std::int64_t> idx) const {
        std::int64_t f = 0;
        std::size_t d = 0;
        for (const std::int64_t i : idx) {
            f = f * shape[d] + i;
            ++d;
        }
        return f;
    }
};

inline void check_finite(const Tensor& t, const char* context) {
    for (const double v : t.data)
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + context);
}

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

// ---------------------------------------------------------------------------
// Broadcasting (numpy trailing-dimension rules)
// ---------------------------------------------------------------------------

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    Shape out(std::max(a.size(), b.size()), 1);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::int64_t ea = i < out.size() - a.size() ? 1 : a[i - (out.size() - a.size())];
        const std::int64_t eb = i < out.size() - b.size() ? 1 : b[i - (out.size() - b.size())];
        if (ea != eb && ea != 1 && eb != 1)
            throw ArgumentError("shapes " + shape_str(a) + " and " + shape_str(b) + " do not broadcast");
        out[i] = std::max(ea, eb);
    }
    return out;
}

namespace detail {

// Strides of `shape` as seen from broadcast shape `out` (0 on broadcast axes).
inline std::vector<std::int64_t> broadcast_strides(const Shape& shape, const Shape& out) {
    std::vector<std::int64_t> strides(out.size(), 0);
    std::int64_t s = 1;
    for (std::int64_t i = static_cast<std::int64_t>(shape.size()) - 1; i >= 0; --i) {
        const std::size_t oi = out.size() - shape.size() + static_cast<std::size_t>(i);
        strides[oi] = shape[static_cast<std::size_t>(i)] == 1 ? 0 : s;
        s *= shape[static_cast<std::size_t>(i)];
    }
    return strides;
}

template <typename F>
inline Tensor broadcast_binary(const Tensor& a, const Tensor& b, F&& f) {
    const Shape out_shape = broadcast_shape(a.shape, b.shape);
    Tensor out(out_shape);
    const auto sa = broadcast_strides(a.shape, out_shape);
    const auto sb = broadcast_strides(b.shape, out_shape);
    const std::int64_t n = out.size();
    const std::size_t rank = out_shape.size();
    std::vector<std::int64_t> idx(rank, 0);
    std::int64_t oa = 0, ob = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        out[i] = f(a[oa], b[ob]);
        for (std::int64_t d = static_cast<std::int64_t>(rank) - 1; d >= 0; --d) {
            const std::size_t du = static_cast<std::size_t>(d);
            ++idx[du];
            oa += sa[du];
            ob += sb[du];
            if (idx[du] < out_shape[du]) break;
            oa -= sa[du] * out_shape[du];
            ob -= sb[du] * out_shape[du];
            idx[du] = 0;
        }
    }
    return out;
}

}  // namespace detail

// Sums `g` down to `shape` (inverse of broadcasting).
inline Tensor reduce_to_shape(const Tensor& g, const Shape& shape) {
    if (g.shape == shape) return g;
    Tensor out(shape);
    const auto strides = detail::broadcast_strides(shape, g.shape);
    const std::size_t rank = g.shape.size();
    std::vector<std::int64_t> idx(rank, 0);
    std::int64_t oo = 0;
    for (std::int64_t i = 0; i < g.size(); ++i) {
        out[oo] += g[i];
        for (std::int64_t d = static_cast<std::int64_t>(rank) - 1; d >= 0; --d) {
            const std::size_t du = static_cast<std::size_t>(d);
            ++idx[du];
            oo += strides[du];
            if (idx[du] < g.shape[du]) break;
            oo -= strides[du] * g.shape[du];
            idx[du] = 0;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Elementwise and linear algebra
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::broadcast_binary(a, b, [](double x, double y) { return x + y; });
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::broadcast_binary(a, b, [](double x, double y) { return x - y; });
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::broadcast_binary(a, b, [](double x, double y) { return x * y; });
}
inline Tensor divide(const Tensor& a, const Tensor& b) {
    return detail::broadcast_binary(a, b, [](double x, double y) { return x / y; });
}

inline Tensor scale(const Tensor& a, double c) {
    Tensor out = a;
    for (double& v : out.data) v *= c;
    return out;
}

template <typename F>
inline Tensor map(const Tensor& a, F&& f) {
    Tensor out = a;
    for (double& v : out.data) v = f(v);
    return out;
}

inline Tensor relu(const Tensor& a) {
    return map(a, [](double v) { return v > 0.0 ? v : 0.0; });
}
inline Tensor exp(const Tensor& a) {
    return map(a, [](double v) { return std::exp(v); });
}
inline Tensor log(const Tensor& a) {
    return map(a, [](double v) { return std::log(v); });
}

inline double sum(const Tensor& a) {
    double s = 0.0;
    for (const double v : a.data) s += v;
    return s;
}
inline double mean(const Tensor& a) {
    if (a.size() == 0) throw ArgumentError("mean of empty tensor");
    return sum(a) / static_cast<double>(a.size());
}

inline double dot(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) throw ArgumentError("dot: length mismatch");
    double s = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) throw ArgumentError("matmul expects rank-2 tensors");
    if (a.shape[1] != b.shape[0])
        throw ArgumentError("matmul: inner extents differ " + shape_str(a.shape) + " x " + shape_str(b.shape));
    const std::int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor out(Shape{m, n});
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t l = 0; l < k; ++l) {
            const double av = a[i * k + l];
            if (av == 0.0) continue;
            const double* brow = b.data.data() + l * n;
            double* orow = out.data.data() + i * n;
            for (std::int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

inline Tensor transpose2d(const Tensor& a) {
    if (a.rank() != 2) throw ArgumentError("transpose2d expects rank-2 tensor");
    const std::int64_t m = a.shape[0], n = a.shape[1];
    Tensor out(Shape{n, m});
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
    return out;
}

inline Tensor reshape(const Tensor& a, Shape s) {
    if (numel(s) != a.size()) throw ArgumentError("reshape: element count mismatch");
    Tensor out = a;
    out.shape = std::move(s);
    return out;
}

inline Tensor gather_rows(const Tensor& a, const std::vector<std::int64_t>& idx) {
    if (a.rank() != 2) throw ArgumentError("gather_rows expects rank-2 tensor");
    const std::int64_t d = a.shape[1];
    Tensor out(Shape{static_cast<std::int64_t>(idx.size()), d});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= a.shape[0]) throw ArgumentError("gather_rows: index out of range");
        std::copy_n(a.data.data() + idx[i] * d, d, out.data.data() + static_cast<std::int64_t>(i) * d);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Axis helpers (outer / axis / inner decomposition)
// ---------------------------------------------------------------------------

namespace detail {
struct AxisSpan {
    std::int64_t outer, extent, inner;
};
inline AxisSpan axis_span(const Shape& shape, std::int64_t axis) {
    if (axis < 0 || axis >= static_cast<std::int64_t>(shape.size()))
        throw ArgumentError("axis out of range for shape " + shape_str(shape));
    AxisSpan s{1, shape[static_cast<std::size_t>(axis)], 1};
    for (std::int64_t i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}
}  // namespace detail

inline Tensor axis_sum(const Tensor& a, std::int64_t axis, bool keepdim = true) {
    const auto sp = detail::axis_span(a.shape, axis);
    Shape out_shape = a.shape;
    out_shape[static_cast<std::size_t>(axis)] = 1;
    Tensor out(out_shape);
    for (std::int64_t o = 0; o < sp.outer; ++o)
        for (std::int64_t k = 0; k < sp.extent; ++k)
            for (std::int64_t i = 0; i < sp.inner; ++i)
                out[o * sp.inner + i] += a[(o * sp.extent + k) * sp.inner + i];
    if (!keepdim) out.shape.erase(out.shape.begin() + axis);
    return out;
}

inline Tensor axis_max(const Tensor& a, std::int64_t axis, bool keepdim = true) {
    const auto sp = detail::axis_span(a.shape, axis);
    Shape out_shape = a.shape;
    out_shape[static_cast<std::size_t>(axis)] = 1;
    Tensor out(out_shape, -HUGE_VAL);
    for (std::int64_t o = 0; o < sp.outer; ++o)
        for (std::int64_t k = 0; k < sp.extent; ++k)
            for (std::int64_t i = 0; i < sp.inner; ++i)
                out[o * sp.inner + i] = std::max(out[o * sp.inner + i], a[(o * sp.extent + k) * sp.inner + i]);
    if (!keepdim) out.shape.erase(out.shape.begin() + axis);
    return out;
}

// Softmax along `axis`, computed with max subtraction. Slices sum to 1.
inline Tensor softmax(const Tensor& t, std::int64_t axis) {
    const auto sp = detail::axis_span(t.shape, axis);
    Tensor out(t.shape);
    for (std::int64_t o = 0; o < sp.outer; ++o) {
        for (std::int64_t i = 0; i < sp.inner; ++i) {
            double m = -HUGE_VAL;
            for (std::int64_t k = 0; k < sp.extent; ++k)
                m = std::max(m, t[(o * sp.extent + k) * sp.inner + i]);
            double z = 0.0;
            for (std::int64_t k = 0; k < sp.extent; ++k) {
                const double e = std::exp(t[(o * sp.extent + k) * sp.inner + i] - m);
                out[(o * sp.extent + k) * sp.inner + i] = e;
                z += e;
            }
            for (std::int64_t k = 0; k < sp.extent; ++k) out[(o * sp.extent + k) * sp.inner + i] /= z;
        }
    }
    check_finite(out, "softmax");
    return out;
}

// Normalizes slices along `axis` to unit Euclidean norm; slices with norm
// below `eps` are passed through unchanged.
inline Tensor l2_normalize(const Tensor& t, std::int64_t axis, double eps = 1e-12) {
    const auto sp = detail::axis_span(t.shape, axis);
    Tensor out = t;
    for (std::int64_t o = 0; o < sp.outer; ++o) {
        for (std::int64_t i = 0; i < sp.inner; ++i) {
            double ss = 0.0;
            for (std::int64_t k = 0; k < sp.extent; ++k) {
                const double v = t[(o * sp.extent + k) * sp.inner + i];
                ss += v * v;
            }
            const double n = std::sqrt(ss);
            if (n < eps) continue;
            for (std::int64_t k = 0; k < sp.extent; ++k) out[(o * sp.extent + k) * sp.inner + i] /= n;
        }
    }
    check_finite(out, "l2_normalize");
    return out;
}

// ---------------------------------------------------------------------------
// Bilinear resize (align-corners) over the trailing two axes.
// ---------------------------------------------------------------------------

namespace detail {
struct LinWeight {
    std::int64_t i0, i1;
    double w0, w1;
};
inline LinWeight lin_weight(std::int64_t out_i, std::int64_t out_n, std::int64_t in_n) {
    // Align-corners: endpoints map to endpoints; a single sample maps to 0.
    double x = 0.0;
    if (out_n > 1) x = static_cast<double>(out_i) * static_cast<double>(in_n - 1) / static_cast<double>(out_n - 1);
    std::int64_t i0 = static_cast<std::int64_t>(std::floor(x));
    i0 = std::min(i0, in_n - 1);
    const std::int64_t i1 = std::min(i0 + 1, in_n - 1);
    const double f = x - static_cast<double>(i0);
    return LinWeight{i0, i1, 1.0 - f, f};
}
}  // namespace detail

inline Tensor bilinear_resize(const Tensor& map, std::int64_t h, std::int64_t w) {
    if (map.rank() < 2) throw ArgumentError("bilinear_resize expects rank >= 2");
    if (h < 1 || w < 1) throw ArgumentError("bilinear_resize: target extents must be >= 1");
    const std::int64_t in_h = map.shape[map.shape.size() - 2];
    const std::int64_t in_w = map.shape[map.shape.size() - 1];
    if (in_h < 1 || in_w < 1) throw ArgumentError("bilinear_resize: source extents must be >= 1");
    if (in_h == h && in_w == w) return map;
    Shape out_shape = map.shape;
    out_shape[out_shape.size() - 2] = h;
    out_shape[out_shape.size() - 1] = w;
    Tensor out(out_shape);
    const std::int64_t channels = map.size() / (in_h * in_w);
    for (std::int64_t c = 0; c < channels; ++c) {
        const double* src = map.data.data() + c * in_h * in_w;
        double* dst = out.data.data() + c * h * w;
        for (std::int64_t y = 0; y < h; ++y) {
            const auto wy = detail::lin_weight(y, h, in_h);
            for (std::int64_t x = 0; x < w; ++x) {
                const auto wx = detail::lin_weight(x, w, in_w);
                dst[y * w + x] = wy.w0 * (wx.w0 * src[wy.i0 * in_w + wx.i0] + wx.w1 * src[wy.i0 * in_w + wx.i1]) +
                                 wy.w1 * (wx.w0 * src[wy.i1 * in_w + wx.i0] + wx.w1 * src[wy.i1 * in_w + wx.i1]);
            }
        }
    }
    check_finite(out, "bilinear_resize");
    return out;
}

// ---------------------------------------------------------------------------
// 3x3 convolution, stride 1, zero padding. input [Cin,H,W], w [Cout,Cin,3,3].
// ---------------------------------------------------------------------------

inline Tensor conv3x3(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    if (input.rank() != 3 || weight.rank() != 4) throw ArgumentError("conv3x3: bad ranks");
    const std::int64_t cin = input.shape[0], h = input.shape[1], w = input.shape[2];
    const std::int64_t cout = weight.shape[0];
    if (weight.shape[1] != cin || weight.shape[2] != 3 || weight.shape[3] != 3)
        throw ArgumentError("conv3x3: weight shape mismatch");
    if (bias.size() != cout) throw ArgumentError("conv3x3: bias length mismatch");
    Tensor out(Shape{cout, h, w});
    for (std::int64_t co = 0; co < cout; ++co) {
        double* oc = out.data.data() + co * h * w;
        for (std::int64_t i = 0; i < h * w; ++i) oc[i] = bias[co];
        for (std::int64_t ci = 0; ci < cin; ++ci) {
            const double* ic = input.data.data() + ci * h * w;
            const double* kw = weight.data.data() + (co * cin + ci) * 9;
            for (std::int64_t y = 0; y < h; ++y) {
                for (std::int64_t x = 0; x < w; ++x) {
                    double acc = 0.0;
                    for (std::int64_t dy = -1; dy <= 1; ++dy) {
                        const std::int64_t sy = y + dy;
                        if (sy < 0 || sy >= h) continue;
                        for (std::int64_t dx = -1; dx <= 1; ++dx) {
                            const std::int64_t sx = x + dx;
                            if (sx < 0 || sx >= w) continue;
                            acc += kw[(dy + 1) * 3 + (dx + 1)] * ic[sy * w + sx];
                        }
                    }
                    oc[y * w + x] += acc;
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Random fills and the central-difference gradient oracle.
// ---------------------------------------------------------------------------

inline Tensor random_uniform(const Shape& shape, RngStream& rng, double lo = 0.0, double hi = 1.0) {
    Tensor out(shape);
    for (double& v : out.data) v = rng.uniform(lo, hi);
    return out;
}

inline Tensor random_normal(const Shape& shape, RngStream& rng) {
    Tensor out(shape);
    for (double& v : out.data) v = rng.normal();
    return out;
}

inline Tensor random_unit_vector(std::int64_t d, RngStream& rng) {
    Tensor v = random_normal(Shape{d}, rng);
    double n = norm2(v);
    while (n < 1e-8) {
        v = random_normal(Shape{d}, rng);
        n = norm2(v);
    }
    return scale(v, 1.0 / n);
}

// Central finite differences; the gradient oracle used by every autodiff test.
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps = 1e-6) {
    Tensor g(x.shape);
    Tensor xp = x;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const double orig = xp[i];
        xp[i] = orig + eps;
        const double fp = f(xp);
        xp[i] = orig - eps;
        const double fm = f(xp);
        xp[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) throw NumericError("finite_diff_grad: non-finite evaluation");
        g[i] = (fp - fm) / (2.0 * eps);
    }
    return g;
}

// Relative error between two same-shape tensors, normalized by the larger norm.
inline double rel_error(const Tensor& a, const Tensor& b) {
    if (!same_shape(a, b)) throw ArgumentError("rel_error: shape mismatch");
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
    return std::sqrt(diff) / denom;
}

}  // namespace pxcl
