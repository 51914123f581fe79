#include "ltv/ops.hpp"

#include <algorithm>
#include <cmath>

namespace ltv {

namespace {

constexpr size_t npos = Var::npos;

struct BinLayout {
    Shape out;
    bool a_scalar = false;
    bool b_scalar = false;
};

BinLayout bin_layout(const Tensor& a, const Tensor& b, const char* op) {
    BinLayout l;
    l.a_scalar = a.numel() == 1;
    l.b_scalar = b.numel() == 1;
    if (a.same_shape(b)) {
        l.out = a.shape();
        return l;
    }
    if (l.b_scalar) {
        l.out = a.shape();
        return l;
    }
    if (l.a_scalar) {
        l.out = b.shape();
        return l;
    }
    throw shape_error(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                      " and " + shape_str(b.shape()));
}

template <typename F>
Var make_var(Tensor out, Tape* t, F&& back) {
    auto p = std::make_shared<const Tensor>(std::move(out));
    if (t == nullptr) return Var(p, nullptr, npos);
    const size_t id = t->push_node(p->shape(), std::forward<F>(back));
    return Var(p, t, id);
}

// Adds `contrib` (already at output shape) into input `id`, summing when the
// input was a broadcast scalar.
inline void accum_elem(Tape& tp, size_t id, bool scalar_in, int64_t i, double v) {
    Tensor& g = tp.grad_slot(id);
    g[scalar_in ? 0 : i] += v;
}

void check_image(const Tensor& x, const char* op) {
    if (x.rank() != 2) throw shape_error(std::string(op) + ": expected H x W input, got " + shape_str(x.shape()));
}

void check_field(const Tensor& p, const char* op) {
    if (p.rank() != 3 || p.extent(0) != 2)
        throw shape_error(std::string(op) + ": expected 2 x H x W input, got " + shape_str(p.shape()));
}

}  // namespace

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    BinLayout l = bin_layout(a, b, "add");
    Tensor out(l.out);
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = a[l.a_scalar ? 0 : i] + b[l.b_scalar ? 0 : i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    BinLayout l = bin_layout(a, b, "sub");
    Tensor out(l.out);
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = a[l.a_scalar ? 0 : i] - b[l.b_scalar ? 0 : i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    BinLayout l = bin_layout(a, b, "mul");
    Tensor out(l.out);
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = a[l.a_scalar ? 0 : i] * b[l.b_scalar ? 0 : i];
    return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
    BinLayout l = bin_layout(a, b, "div");
    Tensor out(l.out);
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double d = b[l.b_scalar ? 0 : i];
        if (std::fabs(d) < 1e-300)
            throw numeric_error("div: denominator magnitude below 1e-300");
        out[i] = a[l.a_scalar ? 0 : i] / d;
    }
    return out;
}

Tensor scalar_affine(const Tensor& x, double a, double b) {
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = a * x[i] + b;
    return out;
}

Tensor clamp(const Tensor& x, double lo, double hi) {
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::min(hi, std::max(lo, x[i]));
    return out;
}

Tensor tanh(const Tensor& x) {
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::tanh(x[i]);
    return out;
}

namespace {
inline double softplus1(double v) {
    if (v > 30.0) return v + std::log1p(std::exp(-v));
    if (v < -30.0) return std::exp(v);
    return std::log1p(std::exp(v));
}
inline double sigmoid1(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}
}  // namespace

Tensor softplus(const Tensor& x) {
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = softplus1(x[i]);
    return out;
}

Tensor sqrt(const Tensor& x) {
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::sqrt(x[i]);
    return out;
}

Tensor abs(const Tensor& x) {
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::fabs(x[i]);
    return out;
}

Tensor exp(const Tensor& x) {
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::exp(x[i]);
    return out;
}

Tensor log(const Tensor& x) {
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::log(x[i]);
    return out;
}

Tensor square(const Tensor& x) {
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] * x[i];
    return out;
}

// --------------------------------------------------------------- image ops

Tensor grad2d(const Tensor& x) {
    check_image(x, "grad2d");
    const int64_t H = x.extent(0), W = x.extent(1);
    Tensor out({2, H, W});
    for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
            out.at(0, i, j) = (j + 1 < W) ? x.at(i, j + 1) - x.at(i, j) : 0.0;
            out.at(1, i, j) = (i + 1 < H) ? x.at(i + 1, j) - x.at(i, j) : 0.0;
        }
    return out;
}

Tensor div2d(const Tensor& p) {
    check_field(p, "div2d");
    const int64_t H = p.extent(1), W = p.extent(2);
    Tensor out({H, W});
    for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
            double v = 0.0;
            if (j + 1 < W) v += p.at(0, i, j);
            if (j >= 1) v -= p.at(0, i, j - 1);
            if (i + 1 < H) v += p.at(1, i, j);
            if (i >= 1) v -= p.at(1, i - 1, j);
            out.at(i, j) = v;
        }
    return out;
}

Tensor pixel_l2_norm(const Tensor& p) {
    check_field(p, "pixel_l2_norm");
    const int64_t H = p.extent(1), W = p.extent(2);
    Tensor out({H, W});
    for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j)
            out.at(i, j) = std::hypot(p.at(0, i, j), p.at(1, i, j));
    return out;
}

Tensor pixel_l2_norm_eps(const Tensor& p, double eps) {
    check_field(p, "pixel_l2_norm_eps");
    const int64_t H = p.extent(1), W = p.extent(2);
    Tensor out({H, W});
    for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
            const double a = p.at(0, i, j), b = p.at(1, i, j);
            out.at(i, j) = std::sqrt(a * a + b * b + eps * eps);
        }
    return out;
}

Tensor channel_scale(const Tensor& q, const Tensor& s) {
    if (q.rank() != 3) throw shape_error("channel_scale: expected C x H x W field");
    if (s.rank() != 2 || s.extent(0) != q.extent(1) || s.extent(1) != q.extent(2))
        throw shape_error("channel_scale: scale map shape " + shape_str(s.shape()) +
                          " does not match field " + shape_str(q.shape()));
    const int64_t C = q.extent(0), HW = s.numel();
    Tensor out(q.shape());
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < HW; ++i) out[c * HW + i] = q[c * HW + i] * s[i];
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& bias) {
    if (x.rank() != 3) throw shape_error("conv2d: input must be Cin x H x W");
    if (k.rank() != 4) throw shape_error("conv2d: kernel must be Cout x Cin x kh x kw");
    const int64_t Cin = x.extent(0), H = x.extent(1), W = x.extent(2);
    const int64_t Cout = k.extent(0), kh = k.extent(2), kw = k.extent(3);
    if (k.extent(1) != Cin)
        throw shape_error("conv2d: kernel expects " + std::to_string(k.extent(1)) +
                          " input channels, got " + std::to_string(Cin));
    if (kh % 2 == 0 || kw % 2 == 0) throw shape_error("conv2d: kernel extents must be odd");
    if (bias.numel() != Cout) throw shape_error("conv2d: bias length must equal Cout");
    const int64_t ph = kh / 2, pw = kw / 2;
    Tensor out({Cout, H, W});
    for (int64_t o = 0; o < Cout; ++o)
        for (int64_t i = 0; i < H; ++i)
            for (int64_t j = 0; j < W; ++j) {
                double acc = bias[o];
                for (int64_t c = 0; c < Cin; ++c)
                    for (int64_t u = 0; u < kh; ++u) {
                        const int64_t y = i + u - ph;
                        if (y < 0 || y >= H) continue;
                        for (int64_t v = 0; v < kw; ++v) {
                            const int64_t z = j + v - pw;
                            if (z < 0 || z >= W) continue;
                            acc += x.at(c, y, z) * k[((o * Cin + c) * kh + u) * kw + v];
                        }
                    }
                out.at(o, i, j) = acc;
            }
    return out;
}

Tensor window_mean_valid(const Tensor& x, int64_t window) {
    check_image(x, "window_mean_valid");
    if (window < 1) throw shape_error("window_mean_valid: window must be >= 1");
    const int64_t H = x.extent(0), W = x.extent(1);
    if (H < window || W < window)
        throw shape_error("window_mean_valid: image " + shape_str(x.shape()) +
                          " smaller than window " + std::to_string(window));
    const int64_t Ho = H - window + 1, Wo = W - window + 1;
    const double inv = 1.0 / static_cast<double>(window * window);
    Tensor out({Ho, Wo});
    for (int64_t i = 0; i < Ho; ++i)
        for (int64_t j = 0; j < Wo; ++j) {
            double acc = 0.0;
            for (int64_t u = 0; u < window; ++u)
                for (int64_t v = 0; v < window; ++v) acc += x.at(i + u, j + v);
            out.at(i, j) = acc * inv;
        }
    return out;
}

Tensor avgpool2(const Tensor& x) {
    check_image(x, "avgpool2");
    const int64_t H = x.extent(0), W = x.extent(1);
    if (H % 2 != 0 || W % 2 != 0) throw shape_error("avgpool2: extents must be even");
    Tensor out({H / 2, W / 2});
    for (int64_t i = 0; i < H / 2; ++i)
        for (int64_t j = 0; j < W / 2; ++j)
            out.at(i, j) = 0.25 * (x.at(2 * i, 2 * j) + x.at(2 * i, 2 * j + 1) +
                                   x.at(2 * i + 1, 2 * j) + x.at(2 * i + 1, 2 * j + 1));
    return out;
}

Tensor upsample2_nearest(const Tensor& x) {
    check_image(x, "upsample2_nearest");
    const int64_t H = x.extent(0), W = x.extent(1);
    Tensor out({2 * H, 2 * W});
    for (int64_t i = 0; i < 2 * H; ++i)
        for (int64_t j = 0; j < 2 * W; ++j) out.at(i, j) = x.at(i / 2, j / 2);
    return out;
}

// --------------------------------------------------------------- reductions

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) s += x[i];
    return Tensor::scalar(s);
}

Tensor mean(const Tensor& x) {
    return Tensor::scalar(sum(x).scalar_value() / static_cast<double>(x.numel()));
}

Tensor std_pop(const Tensor& x) {
    const double mu = mean(x).scalar_value();
    double acc = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) {
        const double d = x[i] - mu;
        acc += d * d;
    }
    return Tensor::scalar(std::sqrt(acc / static_cast<double>(x.numel())));
}

Tensor max_reduce(const Tensor& x) {
    double m = x[0];
    for (int64_t i = 1; i < x.numel(); ++i) m = std::max(m, x[i]);
    return Tensor::scalar(m);
}

double total_variation(const Tensor& x) {
    return sum(pixel_l2_norm(grad2d(x))).scalar_value();
}

// ------------------------------------------------------------ recorded forms

namespace {

template <typename FwdFn, typename DA, typename DB>
Var binary_op(const char* name, const Var& a, const Var& b, FwdFn fwd, DA da, DB db) {
    BinLayout l = bin_layout(a.value(), b.value(), name);
    Tensor out = fwd(a.value(), b.value());
    out.require_finite(name);
    Tape* t = common_tape({&a, &b});
    auto pa = a.val;
    auto pb = b.val;
    const size_t aid = a.id, bid = b.id;
    return make_var(std::move(out), t, [=](const Tensor& up, Tape& tp) {
        for (int64_t i = 0; i < up.numel(); ++i) {
            const double av = (*pa)[l.a_scalar ? 0 : i];
            const double bv = (*pb)[l.b_scalar ? 0 : i];
            if (aid != npos) accum_elem(tp, aid, l.a_scalar, i, da(up[i], av, bv));
            if (bid != npos) accum_elem(tp, bid, l.b_scalar, i, db(up[i], av, bv));
        }
    });
}

// Unary elementwise with derivative expressed from input and output values.
template <typename FwdFn, typename DX>
Var unary_op(const char* name, const Var& x, FwdFn fwd, DX dx) {
    Tensor out = fwd(x.value());
    out.require_finite(name);
    Tape* t = common_tape({&x});
    auto px = x.val;
    const size_t xid = x.id;
    auto pout = std::make_shared<const Tensor>(std::move(out));
    if (t == nullptr) return Var(pout, nullptr, npos);
    const size_t id = t->push_node(pout->shape(), [=](const Tensor& up, Tape& tp) {
        if (xid == npos) return;
        Tensor& g = tp.grad_slot(xid);
        for (int64_t i = 0; i < up.numel(); ++i) g[i] += up[i] * dx((*px)[i], (*pout)[i]);
    });
    return Var(pout, t, id);
}

}  // namespace

Var add(const Var& a, const Var& b) {
    return binary_op(
        "add", a, b, [](const Tensor& x, const Tensor& y) { return add(x, y); },
        [](double up, double, double) { return up; },
        [](double up, double, double) { return up; });
}

Var sub(const Var& a, const Var& b) {
    return binary_op(
        "sub", a, b, [](const Tensor& x, const Tensor& y) { return sub(x, y); },
        [](double up, double, double) { return up; },
        [](double up, double, double) { return -up; });
}

Var mul(const Var& a, const Var& b) {
    return binary_op(
        "mul", a, b, [](const Tensor& x, const Tensor& y) { return mul(x, y); },
        [](double up, double, double bv) { return up * bv; },
        [](double up, double av, double) { return up * av; });
}

Var div(const Var& a, const Var& b) {
    return binary_op(
        "div", a, b, [](const Tensor& x, const Tensor& y) { return div(x, y); },
        [](double up, double, double bv) { return up / bv; },
        [](double up, double av, double bv) { return -up * av / (bv * bv); });
}

Var scalar_affine(const Var& x, double a, double b) {
    return unary_op(
        "scalar_affine", x,
        [&](const Tensor& v) { return scalar_affine(v, a, b); },
        [a](double, double) { return a; });
}

Var clamp(const Var& x, double lo, double hi) {
    // Zero gradient outside [lo, hi], identity inside (inclusive).
    return unary_op(
        "clamp", x, [&](const Tensor& v) { return clamp(v, lo, hi); },
        [lo, hi](double xi, double) { return (xi >= lo && xi <= hi) ? 1.0 : 0.0; });
}

Var tanh(const Var& x) {
    return unary_op(
        "tanh", x, [](const Tensor& v) { return tanh(v); },
        [](double, double out) { return 1.0 - out * out; });
}

Var softplus(const Var& x) {
    return unary_op(
        "softplus", x, [](const Tensor& v) { return softplus(v); },
        [](double xi, double) { return sigmoid1(xi); });
}

Var sqrt(const Var& x) {
    return unary_op(
        "sqrt", x, [](const Tensor& v) { return sqrt(v); },
        [](double, double out) { return 0.5 / out; });
}

Var abs(const Var& x) {
    // Subgradient 0 at exactly zero.
    return unary_op(
        "abs", x, [](const Tensor& v) { return abs(v); },
        [](double xi, double) { return xi > 0.0 ? 1.0 : (xi < 0.0 ? -1.0 : 0.0); });
}

Var exp(const Var& x) {
    return unary_op(
        "exp", x, [](const Tensor& v) { return exp(v); },
        [](double, double out) { return out; });
}

Var log(const Var& x) {
    return unary_op(
        "log", x, [](const Tensor& v) { return log(v); },
        [](double xi, double) { return 1.0 / xi; });
}

Var square(const Var& x) {
    return unary_op(
        "square", x, [](const Tensor& v) { return square(v); },
        [](double xi, double) { return 2.0 * xi; });
}

Var grad2d(const Var& x) {
    Tensor out = grad2d(x.value());
    out.require_finite("grad2d");
    Tape* t = common_tape({&x});
    const size_t xid = x.id;
    return make_var(std::move(out), t, [xid](const Tensor& up, Tape& tp) {
        if (xid == npos) return;
        // Adjoint of the forward-difference gradient is -div2d.
        Tensor adj = div2d(up);
        Tensor& g = tp.grad_slot(xid);
        for (int64_t i = 0; i < adj.numel(); ++i) g[i] -= adj[i];
    });
}

Var div2d(const Var& p) {
    Tensor out = div2d(p.value());
    out.require_finite("div2d");
    Tape* t = common_tape({&p});
    const size_t pid = p.id;
    return make_var(std::move(out), t, [pid](const Tensor& up, Tape& tp) {
        if (pid == npos) return;
        Tensor adj = grad2d(up);
        Tensor& g = tp.grad_slot(pid);
        for (int64_t i = 0; i < adj.numel(); ++i) g[i] -= adj[i];
    });
}

Var pixel_l2_norm(const Var& p) {
    Tensor out = pixel_l2_norm(p.value());
    out.require_finite("pixel_l2_norm");
    Tape* t = common_tape({&p});
    auto pp = p.val;
    const size_t pid = p.id;
    auto pout = std::make_shared<const Tensor>(std::move(out));
    if (t == nullptr) return Var(pout, nullptr, npos);
    const size_t id = t->push_node(pout->shape(), [=](const Tensor& up, Tape& tp) {
        if (pid == npos) return;
        Tensor& g = tp.grad_slot(pid);
        const int64_t HW = pout->numel();
        for (int64_t i = 0; i < HW; ++i) {
            const double n = (*pout)[i];
            if (n <= 0.0) continue;  // subgradient 0 at zero magnitude
            const double w = up[i] / n;
            g[i] += w * (*pp)[i];
            g[HW + i] += w * (*pp)[HW + i];
        }
    });
    return Var(pout, t, id);
}

Var pixel_l2_norm_eps(const Var& p, double eps) {
    Tensor out = pixel_l2_norm_eps(p.value(), eps);
    out.require_finite("pixel_l2_norm_eps");
    Tape* t = common_tape({&p});
    auto pp = p.val;
    const size_t pid = p.id;
    auto pout = std::make_shared<const Tensor>(std::move(out));
    if (t == nullptr) return Var(pout, nullptr, npos);
    const size_t id = t->push_node(pout->shape(), [=](const Tensor& up, Tape& tp) {
        if (pid == npos) return;
        Tensor& g = tp.grad_slot(pid);
        const int64_t HW = pout->numel();
        for (int64_t i = 0; i < HW; ++i) {
            const double w = up[i] / (*pout)[i];
            g[i] += w * (*pp)[i];
            g[HW + i] += w * (*pp)[HW + i];
        }
    });
    return Var(pout, t, id);
}

Var channel_scale(const Var& q, const Var& s) {
    Tensor out = channel_scale(q.value(), s.value());
    out.require_finite("channel_scale");
    Tape* t = common_tape({&q, &s});
    auto pq = q.val;
    auto ps = s.val;
    const size_t qid = q.id, sid = s.id;
    const int64_t C = q.value().extent(0), HW = s.value().numel();
    return make_var(std::move(out), t, [=](const Tensor& up, Tape& tp) {
        if (qid != npos) {
            Tensor& g = tp.grad_slot(qid);
            for (int64_t c = 0; c < C; ++c)
                for (int64_t i = 0; i < HW; ++i) g[c * HW + i] += up[c * HW + i] * (*ps)[i];
        }
        if (sid != npos) {
            Tensor& g = tp.grad_slot(sid);
            for (int64_t c = 0; c < C; ++c)
                for (int64_t i = 0; i < HW; ++i) g[i] += up[c * HW + i] * (*pq)[c * HW + i];
        }
    });
}

Var conv2d(const Var& x, const Var& k, const Var& bias) {
    Tensor out = conv2d(x.value(), k.value(), bias.value());
    out.require_finite("conv2d");
    Tape* t = common_tape({&x, &k, &bias});
    auto px = x.val;
    auto pk = k.val;
    const size_t xid = x.id, kid = k.id, bid = bias.id;
    return make_var(std::move(out), t, [=](const Tensor& up, Tape& tp) {
        const Tensor& xv = *px;
        const Tensor& kv = *pk;
        const int64_t Cin = xv.extent(0), H = xv.extent(1), W = xv.extent(2);
        const int64_t Cout = kv.extent(0), kh = kv.extent(2), kw = kv.extent(3);
        const int64_t ph = kh / 2, pw = kw / 2;
        Tensor* gx = xid != npos ? &tp.grad_slot(xid) : nullptr;
        Tensor* gk = kid != npos ? &tp.grad_slot(kid) : nullptr;
        Tensor* gb = bid != npos ? &tp.grad_slot(bid) : nullptr;
        for (int64_t o = 0; o < Cout; ++o)
            for (int64_t i = 0; i < H; ++i)
                for (int64_t j = 0; j < W; ++j) {
                    const double g = up.at(o, i, j);
                    if (g == 0.0) continue;
                    if (gb) (*gb)[o] += g;
                    for (int64_t c = 0; c < Cin; ++c)
                        for (int64_t u = 0; u < kh; ++u) {
                            const int64_t y = i + u - ph;
                            if (y < 0 || y >= H) continue;
                            for (int64_t v = 0; v < kw; ++v) {
                                const int64_t z = j + v - pw;
                                if (z < 0 || z >= W) continue;
                                const int64_t ki = ((o * Cin + c) * kh + u) * kw + v;
                                if (gx) (*gx)[(c * H + y) * W + z] += g * kv[ki];
                                if (gk) (*gk)[ki] += g * xv.at(c, y, z);
                            }
                        }
                }
    });
}

Var window_mean_valid(const Var& x, int64_t window) {
    Tensor out = window_mean_valid(x.value(), window);
    out.require_finite("window_mean_valid");
    Tape* t = common_tape({&x});
    const size_t xid = x.id;
    const int64_t W = x.value().extent(1);
    return make_var(std::move(out), t, [xid, window, W](const Tensor& up, Tape& tp) {
        if (xid == npos) return;
        Tensor& g = tp.grad_slot(xid);
        const double inv = 1.0 / static_cast<double>(window * window);
        for (int64_t i = 0; i < up.extent(0); ++i)
            for (int64_t j = 0; j < up.extent(1); ++j) {
                const double v = up.at(i, j) * inv;
                for (int64_t u = 0; u < window; ++u)
                    for (int64_t w = 0; w < window; ++w) g[(i + u) * W + (j + w)] += v;
            }
    });
}

Var avgpool2(const Var& x) {
    Tensor out = avgpool2(x.value());
    out.require_finite("avgpool2");
    Tape* t = common_tape({&x});
    const size_t xid = x.id;
    const int64_t W = x.value().extent(1);
    return make_var(std::move(out), t, [xid, W](const Tensor& up, Tape& tp) {
        if (xid == npos) return;
        Tensor& g = tp.grad_slot(xid);
        for (int64_t i = 0; i < up.extent(0); ++i)
            for (int64_t j = 0; j < up.extent(1); ++j) {
                const double v = 0.25 * up.at(i, j);
                g[(2 * i) * W + 2 * j] += v;
                g[(2 * i) * W + 2 * j + 1] += v;
                g[(2 * i + 1) * W + 2 * j] += v;
                g[(2 * i + 1) * W + 2 * j + 1] += v;
            }
    });
}

Var upsample2_nearest(const Var& x) {
    Tensor out = upsample2_nearest(x.value());
    out.require_finite("upsample2_nearest");
    Tape* t = common_tape({&x});
    const size_t xid = x.id;
    const int64_t W = x.value().extent(1);
    return make_var(std::move(out), t, [xid, W](const Tensor& up, Tape& tp) {
        if (xid == npos) return;
        Tensor& g = tp.grad_slot(xid);
        for (int64_t i = 0; i < up.extent(0); ++i)
            for (int64_t j = 0; j < up.extent(1); ++j) g[(i / 2) * W + (j / 2)] += up.at(i, j);
    });
}

Var sum(const Var& x) {
    Tensor out = sum(x.value());
    out.require_finite("sum");
    Tape* t = common_tape({&x});
    const size_t xid = x.id;
    return make_var(std::move(out), t, [xid](const Tensor& up, Tape& tp) {
        if (xid == npos) return;
        Tensor& g = tp.grad_slot(xid);
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += up[0];
    });
}

Var mean(const Var& x) {
    Tensor out = mean(x.value());
    out.require_finite("mean");
    Tape* t = common_tape({&x});
    const size_t xid = x.id;
    const double inv = 1.0 / static_cast<double>(x.value().numel());
    return make_var(std::move(out), t, [xid, inv](const Tensor& up, Tape& tp) {
        if (xid == npos) return;
        Tensor& g = tp.grad_slot(xid);
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += up[0] * inv;
    });
}

Var std_pop(const Var& x) {
    Tensor out = std_pop(x.value());
    out.require_finite("std_pop");
    Tape* t = common_tape({&x});
    auto px = x.val;
    const size_t xid = x.id;
    const double s = out.scalar_value();
    const double mu = mean(x.value()).scalar_value();
    return make_var(std::move(out), t, [=](const Tensor& up, Tape& tp) {
        if (xid == npos) return;
        if (s <= 0.0) return;  // gradient defined as 0 at constant input
        Tensor& g = tp.grad_slot(xid);
        const double w = up[0] / (static_cast<double>(g.numel()) * s);
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += w * ((*px)[i] - mu);
    });
}

Var max_reduce(const Var& x) {
    Tensor out = max_reduce(x.value());
    out.require_finite("max_reduce");
    Tape* t = common_tape({&x});
    const size_t xid = x.id;
    int64_t arg = 0;
    const Tensor& xv = x.value();
    for (int64_t i = 1; i < xv.numel(); ++i)
        if (xv[i] > xv[arg]) arg = i;
    return make_var(std::move(out), t, [xid, arg](const Tensor& up, Tape& tp) {
        if (xid == npos) return;
        tp.grad_slot(xid)[arg] += up[0];
    });
}

}  // namespace ltv
