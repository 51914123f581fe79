#pragma once

#include "ltv/autodiff.hpp"
#include "ltv/tensor.hpp"

// Differentiable op set. Every op comes in an eager Tensor form and a Var form
// that records a backward rule on the inputs' tape. Binary ops accept
// equal-shape or scalar<->tensor operands only; scalar means numel() == 1.

namespace ltv {

// ---- eager kernels ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scalar_affine(const Tensor& x, double a, double b);  // a*x + b
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor tanh(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);

Tensor grad2d(const Tensor& x);                               // H x W -> 2 x H x W
Tensor div2d(const Tensor& p);                                // 2 x H x W -> H x W
Tensor pixel_l2_norm(const Tensor& p);                        // 2 x H x W -> H x W
Tensor pixel_l2_norm_eps(const Tensor& p, double eps);        // smoothed norm
Tensor channel_scale(const Tensor& q, const Tensor& s);       // C x H x W scaled by H x W
Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& bias);
Tensor window_mean_valid(const Tensor& x, int64_t window);
Tensor avgpool2(const Tensor& x);
Tensor upsample2_nearest(const Tensor& x);

Tensor sum(const Tensor& x);     // scalar
Tensor mean(const Tensor& x);    // scalar
Tensor std_pop(const Tensor& x); // population std, scalar
Tensor max_reduce(const Tensor& x);

// ---- recorded (Var) forms ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scalar_affine(const Var& x, double a, double b);
Var clamp(const Var& x, double lo, double hi);
Var tanh(const Var& x);
Var softplus(const Var& x);
Var sqrt(const Var& x);
Var abs(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var square(const Var& x);

Var grad2d(const Var& x);
Var div2d(const Var& p);
Var pixel_l2_norm(const Var& p);
Var pixel_l2_norm_eps(const Var& p, double eps);
Var channel_scale(const Var& q, const Var& s);
Var conv2d(const Var& x, const Var& k, const Var& bias);
Var window_mean_valid(const Var& x, int64_t window);
Var avgpool2(const Var& x);
Var upsample2_nearest(const Var& x);

Var sum(const Var& x);
Var mean(const Var& x);
Var std_pop(const Var& x);
Var max_reduce(const Var& x);

inline Var max_scalar(const Var& x, double c) {
    return clamp(x, c, std::numeric_limits<double>::infinity());
}
inline Var min_scalar(const Var& x, double c) {
    return clamp(x, -std::numeric_limits<double>::infinity(), c);
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator+(const Var& a, double c) { return scalar_affine(a, 1.0, c); }
inline Var operator-(const Var& a, double c) { return scalar_affine(a, 1.0, -c); }
inline Var operator*(const Var& a, double c) { return scalar_affine(a, c, 0.0); }
inline Var operator*(double c, const Var& a) { return scalar_affine(a, c, 0.0); }
inline Var operator/(const Var& a, double c) { return scalar_affine(a, 1.0 / c, 0.0); }
inline Var operator-(const Var& a) { return scalar_affine(a, -1.0, 0.0); }

// Hard isotropic total variation of an image (eager; no smoothing).
double total_variation(const Tensor& x);

}  // namespace ltv
