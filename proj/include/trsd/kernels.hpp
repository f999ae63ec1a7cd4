#pragma once

#include <cmath>
#include <cstring>

namespace trsd {

// Hot numeric loops. Written with explicit lane accumulators so the compiler
// can vectorize without -ffast-math; summation order is fixed by the source,
// which keeps every run bitwise reproducible.

template <typename S>
inline S dot(const S* a, const S* b, int n) {
    constexpr int kLanes = 64 / static_cast<int>(sizeof(S));
    S lane[kLanes] = {};
    int i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        for (int j = 0; j < kLanes; ++j) {
            lane[j] += a[i + j] * b[i + j];
        }
    }
    S sum = 0;
    for (int j = 0; j < kLanes; ++j) {
        sum += lane[j];
    }
    for (; i < n; ++i) {
        sum += a[i] * b[i];
    }
    return sum;
}

template <typename S>
inline void axpy(S* y, S a, const S* x, int n) {
    for (int i = 0; i < n; ++i) {
        y[i] += a * x[i];
    }
}

// Y[t] = W·X[t] + b over T rows; W is [O, I] row-major.
template <typename S>
inline void linear_tokens(const S* W, const S* bias, const S* X, S* Y, int T, int O, int I) {
    for (int t = 0; t < T; ++t) {
        const S* x = X + static_cast<size_t>(t) * I;
        S* y = Y + static_cast<size_t>(t) * O;
        for (int o = 0; o < O; ++o) {
            y[o] = dot(W + static_cast<size_t>(o) * I, x, I) + (bias != nullptr ? bias[o] : S(0));
        }
    }
}

// dX[t] += Wᵀ·dY[t];  dW += dY[t]⊗X[t];  db += dY[t].
// Any output pointer may be null to skip that accumulation.
template <typename S>
inline void linear_backward_tokens(const S* W, const S* X, const S* dY, S* dX, S* dW, S* db,
                                   int T, int O, int I) {
    for (int t = 0; t < T; ++t) {
        const S* dy = dY + static_cast<size_t>(t) * O;
        const S* x = X + static_cast<size_t>(t) * I;
        S* dx = dX != nullptr ? dX + static_cast<size_t>(t) * I : nullptr;
        for (int o = 0; o < O; ++o) {
            const S g = dy[o];
            if (g == S(0)) {
                continue;
            }
            if (dx != nullptr) {
                axpy(dx, g, W + static_cast<size_t>(o) * I, I);
            }
            if (dW != nullptr) {
                axpy(dW + static_cast<size_t>(o) * I, g, x, I);
            }
            if (db != nullptr) {
                db[o] += g;
            }
        }
    }
}

template <typename S>
inline void zero(S* p, size_t n) {
    std::memset(p, 0, n * sizeof(S));
}

// numerically stable in-place softmax
template <typename S>
inline void softmax_row(S* p, int n) {
    S m = p[0];
    for (int i = 1; i < n; ++i) {
        m = p[i] > m ? p[i] : m;
    }
    S sum = 0;
    for (int i = 0; i < n; ++i) {
        p[i] = std::exp(p[i] - m);
        sum += p[i];
    }
    const S inv = S(1) / sum;
    for (int i = 0; i < n; ++i) {
        p[i] *= inv;
    }
}

template <typename S>
inline void log_softmax_row(const S* logits, S* out, int n) {
    S m = logits[0];
    for (int i = 1; i < n; ++i) {
        m = logits[i] > m ? logits[i] : m;
    }
    S sum = 0;
    for (int i = 0; i < n; ++i) {
        sum += std::exp(logits[i] - m);
    }
    const S lse = std::log(sum) + m;
    for (int i = 0; i < n; ++i) {
        out[i] = logits[i] - lse;
    }
}

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

// Rational tanh on a clamped range (the classic 13/6-degree Padé pair).
// Accurate to ~1e-7 over the reals, branch-free and vectorizable, which
// matters because the GELU below runs ~1e5 times per training example.
// Both gelu and gelu_grad use it, so reverse-mode gradients stay exact for
// the function actually computed.
template <typename S>
inline S fast_tanh(S x) {
    const S c = x < S(-9) ? S(-9) : (x > S(9) ? S(9) : x);
    const S x2 = c * c;
    const S num = c * (S(135135) + x2 * (S(17325) + x2 * (S(378) + x2)));
    const S den = S(135135) + x2 * (S(62370) + x2 * (S(3150) + x2 * S(28)));
    return num / den;
}

// exact derivative of fast_tanh (quotient rule on the Padé pair; zero in the
// clamped region), so reverse mode differentiates the implemented function
template <typename S>
inline S fast_tanh_grad(S x) {
    if (x < S(-9) || x > S(9)) {
        return S(0);
    }
    const S x2 = x * x;
    const S num = x * (S(135135) + x2 * (S(17325) + x2 * (S(378) + x2)));
    const S den = S(135135) + x2 * (S(62370) + x2 * (S(3150) + x2 * S(28)));
    const S dnum = S(135135) + x2 * (S(51975) + x2 * (S(1890) + x2 * S(7)));
    const S dden = x * (S(124740) + x2 * (S(12600) + x2 * S(168)));
    return (dnum * den - num * dden) / (den * den);
}

template <typename S>
inline S gelu(S x) {
    const S t = fast_tanh(S(kGeluC) * (x + S(kGeluA) * x * x * x));
    return S(0.5) * x * (S(1) + t);
}

template <typename S>
inline S gelu_grad(S x) {
    const S u = S(kGeluC) * (x + S(kGeluA) * x * x * x);
    const S du = S(kGeluC) * (S(1) + S(3 * kGeluA) * x * x);
    const S t = fast_tanh(u);
    return S(0.5) * (S(1) + t) + S(0.5) * x * fast_tanh_grad(u) * du;
}

}  // namespace trsd
