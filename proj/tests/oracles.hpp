// Independent reference implementations used to freeze expected values.
// Everything here deliberately avoids the library's compute paths: plain
// nested loops, long-double arithmetic, alternative algebraic routes.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ssdgl/hsi_data.hpp"
#include "ssdgl/rng.hpp"
#include "ssdgl/sampler.hpp"
#include "ssdgl/tensor.hpp"

namespace oracle {

// direct nested-loop cross-correlation, no im2col, no GEMM
template <class S>
ssdgl::Tensor<S> conv2d_naive(const ssdgl::Tensor<S>& x, const ssdgl::Tensor<S>& w,
                              const ssdgl::Tensor<S>& b, int stride, int pad) {
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int Cout = w.dim(0), k = w.dim(2);
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W + 2 * pad - k) / stride + 1;
    ssdgl::Tensor<S> out = ssdgl::Tensor<S>::zeros({Cout, Ho, Wo});
    for (int co = 0; co < Cout; ++co)
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
                double acc = b.defined() ? double(b.data()[co]) : 0.0;
                for (int ci = 0; ci < C; ++ci)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int iy = oy * stride + ky - pad;
                            const int ix = ox * stride + kx - pad;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            acc += double(x.at({ci, iy, ix})) * double(w.at({co, ci, ky, kx}));
                        }
                out.raw()[(std::size_t(co) * Ho + oy) * Wo + ox] = S(acc);
            }
    return out;
}

// per-channel normalization (group_norm with groups == C)
template <class S>
ssdgl::Tensor<S> instance_norm_naive(const ssdgl::Tensor<S>& x, double eps) {
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const long long hw = (long long)H * W;
    ssdgl::Tensor<S> out = ssdgl::Tensor<S>::zeros(x.shape());
    for (int c = 0; c < C; ++c) {
        long double mean = 0.0L, var = 0.0L;
        for (long long i = 0; i < hw; ++i) mean += (long double)x.data()[c * hw + i];
        mean /= (long double)hw;
        for (long long i = 0; i < hw; ++i) {
            const long double d = (long double)x.data()[c * hw + i] - mean;
            var += d * d;
        }
        var /= (long double)hw;
        const long double inv = 1.0L / std::sqrt(var + (long double)eps);
        for (long long i = 0; i < hw; ++i)
            out.raw()[c * hw + i] = S(((long double)x.data()[c * hw + i] - mean) * inv);
    }
    return out;
}

// effective-number weights via the -expm1 route in long double
inline std::vector<long double> class_weights_highprec(const std::vector<long long>& n, long double delta) {
    std::vector<long double> q(n.size());
    long double qsum = 0.0L;
    for (std::size_t i = 0; i < n.size(); ++i) {
        const long double m = -std::expm1((long double)n[i] * std::log(delta));
        q[i] = (1.0L - delta) / m;
        qsum += q[i];
    }
    std::vector<long double> w(n.size());
    for (std::size_t i = 0; i < n.size(); ++i) w[i] = q[i] / qsum * (long double)n.size();
    return w;
}

// plain masked cross-entropy (unit weights), independent accumulation order
inline double plain_masked_ce(const ssdgl::Tensor<double>& logits, const ssdgl::LabelRaster& labels,
                              const std::vector<std::uint8_t>& mask) {
    const int M = logits.dim(0), Hp = logits.dim(1), Wp = logits.dim(2);
    long double acc = 0.0L;
    long long k = 0;
    for (int i = labels.height - 1; i >= 0; --i)
        for (int j = labels.width - 1; j >= 0; --j) {
            if (!mask[std::size_t(i) * labels.width + j]) continue;
            const int y = labels.at(i, j);
            long double se = 0.0L, best = logits.data()[(long long)0 * Hp * Wp + (long long)i * Wp + j];
            for (int c = 1; c < M; ++c)
                best = std::max(best, (long double)logits.data()[(long long)c * Hp * Wp + (long long)i * Wp + j]);
            for (int c = 0; c < M; ++c)
                se += std::exp((long double)logits.data()[(long long)c * Hp * Wp + (long long)i * Wp + j] - best);
            acc += best + std::log(se) -
                   (long double)logits.data()[(long long)(y - 1) * Hp * Wp + (long long)i * Wp + j];
            ++k;
        }
    return double(acc / (long double)k);
}

template <class S>
ssdgl::Tensor<S> random_tensor(ssdgl::Rng& rng, ssdgl::Shape shape, double lo = -1.0, double hi = 1.0) {
    ssdgl::Tensor<S> t = ssdgl::Tensor<S>::zeros(std::move(shape));
    S* d = t.raw();
    for (long long i = 0; i < t.size(); ++i) d[i] = S(rng.next_uniform(lo, hi));
    return t;
}

template <class S>
bool bytes_equal(const ssdgl::Tensor<S>& a, const ssdgl::Tensor<S>& b) {
    if (a.shape() != b.shape()) return false;
    return std::memcmp(a.data(), b.data(), std::size_t(a.size()) * sizeof(S)) == 0;
}

}  // namespace oracle
