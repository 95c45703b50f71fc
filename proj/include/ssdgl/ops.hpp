#pragma once

#include <algorithm>
#include <limits>
#include <cmath>
#include <cstring>
#include <vector>

#include "ssdgl/tensor.hpp"

namespace ssdgl {

enum class PoolMode { Avg, Max };

namespace detail {

// Broadcast plan for rank<=4 elementwise binaries. Shapes must have equal
// rank; each axis must match or be 1 on one side.
struct Bcast {
    static constexpr int R = 4;
    long long od[R] = {1, 1, 1, 1};
    long long astep[R] = {0, 0, 0, 0};
    long long bstep[R] = {0, 0, 0, 0};
    Shape out_shape;
    long long n = 1;
};

inline Bcast make_bcast(const Shape& a, const Shape& b, const char* who) {
    if (a.size() != b.size())
        throw ShapeError(std::string(who) + ": rank mismatch " + to_string(a) + " vs " + to_string(b));
    if (a.size() > 4) throw ShapeError(std::string(who) + ": rank > 4 unsupported");
    const int r = int(a.size());
    const int off = Bcast::R - r;
    long long ad[Bcast::R] = {1, 1, 1, 1}, bd[Bcast::R] = {1, 1, 1, 1};
    Bcast bc;
    bc.out_shape.resize(std::size_t(r));
    for (int i = 0; i < r; ++i) {
        ad[off + i] = a[std::size_t(i)];
        bd[off + i] = b[std::size_t(i)];
        if (ad[off + i] != bd[off + i] && ad[off + i] != 1 && bd[off + i] != 1)
            throw ShapeError(std::string(who) + ": shapes not broadcast-compatible, " + to_string(a) +
                             " vs " + to_string(b));
        bc.od[off + i] = std::max(ad[off + i], bd[off + i]);
        bc.out_shape[std::size_t(i)] = int(bc.od[off + i]);
    }
    long long as = 1, bs = 1;
    for (int i = Bcast::R - 1; i >= 0; --i) {
        bc.astep[i] = (ad[i] == 1) ? 0 : as;
        bc.bstep[i] = (bd[i] == 1) ? 0 : bs;
        as *= ad[i];
        bs *= bd[i];
        bc.n *= bc.od[i];
    }
    return bc;
}

// f(out_flat_index, a_offset, b_offset), called in row-major output order.
template <class F>
void bcast_walk(const Bcast& bc, F&& f) {
    long long o = 0;
    for (long long i0 = 0; i0 < bc.od[0]; ++i0)
        for (long long i1 = 0; i1 < bc.od[1]; ++i1)
            for (long long i2 = 0; i2 < bc.od[2]; ++i2) {
                long long ao = i0 * bc.astep[0] + i1 * bc.astep[1] + i2 * bc.astep[2];
                long long bo = i0 * bc.bstep[0] + i1 * bc.bstep[1] + i2 * bc.bstep[2];
                for (long long i3 = 0; i3 < bc.od[3]; ++i3) {
                    f(o++, ao, bo);
                    ao += bc.astep[3];
                    bo += bc.bstep[3];
                }
            }
}

// outer (product of dims before axis) and inner (product after) extents
inline void split_at_axis(const Shape& s, int axis, long long& outer, long long& inner) {
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[std::size_t(i)];
    for (int i = axis + 1; i < int(s.size()); ++i) inner *= s[std::size_t(i)];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// pointwise nonlinearities
// ---------------------------------------------------------------------------

template <class Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
    Tensor<Scalar> out = Tensor<Scalar>::zeros(x.shape());
    // clamped to the open interval so saturated gates never reach 0 or 1
    const Scalar hi = Scalar(1) - std::numeric_limits<Scalar>::epsilon() / 2;
    const Scalar lo = std::numeric_limits<Scalar>::min();
    out.array() = (Scalar(1) / (Scalar(1) + (-x.array()).exp())).min(hi).max(lo);
    if (Tape<Scalar>* tp = x.tape()) {
        tp->attach(out);
        const int xn = x.node(), on = out.node();
        auto ob = out.buffer();
        tp->push_step([tp, xn, on, ob] {
            const Scalar* go = tp->grad_read(on);
            if (!go) return;
            auto& gx = tp->grad_accum(xn);
            const Scalar* s = ob->data();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * s[i] * (Scalar(1) - s[i]);
        });
    }
    return out;
}

template <class Scalar>
Tensor<Scalar> tanh_act(const Tensor<Scalar>& x) {
    Tensor<Scalar> out = Tensor<Scalar>::zeros(x.shape());
    out.array() = x.array().tanh();
    if (Tape<Scalar>* tp = x.tape()) {
        tp->attach(out);
        const int xn = x.node(), on = out.node();
        auto ob = out.buffer();
        tp->push_step([tp, xn, on, ob] {
            const Scalar* go = tp->grad_read(on);
            if (!go) return;
            auto& gx = tp->grad_accum(xn);
            const Scalar* t = ob->data();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * (Scalar(1) - t[i] * t[i]);
        });
    }
    return out;
}

template <class Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
    Tensor<Scalar> out = Tensor<Scalar>::zeros(x.shape());
    out.array() = x.array().max(Scalar(0));
    if (Tape<Scalar>* tp = x.tape()) {
        tp->attach(out);
        const int xn = x.node(), on = out.node();
        auto xb = x.buffer();
        tp->push_step([tp, xn, on, xb] {
            const Scalar* go = tp->grad_read(on);
            if (!go) return;
            auto& gx = tp->grad_accum(xn);
            const Scalar* xv = xb->data();
            for (std::size_t i = 0; i < gx.size(); ++i)
                if (xv[i] > Scalar(0)) gx[i] += go[i];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// broadcasting binaries
// ---------------------------------------------------------------------------

template <class Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    const detail::Bcast bc = detail::make_bcast(a.shape(), b.shape(), "add");
    Tensor<Scalar> out = Tensor<Scalar>::zeros(bc.out_shape);
    if (a.shape() == b.shape()) {
        out.array() = a.array() + b.array();
    } else {
        Scalar* o = out.raw();
        const Scalar* av = a.data();
        const Scalar* bv = b.data();
        detail::bcast_walk(bc, [&](long long oi, long long ai, long long bi) { o[oi] = av[ai] + bv[bi]; });
    }
    if (Tape<Scalar>* tp = common_tape<Scalar>({&a, &b})) {
        tp->attach(out);
        const int an = a.node(), bn = b.node(), on = out.node();
        tp->push_step([tp, an, bn, on, bc] {
            const Scalar* go = tp->grad_read(on);
            if (!go) return;
            if (an >= 0) {
                auto& ga = tp->grad_accum(an);
                detail::bcast_walk(bc, [&](long long oi, long long ai, long long) { ga[std::size_t(ai)] += go[oi]; });
            }
            if (bn >= 0) {
                auto& gb = tp->grad_accum(bn);
                detail::bcast_walk(bc, [&](long long oi, long long, long long bi) { gb[std::size_t(bi)] += go[oi]; });
            }
        });
    }
    return out;
}

template <class Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    const detail::Bcast bc = detail::make_bcast(a.shape(), b.shape(), "mul");
    Tensor<Scalar> out = Tensor<Scalar>::zeros(bc.out_shape);
    {
        Scalar* o = out.raw();
        const Scalar* av = a.data();
        const Scalar* bv = b.data();
        if (a.shape() == b.shape())
            out.array() = a.array() * b.array();
        else
            detail::bcast_walk(bc, [&](long long oi, long long ai, long long bi) { o[oi] = av[ai] * bv[bi]; });
    }
    if (Tape<Scalar>* tp = common_tape<Scalar>({&a, &b})) {
        tp->attach(out);
        const int an = a.node(), bn = b.node(), on = out.node();
        auto ab = a.buffer(), bb = b.buffer();
        tp->push_step([tp, an, bn, on, bc, ab, bb] {
            const Scalar* go = tp->grad_read(on);
            if (!go) return;
            const Scalar* av = ab->data();
            const Scalar* bv = bb->data();
            if (an >= 0) {
                auto& ga = tp->grad_accum(an);
                detail::bcast_walk(bc,
                                   [&](long long oi, long long ai, long long bi) { ga[std::size_t(ai)] += go[oi] * bv[bi]; });
            }
            if (bn >= 0) {
                auto& gb = tp->grad_accum(bn);
                detail::bcast_walk(bc,
                                   [&](long long oi, long long ai, long long bi) { gb[std::size_t(bi)] += go[oi] * av[ai]; });
            }
        });
    }
    return out;
}

template <class Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar c) {
    Tensor<Scalar> out = Tensor<Scalar>::zeros(x.shape());
    out.array() = x.array() * c;
    if (Tape<Scalar>* tp = x.tape()) {
        tp->attach(out);
        const int xn = x.node(), on = out.node();
        tp->push_step([tp, xn, on, c] {
            const Scalar* go = tp->grad_read(on);
            if (!go) return;
            auto& gx = tp->grad_accum(xn);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * c;
        });
    }
    return out;
}

template <class Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
    double acc = 0.0;
    const Scalar* xv = x.data();
    for (long long i = 0; i < x.size(); ++i) acc += double(xv[i]);
    Tensor<Scalar> out = Tensor<Scalar>::scalar_value(Scalar(acc));
    if (Tape<Scalar>* tp = x.tape()) {
        tp->attach(out);
        const int xn = x.node(), on = out.node();
        tp->push_step([tp, xn, on] {
            const Scalar* go = tp->grad_read(on);
            if (!go) return;
            auto& gx = tp->grad_accum(xn);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[0];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// structure: concat / slice
// ---------------------------------------------------------------------------

template <class Scalar>
Tensor<Scalar> concat(const std::vector<Tensor<Scalar>>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no operands");
    const int r = parts[0].rank();
    if (axis < 0 || axis >= r) throw ShapeError("concat: axis out of range");
    Shape out_shape = parts[0].shape();
    long long axis_total = 0;
    for (const auto& p : parts) {
        if (p.rank() != r) throw ShapeError("concat: rank mismatch");
        for (int i = 0; i < r; ++i)
            if (i != axis && p.dim(i) != out_shape[std::size_t(i)])
                throw ShapeError("concat: shape mismatch " + to_string(p.shape()) + " vs " +
                                 to_string(parts[0].shape()));
        axis_total += p.dim(axis);
    }
    out_shape[std::size_t(axis)] = int(axis_total);
    Tensor<Scalar> out = Tensor<Scalar>::zeros(out_shape);

    long long outer, inner;
    detail::split_at_axis(out_shape, axis, outer, inner);
    const long long out_row = axis_total * inner;
    long long axis_off = 0;
    for (const auto& p : parts) {
        const long long len = (long long)p.dim(axis) * inner;
        const Scalar* src = p.data();
        Scalar* dst = out.raw() + axis_off * inner;
        for (long long o = 0; o < outer; ++o)
            std::memcpy(dst + o * out_row, src + o * len, std::size_t(len) * sizeof(Scalar));
        axis_off += p.dim(axis);
    }

    Tape<Scalar>* tp = nullptr;
    for (const auto& p : parts) {
        if (!p.tape()) continue;
        if (tp && tp != p.tape()) throw ShapeError("concat: operands on different tapes");
        tp = p.tape();
    }
    if (tp) {
        tp->attach(out);
        const int on = out.node();
        struct Piece {
            int node;
            long long len;
            long long axis_off;
        };
        std::vector<Piece> pieces;
        for (const auto& p : parts) pieces.push_back({p.node(), (long long)p.dim(axis) * inner, 0});
        long long run = 0;
        for (std::size_t i = 0; i < pieces.size(); ++i) {
            pieces[i].axis_off = run;
            run += pieces[i].len;
        }
        tp->push_step([tp, on, pieces, outer, out_row] {
            const Scalar* go = tp->grad_read(on);
            if (!go) return;
            for (const Piece& pc : pieces) {
                if (pc.node < 0) continue;
                auto& gp = tp->grad_accum(pc.node);
                for (long long o = 0; o < outer; ++o) {
                    const Scalar* g = go + o * out_row + pc.axis_off;
                    Scalar* dst = gp.data() + o * pc.len;
                    for (long long i = 0; i < pc.len; ++i) dst[i] += g[i];
                }
            }
        });
    }
    return out;
}

template <class Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& x, int axis, int begin, int end) {
    if (axis < 0 || axis >= x.rank()) throw ShapeError("slice: axis out of range");
    if (begin < 0 || end > x.dim(axis) || begin >= end)
        throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for axis of size " + std::to_string(x.dim(axis)));
    Shape out_shape = x.shape();
    out_shape[std::size_t(axis)] = end - begin;
    Tensor<Scalar> out = Tensor<Scalar>::zeros(out_shape);

    long long outer, inner;
    detail::split_at_axis(x.shape(), axis, outer, inner);
    const long long in_row = (long long)x.dim(axis) * inner;
    const long long out_len = (long long)(end - begin) * inner;
    const Scalar* src = x.data() + (long long)begin * inner;
    for (long long o = 0; o < outer; ++o)
        std::memcpy(out.raw() + o * out_len, src + o * in_row, std::size_t(out_len) * sizeof(Scalar));

    if (Tape<Scalar>* tp = x.tape()) {
        tp->attach(out);
        const int xn = x.node(), on = out.node();
        const long long begin_off = (long long)begin * inner;
        tp->push_step([tp, xn, on, outer, in_row, out_len, begin_off] {
            const Scalar* go = tp->grad_read(on);
            if (!go) return;
            auto& gx = tp->grad_accum(xn);
            for (long long o = 0; o < outer; ++o) {
                Scalar* dst = gx.data() + o * in_row + begin_off;
                const Scalar* g = go + o * out_len;
                for (long long i = 0; i < out_len; ++i) dst[i] += g[i];
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// convolution (cross-correlation) and affine map
// ---------------------------------------------------------------------------

namespace detail {

// col is [C*k*k, Ho*Wo] row-major.
template <class Scalar>
void im2col(const Scalar* x, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
            Scalar* col) {
    const long long P = (long long)Ho * Wo;
    for (int c = 0; c < C; ++c) {
        const Scalar* plane = x + (long long)c * H * W;
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                Scalar* row = col + ((long long)(c * k + ky) * k + kx) * P;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    Scalar* dst = row + (long long)oy * Wo;
                    if (iy < 0 || iy >= H) {
                        std::fill(dst, dst + Wo, Scalar(0));
                        continue;
                    }
                    const Scalar* srow = plane + (long long)iy * W;
                    if (stride == 1) {
                        // contiguous run: ix = ox + kx - pad
                        const int ox_lo = std::max(0, pad - kx);
                        const int ox_hi = std::min(Wo, W - kx + pad);  // exclusive
                        if (ox_lo > 0) std::fill(dst, dst + ox_lo, Scalar(0));
                        if (ox_hi > ox_lo)
                            std::memcpy(dst + ox_lo, srow + ox_lo + kx - pad,
                                        std::size_t(ox_hi - ox_lo) * sizeof(Scalar));
                        if (ox_hi < Wo) std::fill(dst + std::max(ox_hi, ox_lo), dst + Wo, Scalar(0));
                    } else {
                        for (int ox = 0; ox < Wo; ++ox) {
                            const int ix = ox * stride + kx - pad;
                            dst[ox] = (ix >= 0 && ix < W) ? srow[ix] : Scalar(0);
                        }
                    }
                }
            }
    }
}

// scatter-add of a [C*k*k, Ho*Wo] gradient back onto the input layout
template <class Scalar>
void col2im_add(const Scalar* col, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
                Scalar* gx) {
    const long long P = (long long)Ho * Wo;
    for (int c = 0; c < C; ++c) {
        Scalar* plane = gx + (long long)c * H * W;
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const Scalar* row = col + ((long long)(c * k + ky) * k + kx) * P;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    Scalar* drow = plane + (long long)iy * W;
                    const Scalar* g = row + (long long)oy * Wo;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < W) drow[ix] += g[ox];
                    }
                }
            }
    }
}

template <class Scalar>
using MatRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace detail

/// 2-D cross-correlation of a [C_in,H,W] input with a [C_out,C_in,k,k]
/// kernel; optional bias of length C_out (pass an undefined tensor to skip).
template <class Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b,
                      int stride, int pad) {
    if (x.rank() != 3) throw ShapeError("conv2d: input must be [C,H,W], got " + to_string(x.shape()));
    if (w.rank() != 4 || w.dim(2) != w.dim(3))
        throw ShapeError("conv2d: kernel must be [C_out,C_in,k,k], got " + to_string(w.shape()));
    if (w.dim(1) != x.dim(0))
        throw ShapeError("conv2d: input has " + std::to_string(x.dim(0)) + " channels but kernel expects " +
                         std::to_string(w.dim(1)) + " (input " + to_string(x.shape()) + ", kernel " +
                         to_string(w.shape()) + ")");
    if (stride < 1 || pad < 0) throw ShapeError("conv2d: stride must be >=1 and padding >=0");
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int Cout = w.dim(0), k = w.dim(2);
    if (k > H + 2 * pad || k > W + 2 * pad)
        throw ShapeError("conv2d: kernel " + std::to_string(k) + " exceeds padded extent of " +
                         to_string(x.shape()));
    if (b.defined() && (b.rank() != 1 || b.dim(0) != Cout))
        throw ShapeError("conv2d: bias must be [C_out]=" + std::to_string(Cout) + ", got " +
                         to_string(b.shape()));
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W + 2 * pad - k) / stride + 1;
    const long long K = (long long)C * k * k, P = (long long)Ho * Wo;

    AlignedVec<Scalar> col(std::size_t(K * P));
    detail::im2col(x.data(), C, H, W, k, stride, pad, Ho, Wo, col.data());

    Tensor<Scalar> out = Tensor<Scalar>::zeros({Cout, Ho, Wo});
    {
        Eigen::Map<const detail::MatRM<Scalar>> Wm(w.data(), Cout, K);
        Eigen::Map<const detail::MatRM<Scalar>> Cm(col.data(), K, P);
        Eigen::Map<detail::MatRM<Scalar>> Ym(out.raw(), Cout, P);
        Ym.noalias() = Wm * Cm;
        if (b.defined()) {
            Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> bv(b.data(), Cout);
            Ym.colwise() += bv;
        }
    }

    if (Tape<Scalar>* tp = common_tape<Scalar>({&x, &w, &b})) {
        tp->attach(out);
        const int xn = x.node(), wn = w.node(), bn = b.defined() ? b.node() : -1, on = out.node();
        auto xb = x.buffer(), wb = w.buffer();
        tp->push_step([tp, xn, wn, bn, on, xb, wb, C, H, W, Cout, k, stride, pad, Ho, Wo, K, P] {
            const Scalar* go = tp->grad_read(on);
            if (!go) return;
            Eigen::Map<const detail::MatRM<Scalar>> Gy(go, Cout, P);
            if (bn >= 0) {
                auto& gb = tp->grad_accum(bn);
                Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> gbv(gb.data(), Cout);
                gbv.noalias() += Gy.rowwise().sum();
            }
            if (wn >= 0) {
                AlignedVec<Scalar> col(std::size_t(K * P));
                detail::im2col(xb->data(), C, H, W, k, stride, pad, Ho, Wo, col.data());
                Eigen::Map<const detail::MatRM<Scalar>> Cm(col.data(), K, P);
                auto& gw = tp->grad_accum(wn);
                Eigen::Map<detail::MatRM<Scalar>> Gw(gw.data(), Cout, K);
                Gw.noalias() += Gy * Cm.transpose();
            }
            if (xn >= 0) {
                AlignedVec<Scalar> gcol(std::size_t(K * P));
                Eigen::Map<const detail::MatRM<Scalar>> Wm(wb->data(), Cout, K);
                Eigen::Map<detail::MatRM<Scalar>> Gc(gcol.data(), K, P);
                Gc.noalias() = Wm.transpose() * Gy;
                auto& gx = tp->grad_accum(xn);
                detail::col2im_add(gcol.data(), C, H, W, k, stride, pad, Ho, Wo, gx.data());
            }
        });
    }
    return out;
}

template <class Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& w, int stride, int pad) {
    return conv2d(x, w, Tensor<Scalar>(), stride, pad);
}

/// y = W x + b for a rank-1 input; bias optional.
template <class Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b) {
    if (x.rank() != 1 || w.rank() != 2)
        throw ShapeError("linear: expected x=[D_in], w=[D_out,D_in], got " + to_string(x.shape()) +
                         ", " + to_string(w.shape()));
    if (w.dim(1) != x.dim(0))
        throw ShapeError("linear: inner dimensions disagree, " + to_string(w.shape()) + " vs " +
                         to_string(x.shape()));
    const int Dout = w.dim(0), Din = w.dim(1);
    if (b.defined() && (b.rank() != 1 || b.dim(0) != Dout))
        throw ShapeError("linear: bias must be [D_out]=" + std::to_string(Dout));
    Tensor<Scalar> out = Tensor<Scalar>::zeros({Dout});
    {
        Eigen::Map<const detail::MatRM<Scalar>> Wm(w.data(), Dout, Din);
        Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> xv(x.data(), Din);
        Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> yv(out.raw(), Dout);
        yv.noalias() = Wm * xv;
        if (b.defined()) {
            Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> bv(b.data(), Dout);
            yv += bv;
        }
    }
    if (Tape<Scalar>* tp = common_tape<Scalar>({&x, &w, &b})) {
        tp->attach(out);
        const int xn = x.node(), wn = w.node(), bn = b.defined() ? b.node() : -1, on = out.node();
        auto xb = x.buffer(), wb = w.buffer();
        tp->push_step([tp, xn, wn, bn, on, xb, wb, Dout, Din] {
            const Scalar* go = tp->grad_read(on);
            if (!go) return;
            Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> gy(go, Dout);
            if (bn >= 0) {
                auto& gb = tp->grad_accum(bn);
                Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(gb.data(), Dout) += gy;
            }
            if (wn >= 0) {
                auto& gw = tp->grad_accum(wn);
                Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> xv(xb->data(), Din);
                Eigen::Map<detail::MatRM<Scalar>> Gw(gw.data(), Dout, Din);
                Gw.noalias() += gy * xv.transpose();
            }
            if (xn >= 0) {
                auto& gx = tp->grad_accum(xn);
                Eigen::Map<const detail::MatRM<Scalar>> Wm(wb->data(), Dout, Din);
                Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(gx.data(), Din).noalias() +=
                    Wm.transpose() * gy;
            }
        });
    }
    return out;
}

template <class Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& w) {
    return linear(x, w, Tensor<Scalar>());
}

// ---------------------------------------------------------------------------
// pooling
// ---------------------------------------------------------------------------

/// Per-channel reduction over every spatial position: [C,H,W] -> [C].
template <class Scalar>
Tensor<Scalar> pool_global(const Tensor<Scalar>& x, PoolMode mode) {
    if (x.rank() != 3) throw ShapeError("pool_global: input must be [C,H,W]");
    const int C = x.dim(0);
    const long long hw = (long long)x.dim(1) * x.dim(2);
    if (hw < 1) throw ShapeError("pool_global: empty spatial extent");
    Tensor<Scalar> out = Tensor<Scalar>::zeros({C});
    std::vector<long long> argmax(mode == PoolMode::Max ? std::size_t(C) : 0);
    const Scalar* xv = x.data();
    for (int c = 0; c < C; ++c) {
        const Scalar* plane = xv + c * hw;
        if (mode == PoolMode::Avg) {
            double acc = 0.0;
            for (long long i = 0; i < hw; ++i) acc += double(plane[i]);
            out.raw()[c] = Scalar(acc / double(hw));
        } else {
            long long arg = 0;
            Scalar best = plane[0];
            for (long long i = 1; i < hw; ++i)
                if (plane[i] > best) {
                    best = plane[i];
                    arg = i;
                }
            out.raw()[c] = best;
            argmax[std::size_t(c)] = arg;
        }
    }
    if (Tape<Scalar>* tp = x.tape()) {
        tp->attach(out);
        const int xn = x.node(), on = out.node();
        tp->push_step([tp, xn, on, C, hw, mode, argmax] {
            const Scalar* go = tp->grad_read(on);
            if (!go) return;
            auto& gx = tp->grad_accum(xn);
            if (mode == PoolMode::Avg) {
                const Scalar inv = Scalar(1) / Scalar(hw);
                for (int c = 0; c < C; ++c) {
                    Scalar* plane = gx.data() + c * hw;
                    const Scalar g = go[c] * inv;
                    for (long long i = 0; i < hw; ++i) plane[i] += g;
                }
            } else {
                for (int c = 0; c < C; ++c) gx[std::size_t(c * hw + argmax[std::size_t(c)])] += go[c];
            }
        });
    }
    return out;
}

/// Per-position reduction across channels: [C,H,W] -> [1,H,W].
template <class Scalar>
Tensor<Scalar> pool_channel(const Tensor<Scalar>& x, PoolMode mode) {
    if (x.rank() != 3) throw ShapeError("pool_channel: input must be [C,H,W]");
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (C < 1) throw ShapeError("pool_channel: no channels");
    const long long hw = (long long)H * W;
    Tensor<Scalar> out = Tensor<Scalar>::zeros({1, H, W});
    std::vector<int> argmax(mode == PoolMode::Max ? std::size_t(hw) : 0);
    const Scalar* xv = x.data();
    Scalar* ov = out.raw();
    for (long long p = 0; p < hw; ++p) {
        if (mode == PoolMode::Avg) {
            double acc = 0.0;
            for (int c = 0; c < C; ++c) acc += double(xv[c * hw + p]);
            ov[p] = Scalar(acc / double(C));
        } else {
            int arg = 0;
            Scalar best = xv[p];
            for (int c = 1; c < C; ++c)
                if (xv[c * hw + p] > best) {
                    best = xv[c * hw + p];
                    arg = c;
                }
            ov[p] = best;
            argmax[std::size_t(p)] = arg;
        }
    }
    if (Tape<Scalar>* tp = x.tape()) {
        tp->attach(out);
        const int xn = x.node(), on = out.node();
        tp->push_step([tp, xn, on, C, hw, mode, argmax] {
            const Scalar* go = tp->grad_read(on);
            if (!go) return;
            auto& gx = tp->grad_accum(xn);
            if (mode == PoolMode::Avg) {
                const Scalar inv = Scalar(1) / Scalar(C);
                for (long long p = 0; p < hw; ++p) {
                    const Scalar g = go[p] * inv;
                    for (int c = 0; c < C; ++c) gx[std::size_t(c * hw + p)] += g;
                }
            } else {
                for (long long p = 0; p < hw; ++p) gx[std::size_t(argmax[std::size_t(p)] * hw + p)] += go[p];
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// group normalization
// ---------------------------------------------------------------------------

/// Zero-mean/unit-variance per channel group (statistics over the group's
/// channels and all spatial positions), then per-channel affine.
template <class Scalar>
Tensor<Scalar> group_norm(const Tensor<Scalar>& x, int groups, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta_shift, Scalar eps) {
    if (x.rank() != 3) throw ShapeError("group_norm: input must be [C,H,W]");
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (groups < 1 || C % groups != 0)
        throw ConfigError("group_norm: " + std::to_string(C) + " channels not divisible by " +
                          std::to_string(groups) + " groups");
    if (gamma.rank() != 1 || gamma.dim(0) != C || beta_shift.rank() != 1 || beta_shift.dim(0) != C)
        throw ShapeError("group_norm: affine parameters must be [C]");
    const int Cg = C / groups;
    const long long hw = (long long)H * W;
    const long long gn = (long long)Cg * hw;

    std::vector<double> mu(static_cast<std::size_t>(groups)), inv(static_cast<std::size_t>(groups));
    const Scalar* xv = x.data();
    for (int g = 0; g < groups; ++g) {
        const Scalar* base = xv + (long long)g * gn;
        double s = 0.0;
        for (long long i = 0; i < gn; ++i) s += double(base[i]);
        const double m = s / double(gn);
        double v = 0.0;
        for (long long i = 0; i < gn; ++i) {
            const double d = double(base[i]) - m;
            v += d * d;
        }
        mu[std::size_t(g)] = m;
        inv[std::size_t(g)] = 1.0 / std::sqrt(v / double(gn) + double(eps));
    }

    Tensor<Scalar> out = Tensor<Scalar>::zeros(x.shape());
    Scalar* ov = out.raw();
    const Scalar* gv = gamma.data();
    const Scalar* bv = beta_shift.data();
    for (int c = 0; c < C; ++c) {
        const int g = c / Cg;
        const Scalar* src = xv + (long long)c * hw;
        Scalar* dst = ov + (long long)c * hw;
        const double m = mu[std::size_t(g)], iv = inv[std::size_t(g)];
        const double ga = double(gv[c]), be = double(bv[c]);
        for (long long i = 0; i < hw; ++i) dst[i] = Scalar(ga * ((double(src[i]) - m) * iv) + be);
    }

    if (Tape<Scalar>* tp = common_tape<Scalar>({&x, &gamma, &beta_shift})) {
        tp->attach(out);
        const int xn = x.node(), gn_node = gamma.node(), bn = beta_shift.node(), on = out.node();
        auto xb = x.buffer(), gb = gamma.buffer();
        tp->push_step([tp, xn, gn_node, bn, on, xb, gb, C, Cg, hw, gn, groups, mu, inv] {
            const Scalar* go = tp->grad_read(on);
            if (!go) return;
            const Scalar* xv = xb->data();
            const Scalar* gv = gb->data();
            for (int g = 0; g < groups; ++g) {
                const long long base = (long long)g * gn;
                const double m = mu[std::size_t(g)], iv = inv[std::size_t(g)];
                if (xn >= 0) {
                    // dx = inv * (h - mean(h) - y*mean(h*y)), h = go*gamma
                    double sh = 0.0, shy = 0.0;
                    for (int cc = 0; cc < Cg; ++cc) {
                        const int c = g * Cg + cc;
                        const long long off = base + (long long)cc * hw;
                        const double ga = double(gv[c]);
                        for (long long i = 0; i < hw; ++i) {
                            const double h = double(go[off + i]) * ga;
                            const double y = (double(xv[off + i]) - m) * iv;
                            sh += h;
                            shy += h * y;
                        }
                    }
                    const double mh = sh / double(gn), mhy = shy / double(gn);
                    auto& gx = tp->grad_accum(xn);
                    for (int cc = 0; cc < Cg; ++cc) {
                        const int c = g * Cg + cc;
                        const long long off = base + (long long)cc * hw;
                        const double ga = double(gv[c]);
                        for (long long i = 0; i < hw; ++i) {
                            const double h = double(go[off + i]) * ga;
                            const double y = (double(xv[off + i]) - m) * iv;
                            gx[std::size_t(off + i)] += Scalar(iv * (h - mh - y * mhy));
                        }
                    }
                }
                if (gn_node >= 0 || bn >= 0) {
                    for (int cc = 0; cc < Cg; ++cc) {
                        const int c = g * Cg + cc;
                        const long long off = base + (long long)cc * hw;
                        double dg = 0.0, db = 0.0;
                        for (long long i = 0; i < hw; ++i) {
                            const double y = (double(xv[off + i]) - m) * iv;
                            dg += double(go[off + i]) * y;
                            db += double(go[off + i]);
                        }
                        if (gn_node >= 0) tp->grad_accum(gn_node)[std::size_t(c)] += Scalar(dg);
                        if (bn >= 0) tp->grad_accum(bn)[std::size_t(c)] += Scalar(db);
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// spatial resampling
// ---------------------------------------------------------------------------

/// Nearest-neighbor 2x upsampling: [C,H,W] -> [C,2H,2W].
template <class Scalar>
Tensor<Scalar> upsample_nearest2(const Tensor<Scalar>& x) {
    if (x.rank() != 3) throw ShapeError("upsample_nearest2: input must be [C,H,W]");
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    Tensor<Scalar> out = Tensor<Scalar>::zeros({C, 2 * H, 2 * W});
    const Scalar* xv = x.data();
    Scalar* ov = out.raw();
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < H; ++i) {
            const Scalar* src = xv + ((long long)c * H + i) * W;
            Scalar* d0 = ov + ((long long)c * 2 * H + 2 * i) * 2 * W;
            Scalar* d1 = d0 + 2 * W;
            for (int j = 0; j < W; ++j) {
                d0[2 * j] = d0[2 * j + 1] = src[j];
                d1[2 * j] = d1[2 * j + 1] = src[j];
            }
        }
    if (Tape<Scalar>* tp = x.tape()) {
        tp->attach(out);
        const int xn = x.node(), on = out.node();
        tp->push_step([tp, xn, on, C, H, W] {
            const Scalar* go = tp->grad_read(on);
            if (!go) return;
            auto& gx = tp->grad_accum(xn);
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < H; ++i) {
                    Scalar* dst = gx.data() + ((long long)c * H + i) * W;
                    const Scalar* g0 = go + ((long long)c * 2 * H + 2 * i) * 2 * W;
                    const Scalar* g1 = g0 + 2 * W;
                    for (int j = 0; j < W; ++j)
                        dst[j] += g0[2 * j] + g0[2 * j + 1] + g1[2 * j] + g1[2 * j + 1];
                }
        });
    }
    return out;
}

}  // namespace ssdgl
