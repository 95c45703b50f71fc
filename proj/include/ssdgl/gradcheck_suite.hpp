#pragma once

#include <string>
#include <vector>

#include "ssdgl/gradcheck.hpp"
#include "ssdgl/network.hpp"
#include "ssdgl/rng.hpp"
#include "ssdgl/sampler.hpp"
#include "ssdgl/trainer.hpp"

namespace ssdgl {

struct GradCheckCase {
    std::string name;
    double max_rel_err = 0.0;
    int trials = 0;
};

namespace detail {

inline Tensor<double> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t = Tensor<double>::zeros(std::move(shape));
    double* d = t.raw();
    for (long long i = 0; i < t.size(); ++i) d[i] = rng.next_uniform(lo, hi);
    return t;
}

// keeps every coordinate away from the relu kink / pooling ties
inline Tensor<double> random_tensor_separated(Rng& rng, Shape shape) {
    Tensor<double> t = random_tensor(rng, std::move(shape));
    double* d = t.raw();
    for (long long i = 0; i < t.size(); ++i) {
        const double s = d[i] >= 0.0 ? 1.0 : -1.0;
        d[i] = s * (0.05 + std::fabs(d[i])) + double(i % 97) * 1e-3;
    }
    return t;
}

// scalar-valued wrapper: sum(out .* R) with a fixed random mixer R
inline Tensor<double> mixdown(const Tensor<double>& out, const Tensor<double>& mixer) {
    return sum(mul(out, mixer));
}

}  // namespace detail

/// Finite-difference checks for every differentiable operation plus the
/// full network loss on a small synthetic scene; each elementary op gets
/// `trials` randomized instances.
inline std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed, double step,
                                                      int trials = 20) {
    using detail::mixdown;
    using detail::random_tensor;
    using detail::random_tensor_separated;

    std::vector<GradCheckCase> results;
    Rng rng(seed);

    auto run_case = [&](const std::string& name, int n, auto&& one_trial) {
        GradCheckCase c{name, 0.0, n};
        for (int t = 0; t < n; ++t) c.max_rel_err = std::max(c.max_rel_err, one_trial(rng));
        results.push_back(c);
    };

    run_case("sigmoid", trials, [&](Rng& r) {
        Tensor<double> x = random_tensor(r, {3, 4, 5});
        Tensor<double> m = random_tensor(r, {3, 4, 5});
        return grad_check([&](const Tensor<double>& p) { return mixdown(sigmoid(p), m); }, x, step);
    });
    run_case("tanh", trials, [&](Rng& r) {
        Tensor<double> x = random_tensor(r, {2, 3, 4});
        Tensor<double> m = random_tensor(r, {2, 3, 4});
        return grad_check([&](const Tensor<double>& p) { return mixdown(tanh_act(p), m); }, x, step);
    });
    run_case("relu", trials, [&](Rng& r) {
        Tensor<double> x = random_tensor_separated(r, {2, 3, 4});
        Tensor<double> m = random_tensor(r, {2, 3, 4});
        return grad_check([&](const Tensor<double>& p) { return mixdown(relu(p), m); }, x, step);
    });
    run_case("add.broadcast", trials, [&](Rng& r) {
        Tensor<double> x = random_tensor(r, {3, 4, 5});
        Tensor<double> y = random_tensor(r, {3, 1, 1});
        Tensor<double> m = random_tensor(r, {3, 4, 5});
        const double ex = grad_check(
            [&](const Tensor<double>& p) { return mixdown(add(p, y), m); }, x, step);
        const double ey = grad_check(
            [&](const Tensor<double>& p) { return mixdown(add(x, p), m); }, y, step);
        return std::max(ex, ey);
    });
    run_case("mul.broadcast", trials, [&](Rng& r) {
        Tensor<double> x = random_tensor(r, {3, 4, 5});
        Tensor<double> y = random_tensor(r, {1, 4, 5});
        Tensor<double> m = random_tensor(r, {3, 4, 5});
        const double ex = grad_check(
            [&](const Tensor<double>& p) { return mixdown(mul(p, y), m); }, x, step);
        const double ey = grad_check(
            [&](const Tensor<double>& p) { return mixdown(mul(x, p), m); }, y, step);
        return std::max(ex, ey);
    });
    run_case("scale+sum", trials, [&](Rng& r) {
        Tensor<double> x = random_tensor(r, {4, 3});
        return grad_check([&](const Tensor<double>& p) { return sum(scale(p, 0.37)); }, x, step);
    });
    run_case("concat", trials, [&](Rng& r) {
        Tensor<double> a = random_tensor(r, {2, 3, 3});
        Tensor<double> b = random_tensor(r, {1, 3, 3});
        Tensor<double> m = random_tensor(r, {3, 3, 3});
        const double ea = grad_check(
            [&](const Tensor<double>& p) { return mixdown(concat<double>({p, b}, 0), m); }, a, step);
        const double eb = grad_check(
            [&](const Tensor<double>& p) { return mixdown(concat<double>({a, p}, 0), m); }, b, step);
        return std::max(ea, eb);
    });
    run_case("slice", trials, [&](Rng& r) {
        Tensor<double> x = random_tensor(r, {4, 3, 3});
        Tensor<double> m = random_tensor(r, {2, 3, 3});
        return grad_check([&](const Tensor<double>& p) { return mixdown(slice(p, 0, 1, 3), m); }, x, step);
    });
    run_case("conv2d", trials, [&](Rng& r) {
        const int cin = 1 + int(r.next_below(3)), cout = 1 + int(r.next_below(3));
        const int h = 4 + int(r.next_below(3)), w = 4 + int(r.next_below(3));
        const int k = r.next_below(2) ? 3 : 1;
        const int stride = 1 + int(r.next_below(2)), pad = int(r.next_below(2));
        Tensor<double> x = random_tensor(r, {cin, h, w});
        Tensor<double> kw = random_tensor(r, {cout, cin, k, k});
        Tensor<double> kb = random_tensor(r, {cout});
        const int ho = (h + 2 * pad - k) / stride + 1, wo = (w + 2 * pad - k) / stride + 1;
        Tensor<double> m = random_tensor(r, {cout, ho, wo});
        auto lx = grad_check(
            [&](const Tensor<double>& p) { return mixdown(conv2d(p, kw, kb, stride, pad), m); }, x, step);
        auto lw = grad_check(
            [&](const Tensor<double>& p) { return mixdown(conv2d(x, p, kb, stride, pad), m); }, kw, step);
        auto lb = grad_check(
            [&](const Tensor<double>& p) { return mixdown(conv2d(x, kw, p, stride, pad), m); }, kb, step);
        return std::max({lx, lw, lb});
    });
    run_case("linear", trials, [&](Rng& r) {
        Tensor<double> x = random_tensor(r, {5});
        Tensor<double> w = random_tensor(r, {3, 5});
        Tensor<double> b = random_tensor(r, {3});
        Tensor<double> m = random_tensor(r, {3});
        auto lx = grad_check([&](const Tensor<double>& p) { return mixdown(linear(p, w, b), m); }, x, step);
        auto lw = grad_check([&](const Tensor<double>& p) { return mixdown(linear(x, p, b), m); }, w, step);
        auto lb = grad_check([&](const Tensor<double>& p) { return mixdown(linear(x, w, p), m); }, b, step);
        return std::max({lx, lw, lb});
    });
    run_case("pool_global.avg", trials, [&](Rng& r) {
        Tensor<double> x = random_tensor(r, {3, 4, 4});
        Tensor<double> m = random_tensor(r, {3});
        return grad_check(
            [&](const Tensor<double>& p) { return mixdown(pool_global(p, PoolMode::Avg), m); }, x, step);
    });
    run_case("pool_global.max", trials, [&](Rng& r) {
        Tensor<double> x = random_tensor_separated(r, {3, 4, 4});
        Tensor<double> m = random_tensor(r, {3});
        return grad_check(
            [&](const Tensor<double>& p) { return mixdown(pool_global(p, PoolMode::Max), m); }, x, step);
    });
    run_case("pool_channel.avg", trials, [&](Rng& r) {
        Tensor<double> x = random_tensor(r, {4, 3, 3});
        Tensor<double> m = random_tensor(r, {1, 3, 3});
        return grad_check(
            [&](const Tensor<double>& p) { return mixdown(pool_channel(p, PoolMode::Avg), m); }, x, step);
    });
    run_case("pool_channel.max", trials, [&](Rng& r) {
        Tensor<double> x = random_tensor_separated(r, {4, 3, 3});
        Tensor<double> m = random_tensor(r, {1, 3, 3});
        return grad_check(
            [&](const Tensor<double>& p) { return mixdown(pool_channel(p, PoolMode::Max), m); }, x, step);
    });
    run_case("group_norm", trials, [&](Rng& r) {
        Tensor<double> x = random_tensor(r, {4, 3, 3});
        Tensor<double> g = random_tensor(r, {4}, 0.5, 1.5);
        Tensor<double> b = random_tensor(r, {4});
        Tensor<double> m = random_tensor(r, {4, 3, 3});
        auto fx = grad_check(
            [&](const Tensor<double>& p) { return mixdown(group_norm(p, 2, g, b, 1e-5), m); }, x, step);
        auto fg = grad_check(
            [&](const Tensor<double>& p) { return mixdown(group_norm(x, 2, p, b, 1e-5), m); }, g, step);
        auto fb = grad_check(
            [&](const Tensor<double>& p) { return mixdown(group_norm(x, 2, g, p, 1e-5), m); }, b, step);
        return std::max({fx, fg, fb});
    });
    run_case("upsample_nearest2", trials, [&](Rng& r) {
        Tensor<double> x = random_tensor(r, {2, 3, 3});
        Tensor<double> m = random_tensor(r, {2, 6, 6});
        return grad_check(
            [&](const Tensor<double>& p) { return mixdown(upsample_nearest2(p), m); }, x, step);
    });
    run_case("composite.conv-sigmoid-sum", trials, [&](Rng& r) {
        Tensor<double> x = random_tensor(r, {2, 5, 5});
        Tensor<double> kw = random_tensor(r, {3, 2, 3, 3});
        Tensor<double> kb = random_tensor(r, {3});
        auto f = [&](const Tensor<double>& p) { return sum(sigmoid(conv2d(p, kw, kb, 1, 1))); };
        auto fw = [&](const Tensor<double>& p) { return sum(sigmoid(conv2d(x, p, kb, 1, 1))); };
        return std::max(grad_check(f, x, step), grad_check(fw, kw, step));
    });
    run_case("convlstm_cell", std::max(1, trials / 4), [&](Rng& r) {
        const int hid = 2, cin = 3, k = 3;
        Tensor<double> x = random_tensor(r, {cin, 4, 4});
        CellState<double> st{random_tensor(r, {hid, 4, 4}), random_tensor(r, {hid, 4, 4})};
        Tensor<double> w = random_tensor(r, {4 * hid, cin + hid, k, k});
        Tensor<double> b = random_tensor(r, {4 * hid});
        Tensor<double> m = random_tensor(r, {hid, 4, 4});
        auto through = [&](const Tensor<double>& p, int which) {
            CellState<double> next = convlstm_cell(which == 0 ? p : x, st, which == 1 ? p : w,
                                                   which == 2 ? p : b, hid);
            return mixdown(next.h, m);
        };
        auto ex = grad_check([&](const Tensor<double>& p) { return through(p, 0); }, x, step);
        auto ew = grad_check([&](const Tensor<double>& p) { return through(p, 1); }, w, step);
        auto eb = grad_check([&](const Tensor<double>& p) { return through(p, 2); }, b, step);
        return std::max({ex, ew, eb});
    });
    run_case("spectral_attention", std::max(1, trials / 4), [&](Rng& r) {
        const int c = 4;
        Tensor<double> f = random_tensor_separated(r, {c, 3, 3});
        Tensor<double> w0 = random_tensor(r, {2, c});
        Tensor<double> w1 = random_tensor(r, {c, 2});
        Tensor<double> m = random_tensor(r, {c, 3, 3});
        auto ef = grad_check(
            [&](const Tensor<double>& p) { return mixdown(spectral_attention(p, w0, w1), m); }, f, step);
        auto e0 = grad_check(
            [&](const Tensor<double>& p) { return mixdown(spectral_attention(f, p, w1), m); }, w0, step);
        auto e1 = grad_check(
            [&](const Tensor<double>& p) { return mixdown(spectral_attention(f, w0, p), m); }, w1, step);
        return std::max({ef, e0, e1});
    });
    run_case("spatial_attention", std::max(1, trials / 4), [&](Rng& r) {
        Tensor<double> f = random_tensor_separated(r, {3, 4, 4});
        Tensor<double> w = random_tensor(r, {1, 2, 3, 3});
        Tensor<double> b = random_tensor(r, {1});
        Tensor<double> m = random_tensor(r, {3, 4, 4});
        auto ef = grad_check(
            [&](const Tensor<double>& p) { return mixdown(spatial_attention(p, w, b), m); }, f, step);
        auto ew = grad_check(
            [&](const Tensor<double>& p) { return mixdown(spatial_attention(f, p, b), m); }, w, step);
        return std::max(ef, ew);
    });
    run_case("weighted_masked_loss.logits", trials, [&](Rng& r) {
        const int m = 3, h = 4, w = 4;
        LabelRaster labels;
        labels.height = h;
        labels.width = w;
        labels.labels.resize(std::size_t(h * w));
        std::vector<std::uint8_t> mask(std::size_t(h * w), 0);
        for (int i = 0; i < h * w; ++i) {
            labels.labels[std::size_t(i)] = std::uint16_t(1 + r.next_below(m));
            mask[std::size_t(i)] = r.next_below(2) ? 1 : 0;
        }
        mask[0] = 1;  // never empty
        std::vector<long long> counts{60, 25, 5};
        const ClassWeights cw = class_weights(counts, 0.97);
        Tensor<double> logits = random_tensor(r, {m, h, w});
        return grad_check(
            [&](const Tensor<double>& p) { return weighted_masked_loss(p, labels, mask, cw); }, logits,
            step);
    });

    // full network loss on a small synthetic scene, sampled parameter coords
    {
        auto [cube, labels] = synth_cube(seed + 17, 16, 16, 8, 3, {0.4, 0.35, 0.2});
        const HsiCube norm = normalize(cube);
        const Tensor<double> input = to_tensor<double>(norm);

        NetConfig net;
        net.time_steps = 4;
        net.cell_kernel = 3;
        net.hidden_channels = 4;
        net.reduction_ratio = 4;
        net.spatial_kernel = 3;
        net.gn_groups = 4;
        net.skip_channels = 8;
        net.encoder_channels = {8, 12, 16, 24};
        net.num_classes = 3;
        net.in_bands = 8;
        net.validate();

        const SampleSplit split = split_ratio(labels, 0.3, 2, seed + 18);
        const HierarchicalSchedule sched = build_schedule(split, 1, 4, seed + 19);
        std::vector<long long> counts;
        for (int c : split.train_counts()) counts.push_back(c);
        const ClassWeights cw = class_weights(counts, 0.99);

        ParamStore<double> params = init_params<double>(net, seed + 20);
        GradCheckCase full{"full_model_loss", 0.0, 0};
        for (const auto& [name, tensor] : params.items()) {
            std::vector<long long> coords;
            const long long n = tensor.size();
            coords.push_back(0);
            if (n > 1) coords.push_back(n - 1);
            for (int extra = 0; extra < 2 && n > 2; ++extra)
                coords.push_back(1 + (long long)rng.next_below(std::uint64_t(n - 1)));
            auto fn = [&](const Tensor<double>& p) {
                ParamStore<double> local;
                for (const auto& [k, v] : params.items()) local.add(k, k == name ? p : v);
                Tensor<double> logits = ssdgl_forward(input, local, net);
                return weighted_masked_loss(logits, labels, sched.mask_of(0), cw);
            };
            full.max_rel_err = std::max(full.max_rel_err, grad_check_coords(fn, tensor, step, coords));
            ++full.trials;
        }
        results.push_back(full);
    }
    return results;
}

}  // namespace ssdgl
