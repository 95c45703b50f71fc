#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssdgl/ops.hpp"
#include "ssdgl/params.hpp"
#include "ssdgl/rng.hpp"

namespace ssdgl {

inline constexpr double kGroupNormEps = 1e-5;

/// Architecture hyperparameters of the SSDGL model.
struct NetConfig {
    int time_steps = 8;        // spectral groups fed to the recurrent stem
    int cell_kernel = 5;       // ConvLSTM gate kernel
    int hidden_channels = 64;  // per ConvLSTM layer
    int reduction_ratio = 16;  // spectral-attention bottleneck
    int spatial_kernel = 7;    // spatial-attention conv
    int gn_groups = 4;
    int skip_channels = 128;
    std::vector<int> encoder_channels = {64, 96, 128, 192};
    int num_classes = 0;
    int in_bands = 0;
    bool use_gcl = true;
    bool use_gjam = true;

    /// Channels entering the 1x1 reduction in front of the encoder.
    int stem_channels() const { return use_gcl ? time_steps * hidden_channels : in_bands; }

    void validate() const {
        if (num_classes < 2) throw ConfigError("NetConfig: num_classes must be >= 2");
        if (in_bands < 1) throw ConfigError("NetConfig: in_bands must be >= 1");
        if (time_steps < 1) throw ConfigError("NetConfig: time_steps must be >= 1");
        if (use_gcl && in_bands < time_steps)
            throw ConfigError("NetConfig: " + std::to_string(in_bands) + " bands cannot fill " +
                              std::to_string(time_steps) + " time steps");
        if (cell_kernel < 1 || cell_kernel % 2 == 0) throw ConfigError("NetConfig: cell_kernel must be odd");
        if (spatial_kernel < 1 || spatial_kernel % 2 == 0)
            throw ConfigError("NetConfig: spatial_kernel must be odd");
        if (gn_groups < 1) throw ConfigError("NetConfig: gn_groups must be >= 1");
        if (encoder_channels.size() != 4) throw ConfigError("NetConfig: expected 4 encoder stages");
        if (reduction_ratio < 1 || reduction_ratio > stem_channels())
            throw ConfigError("NetConfig: reduction_ratio " + std::to_string(reduction_ratio) +
                              " exceeds " + std::to_string(stem_channels()) + " stem channels");
        auto must_divide = [&](int c, const char* what) {
            if (c < 1 || c % gn_groups != 0)
                throw ConfigError(std::string("NetConfig: ") + what + " (" + std::to_string(c) +
                                  ") must be a positive multiple of gn_groups=" + std::to_string(gn_groups));
        };
        must_divide(hidden_channels, "hidden_channels");
        must_divide(skip_channels, "skip_channels");
        for (int c : encoder_channels) must_divide(c, "encoder channel width");
    }
};

template <class Scalar>
struct CellState {
    Tensor<Scalar> h;
    Tensor<Scalar> c;
};

/// Spectral-group sizes: channels distributed evenly across time steps,
/// the first (channels % time_steps) groups taking one extra.
inline std::vector<int> gcl_group_sizes(int channels, int time_steps) {
    if (channels < time_steps)
        throw ConfigError("gcl: " + std::to_string(channels) + " channels for " +
                          std::to_string(time_steps) + " time steps");
    const int base = channels / time_steps, extra = channels % time_steps;
    std::vector<int> sizes(std::size_t(time_steps), base);
    for (int i = 0; i < extra; ++i) ++sizes[std::size_t(i)];
    return sizes;
}

/// Spatial side lengths after each encoder stage.
inline std::vector<int> encoder_stage_resolutions(int side) {
    return {side / 2, side / 4, side / 8, side / 16};
}

/// One convolutional LSTM step. Gates are convolutions over the
/// concatenated (input, previous hidden) with same-padding:
///   i,f,o = sigmoid(...), g = tanh(...),
///   c_t = f .* c_{t-1} + i .* g,  h_t = o .* tanh(c_t).
/// The gate blocks of `w`/`b` are ordered [i | f | g | o].
template <class Scalar>
CellState<Scalar> convlstm_cell(const Tensor<Scalar>& x, const CellState<Scalar>& state,
                                const Tensor<Scalar>& w, const Tensor<Scalar>& b, int hidden) {
    if (x.rank() != 3) throw ShapeError("convlstm_cell: input must be [C,H,W]");
    if (state.h.dim(1) != x.dim(1) || state.h.dim(2) != x.dim(2))
        throw ShapeError("convlstm_cell: state " + to_string(state.h.shape()) +
                         " does not match input " + to_string(x.shape()));
    const int k = w.dim(2);
    Tensor<Scalar> z = conv2d(concat<Scalar>({x, state.h}, 0), w, b, 1, (k - 1) / 2);
    Tensor<Scalar> i = sigmoid(slice(z, 0, 0, hidden));
    Tensor<Scalar> f = sigmoid(slice(z, 0, hidden, 2 * hidden));
    Tensor<Scalar> g = tanh_act(slice(z, 0, 2 * hidden, 3 * hidden));
    Tensor<Scalar> o = sigmoid(slice(z, 0, 3 * hidden, 4 * hidden));
    CellState<Scalar> next;
    next.c = add(mul(f, state.c), mul(i, g));
    next.h = mul(o, tanh_act(next.c));
    return next;
}

/// Two stacked ConvLSTM layers over the spectral-group sequence; output is
/// the channel concatenation of every layer-2 hidden state. Spatial size is
/// unchanged. Groups narrower than the widest are zero-padded so one weight
/// set serves all steps.
template <class Scalar>
Tensor<Scalar> gcl_forward(const Tensor<Scalar>& cube, const ParamStore<Scalar>& params,
                           const NetConfig& cfg) {
    const int C = cube.dim(0), H = cube.dim(1), W = cube.dim(2);
    const std::vector<int> sizes = gcl_group_sizes(C, cfg.time_steps);
    const int gmax = sizes[0];
    const int hid = cfg.hidden_channels;

    const Tensor<Scalar>& w0 = params.get("gcl.l0.w");
    const Tensor<Scalar>& b0 = params.get("gcl.l0.b");
    const Tensor<Scalar>& w1 = params.get("gcl.l1.w");
    const Tensor<Scalar>& b1 = params.get("gcl.l1.b");

    CellState<Scalar> s0{Tensor<Scalar>::zeros({hid, H, W}), Tensor<Scalar>::zeros({hid, H, W})};
    CellState<Scalar> s1 = s0;
    std::vector<Tensor<Scalar>> outputs;
    outputs.reserve(std::size_t(cfg.time_steps));
    int off = 0;
    for (int t = 0; t < cfg.time_steps; ++t) {
        Tensor<Scalar> xt = slice(cube, 0, off, off + sizes[std::size_t(t)]);
        off += sizes[std::size_t(t)];
        if (sizes[std::size_t(t)] < gmax)
            xt = concat<Scalar>({xt, Tensor<Scalar>::zeros({gmax - sizes[std::size_t(t)], H, W})}, 0);
        s0 = convlstm_cell(xt, s0, w0, b0, hid);
        s1 = convlstm_cell(s0.h, s1, w1, b1, hid);
        outputs.push_back(s1.h);
    }
    return concat(outputs, 0);
}

/// Channel gate s = sigmoid(W1 relu(W0 avgpool(F)) + W1 relu(W0 maxpool(F))),
/// shared MLP, values strictly inside (0,1).
template <class Scalar>
Tensor<Scalar> spectral_gate(const Tensor<Scalar>& f, const Tensor<Scalar>& w0,
                             const Tensor<Scalar>& w1) {
    Tensor<Scalar> avg_path = linear(relu(linear(pool_global(f, PoolMode::Avg), w0)), w1);
    Tensor<Scalar> max_path = linear(relu(linear(pool_global(f, PoolMode::Max), w0)), w1);
    return sigmoid(add(avg_path, max_path));
}

template <class Scalar>
Tensor<Scalar> spectral_attention(const Tensor<Scalar>& f, const Tensor<Scalar>& w0,
                                  const Tensor<Scalar>& w1) {
    if (w0.dim(0) > f.dim(0))
        throw ConfigError("spectral_attention: bottleneck wider than input channels");
    Tensor<Scalar> s = spectral_gate(f, w0, w1);
    return mul(f, s.reshaped({f.dim(0), 1, 1}));
}

/// Position gate a = sigmoid(conv_NxN(concat(channel-avg, channel-max))),
/// one value per pixel.
template <class Scalar>
Tensor<Scalar> spatial_gate(const Tensor<Scalar>& f, const Tensor<Scalar>& w,
                            const Tensor<Scalar>& b) {
    const int k = w.dim(2);
    Tensor<Scalar> pooled =
        concat<Scalar>({pool_channel(f, PoolMode::Avg), pool_channel(f, PoolMode::Max)}, 0);
    return sigmoid(conv2d(pooled, w, b, 1, (k - 1) / 2));
}

template <class Scalar>
Tensor<Scalar> spatial_attention(const Tensor<Scalar>& f, const Tensor<Scalar>& w,
                                 const Tensor<Scalar>& b) {
    return mul(f, spatial_gate(f, w, b));
}

namespace detail {

template <class Scalar>
Tensor<Scalar> conv_gn_relu(const Tensor<Scalar>& x, const ParamStore<Scalar>& p,
                            const std::string& conv, const std::string& gn, int groups, int pad) {
    Tensor<Scalar> y = conv2d(x, p.get(conv + ".w"), p.get(conv + ".b"), 1, pad);
    y = group_norm(y, groups, p.get(gn + ".g"), p.get(gn + ".b"), Scalar(kGroupNormEps));
    return relu(y);
}

}  // namespace detail

/// Four encoder stages (two 3x3 conv+GN+relu, then stride-2 downsample) to
/// 1/16 resolution; four decoder stages (2x nearest upsample, fuse with the
/// same-resolution encoder features through 1x1 projections to
/// skip_channels and addition, then conv+GN+relu); 1x1 head to class logits.
template <class Scalar>
Tensor<Scalar> encoder_decoder(const Tensor<Scalar>& f, const ParamStore<Scalar>& params,
                               const NetConfig& cfg) {
    const int H = f.dim(1), W = f.dim(2);
    if (H % 16 != 0 || W % 16 != 0)
        throw ShapeError("encoder_decoder: spatial dims " + to_string(f.shape()) +
                         " are not multiples of 16; pad the input first");
    Tensor<Scalar> x = f;
    std::vector<Tensor<Scalar>> skips;
    for (int i = 0; i < 4; ++i) {
        const std::string s = "enc" + std::to_string(i);
        x = detail::conv_gn_relu(x, params, s + ".c1", s + ".gn1", cfg.gn_groups, 1);
        x = detail::conv_gn_relu(x, params, s + ".c2", s + ".gn2", cfg.gn_groups, 1);
        skips.push_back(x);
        x = conv2d(x, params.get(s + ".down.w"), params.get(s + ".down.b"), 2, 1);
    }
    for (int d = 0; d < 4; ++d) {
        const std::string s = "dec" + std::to_string(d);
        x = upsample_nearest2(x);
        const Tensor<Scalar>& e = skips[std::size_t(3 - d)];
        Tensor<Scalar> fused = add(conv2d(x, params.get(s + ".pd.w"), params.get(s + ".pd.b"), 1, 0),
                                   conv2d(e, params.get(s + ".pe.w"), params.get(s + ".pe.b"), 1, 0));
        x = detail::conv_gn_relu(fused, params, s + ".c", s + ".gn", cfg.gn_groups, 1);
    }
    return conv2d(x, params.get("head.w"), params.get("head.b"), 1, 0);
}

/// Whole-image forward pass: recurrent spectral stem, joint attention, 1x1
/// reduction, encoder-decoder; returns per-pixel class logits [M,H,W].
template <class Scalar>
Tensor<Scalar> ssdgl_forward(const Tensor<Scalar>& cube, const ParamStore<Scalar>& params,
                             const NetConfig& cfg) {
    if (cube.rank() != 3) throw ShapeError("ssdgl_forward: input must be [C,H,W]");
    if (cube.dim(0) != cfg.in_bands)
        throw ShapeError("ssdgl_forward: cube has " + std::to_string(cube.dim(0)) +
                         " bands, model expects " + std::to_string(cfg.in_bands));
    Tensor<Scalar> x = cube;
    if (cfg.use_gcl) x = gcl_forward(x, params, cfg);
    if (cfg.use_gjam) {
        x = spectral_attention(x, params.get("att.spec.w0"), params.get("att.spec.w1"));
        x = spatial_attention(x, params.get("att.spat.w"), params.get("att.spat.b"));
    }
    x = conv2d(x, params.get("reduce.w"), params.get("reduce.b"), 1, 0);
    x = group_norm(x, cfg.gn_groups, params.get("reduce.gn.g"), params.get("reduce.gn.b"),
                   Scalar(kGroupNormEps));
    x = relu(x);
    return encoder_decoder(x, params, cfg);
}

/// Fresh parameters: fan-in-scaled uniform weights (bound sqrt(6/fan_in)),
/// zero biases except the ConvLSTM forget-gate block (1), unit GN gain.
/// Deterministic in (config, seed); creation order is the draw order.
template <class Scalar>
ParamStore<Scalar> init_params(const NetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ParamStore<Scalar> store;
    Rng rng(seed);

    auto uniform_tensor = [&](Shape shape, long long fan_in) {
        Tensor<Scalar> t = Tensor<Scalar>::zeros(std::move(shape));
        const double bound = std::sqrt(6.0 / double(fan_in));
        Scalar* d = t.raw();
        for (long long i = 0; i < t.size(); ++i) d[i] = Scalar(rng.next_uniform(-bound, bound));
        return t;
    };
    auto add_conv = [&](const std::string& name, int cout, int cin, int k) {
        store.add(name + ".w", uniform_tensor({cout, cin, k, k}, (long long)cin * k * k));
        store.add(name + ".b", Tensor<Scalar>::zeros({cout}));
    };
    auto add_gn = [&](const std::string& name, int c) {
        store.add(name + ".g", Tensor<Scalar>::full({c}, Scalar(1)));
        store.add(name + ".b", Tensor<Scalar>::zeros({c}));
    };

    const int hid = cfg.hidden_channels;
    if (cfg.use_gcl) {
        const int gmax = gcl_group_sizes(cfg.in_bands, cfg.time_steps)[0];
        add_conv("gcl.l0", 4 * hid, gmax + hid, cfg.cell_kernel);
        add_conv("gcl.l1", 4 * hid, hid + hid, cfg.cell_kernel);
        for (const char* layer : {"gcl.l0.b", "gcl.l1.b"}) {
            Scalar* b = store.get(layer).raw();
            for (int i = hid; i < 2 * hid; ++i) b[i] = Scalar(1);  // forget gate
        }
    }
    const int stem = cfg.stem_channels();
    if (cfg.use_gjam) {
        const int bottleneck = std::max(1, stem / cfg.reduction_ratio);
        store.add("att.spec.w0", uniform_tensor({bottleneck, stem}, stem));
        store.add("att.spec.w1", uniform_tensor({stem, bottleneck}, bottleneck));
        add_conv("att.spat", 1, 2, cfg.spatial_kernel);
    }
    const auto& ec = cfg.encoder_channels;
    add_conv("reduce", ec[0], stem, 1);
    add_gn("reduce.gn", ec[0]);
    for (int i = 0; i < 4; ++i) {
        const std::string s = "enc" + std::to_string(i);
        const int cin = i == 0 ? ec[0] : ec[std::size_t(i - 1)];
        add_conv(s + ".c1", ec[std::size_t(i)], cin, 3);
        add_gn(s + ".gn1", ec[std::size_t(i)]);
        add_conv(s + ".c2", ec[std::size_t(i)], ec[std::size_t(i)], 3);
        add_gn(s + ".gn2", ec[std::size_t(i)]);
        add_conv(s + ".down", ec[std::size_t(i)], ec[std::size_t(i)], 3);
    }
    for (int d = 0; d < 4; ++d) {
        const std::string s = "dec" + std::to_string(d);
        const int dec_in = d == 0 ? ec[3] : cfg.skip_channels;
        add_conv(s + ".pd", cfg.skip_channels, dec_in, 1);
        add_conv(s + ".pe", cfg.skip_channels, ec[std::size_t(3 - d)], 1);
        add_conv(s + ".c", cfg.skip_channels, cfg.skip_channels, 3);
        add_gn(s + ".gn", cfg.skip_channels);
    }
    add_conv("head", cfg.num_classes, cfg.skip_channels, 1);
    return store;
}

}  // namespace ssdgl
