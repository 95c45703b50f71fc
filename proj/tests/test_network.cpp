#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "oracles.hpp"
#include "ssdgl/network.hpp"
#include "ssdgl/params.hpp"

using namespace ssdgl;

namespace {

NetConfig tiny_config(int bands = 8, int classes = 3) {
    NetConfig net;
    net.time_steps = 4;
    net.cell_kernel = 3;
    net.hidden_channels = 4;
    net.reduction_ratio = 4;
    net.spatial_kernel = 3;
    net.gn_groups = 4;
    net.skip_channels = 8;
    net.encoder_channels = {8, 12, 16, 24};
    net.num_classes = classes;
    net.in_bands = bands;
    return net;
}

template <class S>
ParamStore<S> zeroed(const ParamStore<S>& src) {
    ParamStore<S> out;
    for (const auto& [name, t] : src.items()) out.add(name, Tensor<S>::zeros(t.shape()));
    return out;
}

}  // namespace

TEST_CASE("convlstm cell: zero parameters give zero state") {
    const int hid = 4;
    Rng rng(1);
    Tensor<double> x = oracle::random_tensor<double>(rng, {3, 6, 6});
    CellState<double> st{Tensor<double>::zeros({hid, 6, 6}), Tensor<double>::zeros({hid, 6, 6})};
    Tensor<double> w = Tensor<double>::zeros({4 * hid, 3 + hid, 3, 3});
    Tensor<double> b = Tensor<double>::zeros({4 * hid});
    CellState<double> next = convlstm_cell(x, st, w, b, hid);
    // gates are exactly 0.5, candidate is 0, so both states stay zero
    for (long long i = 0; i < next.c.size(); ++i) CHECK(next.c.data()[i] == 0.0);
    for (long long i = 0; i < next.h.size(); ++i) CHECK(next.h.data()[i] == 0.0);
}

TEST_CASE("convlstm cell: saturated gates preserve the cell state") {
    const int hid = 2;
    Rng rng(2);
    Tensor<double> x = Tensor<double>::zeros({3, 5, 5});
    CellState<double> st{Tensor<double>::zeros({hid, 5, 5}),
                         oracle::random_tensor<double>(rng, {hid, 5, 5})};
    Tensor<double> w = Tensor<double>::zeros({4 * hid, 3 + hid, 3, 3});
    Tensor<double> b = Tensor<double>::zeros({4 * hid});
    for (int i = 0; i < hid; ++i) {
        b.raw()[i] = -30.0;            // input gate shut
        b.raw()[hid + i] = 30.0;       // forget gate open
    }
    CellState<double> next = convlstm_cell(x, st, w, b, hid);
    for (long long i = 0; i < next.c.size(); ++i)
        CHECK(std::fabs(next.c.data()[i] - st.c.data()[i]) < 1e-3);
}

TEST_CASE("convlstm cell preserves spatial dims") {
    Rng rng(3);
    for (int h : {5, 8, 11})
        for (int w : {5, 9}) {
            const int hid = 4;
            Tensor<double> x = oracle::random_tensor<double>(rng, {2, h, w});
            CellState<double> st{Tensor<double>::zeros({hid, h, w}), Tensor<double>::zeros({hid, h, w})};
            Tensor<double> kw = oracle::random_tensor<double>(rng, {4 * hid, 2 + hid, 5, 5});
            Tensor<double> kb = oracle::random_tensor<double>(rng, {4 * hid});
            CellState<double> next = convlstm_cell(x, st, kw, kb, hid);
            CHECK(next.h.shape() == Shape{hid, h, w});
            CHECK(next.c.shape() == Shape{hid, h, w});
        }
    Tensor<double> x = oracle::random_tensor<double>(rng, {2, 5, 5});
    CellState<double> st{Tensor<double>::zeros({4, 5, 6}), Tensor<double>::zeros({4, 5, 6})};
    CHECK_THROWS_AS(convlstm_cell(x, st, Tensor<double>::zeros({16, 6, 3, 3}),
                                  Tensor<double>::zeros({16}), 4),
                    ShapeError);
}

TEST_CASE("gcl group sizes follow the remainder rule") {
    CHECK(gcl_group_sizes(200, 8) == std::vector<int>(8, 25));
    CHECK(gcl_group_sizes(10, 8) == std::vector<int>{2, 2, 1, 1, 1, 1, 1, 1});
    CHECK(gcl_group_sizes(8, 4) == std::vector<int>{2, 2, 2, 2});
    CHECK_THROWS_AS(gcl_group_sizes(3, 8), ConfigError);
}

TEST_CASE("gcl forward: shapes, zero collapse, uneven groups") {
    Rng rng(4);
    NetConfig net = tiny_config();
    ParamStore<double> params = init_params<double>(net, 7);

    Tensor<double> cube = oracle::random_tensor<double>(rng, {8, 12, 9});
    Tensor<double> out = gcl_forward(cube, params, net);
    CHECK(out.shape() == Shape{net.time_steps * net.hidden_channels, 12, 9});

    // zero parameters collapse the whole stem to zero
    ParamStore<double> zp = zeroed(params);
    Tensor<double> zout = gcl_forward(cube, zp, net);
    for (long long i = 0; i < zout.size(); ++i) CHECK(zout.data()[i] == 0.0);

    // channel count not divisible by time steps: first groups get the extra
    NetConfig uneven = tiny_config(10);
    uneven.time_steps = 8;
    uneven.hidden_channels = 4;
    ParamStore<double> up = init_params<double>(uneven, 8);
    Tensor<double> ucube = oracle::random_tensor<double>(rng, {10, 8, 8});
    CHECK(gcl_forward(ucube, up, uneven).shape() == Shape{8 * 4, 8, 8});

    NetConfig narrow = tiny_config(3);
    CHECK_THROWS_AS(init_params<double>(narrow, 1), ConfigError);
}

TEST_CASE("spectral attention gates the channels") {
    Rng rng(5);
    const int c = 8;
    Tensor<double> f = oracle::random_tensor<double>(rng, {c, 5, 5});
    Tensor<double> w0 = oracle::random_tensor<double>(rng, {2, c});
    Tensor<double> w1 = oracle::random_tensor<double>(rng, {c, 2});

    // zero W1 makes the gate exactly 0.5
    Tensor<double> half = spectral_attention(f, w0, Tensor<double>::zeros({c, 2}));
    for (long long i = 0; i < f.size(); ++i)
        CHECK(half.data()[i] == doctest::Approx(0.5 * f.data()[i]).epsilon(1e-12));

    // gate in (0,1): output strictly smaller in magnitude wherever F != 0
    Tensor<double> out = spectral_attention(f, w0, w1);
    for (long long i = 0; i < f.size(); ++i)
        if (f.data()[i] != 0.0) CHECK(std::fabs(out.data()[i]) < std::fabs(f.data()[i]));

    // factorization: out = F .* s with s the independently recomputed gate
    Tensor<double> s = spectral_gate(f, w0, w1);
    for (int ch = 0; ch < c; ++ch) {
        CHECK(s.data()[ch] > 0.0);
        CHECK(s.data()[ch] < 1.0);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j)
                CHECK(out.at({ch, i, j}) == doctest::Approx(f.at({ch, i, j}) * s.data()[ch]).epsilon(1e-12));
    }

    CHECK_THROWS_AS(spectral_attention(f, oracle::random_tensor<double>(rng, {9, c}),
                                       oracle::random_tensor<double>(rng, {c, 9})),
                    ConfigError);
}

TEST_CASE("spectral attention matches the scalar-by-scalar formula on C=2") {
    // C=2, r=1 bottleneck with hand-evaluated weights
    Tensor<double> f = Tensor<double>::from({2, 1, 2}, {1.0, -2.0, 0.5, 3.0});
    Tensor<double> w0 = Tensor<double>::from({1, 2}, {0.7, -0.3});
    Tensor<double> w1 = Tensor<double>::from({2, 1}, {1.1, -0.4});

    // avg pool: (-0.5, 1.75); max pool: (1.0, 3.0)
    auto mlp = [&](double a, double b) {
        const double hiddenv = std::max(0.0, 0.7 * a - 0.3 * b);
        return std::array<double, 2>{1.1 * hiddenv, -0.4 * hiddenv};
    };
    const auto pa = mlp(-0.5, 1.75);
    const auto pm = mlp(1.0, 3.0);
    const double s0 = 1.0 / (1.0 + std::exp(-(pa[0] + pm[0])));
    const double s1 = 1.0 / (1.0 + std::exp(-(pa[1] + pm[1])));

    Tensor<double> s = spectral_gate(f, w0, w1);
    CHECK(s.data()[0] == doctest::Approx(s0).epsilon(1e-12));
    CHECK(s.data()[1] == doctest::Approx(s1).epsilon(1e-12));
    Tensor<double> out = spectral_attention(f, w0, w1);
    CHECK(out.at({0, 0, 1}) == doctest::Approx(-2.0 * s0).epsilon(1e-12));
    CHECK(out.at({1, 0, 0}) == doctest::Approx(0.5 * s1).epsilon(1e-12));
}

TEST_CASE("spatial attention gates the positions") {
    Rng rng(6);
    Tensor<double> f = oracle::random_tensor<double>(rng, {5, 6, 6});
    Tensor<double> w = oracle::random_tensor<double>(rng, {1, 2, 3, 3});
    Tensor<double> b = Tensor<double>::zeros({1});

    // zero conv weights: gate 0.5 everywhere
    Tensor<double> half = spatial_attention(f, Tensor<double>::zeros({1, 2, 3, 3}), b);
    for (long long i = 0; i < f.size(); ++i)
        CHECK(half.data()[i] == doctest::Approx(0.5 * f.data()[i]).epsilon(1e-12));

    // gate shape is 1xHxW for any channel count
    Tensor<double> a = spatial_gate(f, w, b);
    CHECK(a.shape() == Shape{1, 6, 6});
    for (long long i = 0; i < a.size(); ++i) {
        CHECK(a.data()[i] > 0.0);
        CHECK(a.data()[i] < 1.0);
    }

    // constant field: gate constant, output = constant * gate (hand eval on 3x3)
    Tensor<double> cf = Tensor<double>::full({2, 3, 3}, 1.7);
    Tensor<double> cw = oracle::random_tensor<double>(rng, {1, 2, 3, 3});
    Tensor<double> ag = spatial_gate(cf, cw, b);
    // interior value: avg pool = max pool = 1.7 both channels; conv sums all taps
    double tapsum = 0.0;
    for (long long i = 0; i < cw.size(); ++i) tapsum += cw.data()[i];
    const double expected = 1.0 / (1.0 + std::exp(-1.7 * tapsum));
    CHECK(ag.at({0, 1, 1}) == doctest::Approx(expected).epsilon(1e-12));
    Tensor<double> cout = spatial_attention(cf, cw, b);
    CHECK(cout.at({1, 1, 1}) == doctest::Approx(1.7 * expected).epsilon(1e-12));
}

TEST_CASE("encoder-decoder shape contract") {
    NetConfig net = tiny_config();
    ParamStore<float> params = init_params<float>(net, 3);
    Rng rng(7);
    // input at the encoder width (what the 1x1 reduction produces)
    Tensor<float> f = oracle::random_tensor<float>(rng, {net.encoder_channels[0], 32, 32});
    Tensor<float> logits = encoder_decoder(f, params, net);
    CHECK(logits.shape() == Shape{3, 32, 32});

    CHECK(encoder_stage_resolutions(160) == std::vector<int>{80, 40, 20, 10});

    Tensor<float> bad = oracle::random_tensor<float>(rng, {8, 20, 32});
    CHECK_THROWS_WITH_AS(encoder_decoder(bad, params, net), doctest::Contains("pad"), ShapeError);
}

TEST_CASE("full forward: shape, determinism, zero-parameter collapse") {
    NetConfig net = tiny_config(16, 3);
    net.time_steps = 8;
    ParamStore<float> params = init_params<float>(net, 11);
    Rng rng(8);
    Tensor<float> cube = oracle::random_tensor<float>(rng, {16, 32, 32});

    Tensor<float> a = ssdgl_forward(cube, params, net);
    CHECK(a.shape() == Shape{3, 32, 32});
    Tensor<float> b = ssdgl_forward(cube, params, net);
    CHECK(std::memcmp(a.data(), b.data(), std::size_t(a.size()) * sizeof(float)) == 0);

    // all-zero parameters: logits equal the (zero) head bias everywhere
    ParamStore<float> zp = zeroed(params);
    Tensor<float> z = ssdgl_forward(cube, zp, net);
    for (long long i = 0; i < z.size(); ++i) CHECK(z.data()[i] == 0.0f);
    // and with a nonzero head bias, logits equal that bias
    zp.get("head.b").raw()[1] = 0.75f;
    Tensor<float> zb = ssdgl_forward(cube, zp, net);
    for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) {
            CHECK(zb.at({0, i, j}) == 0.0f);
            CHECK(zb.at({1, i, j}) == 0.75f);
        }

    CHECK_THROWS_AS(ssdgl_forward(oracle::random_tensor<float>(rng, {9, 32, 32}), params, net),
                    ShapeError);
}

TEST_CASE("stem preserves spatial size on random shapes") {
    Rng rng(9);
    NetConfig net = tiny_config();
    ParamStore<double> params = init_params<double>(net, 13);
    for (int trial = 0; trial < 5; ++trial) {
        const int h = 5 + int(rng.next_below(12)), w = 5 + int(rng.next_below(12));
        Tensor<double> cube = oracle::random_tensor<double>(rng, {8, h, w});
        Tensor<double> g = gcl_forward(cube, params, net);
        CHECK(g.dim(1) == h);
        CHECK(g.dim(2) == w);
        Tensor<double> sa = spectral_attention(g, params.get("att.spec.w0"), params.get("att.spec.w1"));
        Tensor<double> sp = spatial_attention(sa, params.get("att.spat.w"), params.get("att.spat.b"));
        CHECK(sp.dim(1) == h);
        CHECK(sp.dim(2) == w);
        CHECK(sp.dim(0) == g.dim(0));
    }
}

TEST_CASE("init_params is deterministic with documented structure") {
    NetConfig net = tiny_config();
    ParamStore<float> a = init_params<float>(net, 99);
    ParamStore<float> b = init_params<float>(net, 99);
    REQUIRE(a.count() == b.count());
    for (std::size_t i = 0; i < a.count(); ++i) {
        CHECK(a.items()[i].first == b.items()[i].first);
        CHECK(oracle::bytes_equal(a.items()[i].second, b.items()[i].second));
    }
    ParamStore<float> c = init_params<float>(net, 100);
    CHECK(!oracle::bytes_equal(a.get("gcl.l0.w"), c.get("gcl.l0.w")));

    // forget-gate bias block is ones, the rest zero
    const Tensor<float>& bias = a.get("gcl.l0.b");
    const int hid = net.hidden_channels;
    for (int i = 0; i < 4 * hid; ++i)
        CHECK(bias.data()[i] == (i >= hid && i < 2 * hid ? 1.0f : 0.0f));

    // fan-in bound on conv weights
    const Tensor<float>& w = a.get("enc0.c1.w");
    const double bound = std::sqrt(6.0 / (8.0 * 9.0));
    for (long long i = 0; i < w.size(); ++i) CHECK(std::fabs(double(w.data()[i])) <= bound);

    // group-norm affine starts at identity
    for (long long i = 0; i < a.get("reduce.gn.g").size(); ++i) {
        CHECK(a.get("reduce.gn.g").data()[i] == 1.0f);
        CHECK(a.get("reduce.gn.b").data()[i] == 0.0f);
    }
}

TEST_CASE("config validation enforces the channel-multiple constraint") {
    NetConfig net = tiny_config();
    net.hidden_channels = 6;  // not a multiple of 4
    CHECK_THROWS_AS(net.validate(), ConfigError);
    net = tiny_config();
    net.encoder_channels = {8, 12, 15, 24};
    CHECK_THROWS_AS(net.validate(), ConfigError);
    net = tiny_config();
    net.skip_channels = 10;
    CHECK_THROWS_AS(net.validate(), ConfigError);
    net = tiny_config();
    net.reduction_ratio = 64;  // wider than the stem
    CHECK_THROWS_AS(net.validate(), ConfigError);
    net = tiny_config();
    net.cell_kernel = 4;
    CHECK_THROWS_AS(net.validate(), ConfigError);
    net = tiny_config();
    net.num_classes = 1;
    CHECK_THROWS_AS(net.validate(), ConfigError);
    CHECK_NOTHROW(tiny_config().validate());
}

TEST_CASE("parameter store serialization round-trips bit-exactly") {
    namespace fs = std::filesystem;
    NetConfig net = tiny_config();
    ParamStore<float> params = init_params<float>(net, 5);
    const std::string cfg_text = "epochs = 3\nseed = 5\n";
    const std::string path = (fs::temp_directory_path() / "ssdgl_params_roundtrip.ssdm").string();
    save_params(params, cfg_text, path);
    const LoadedParams back = load_params(path);
    CHECK(back.config_text == cfg_text);
    REQUIRE(back.store.count() == params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
        CHECK(back.store.items()[i].first == params.items()[i].first);
        CHECK(oracle::bytes_equal(back.store.items()[i].second, params.items()[i].second));
    }
    fs::remove(path);
}

TEST_CASE("full-model gradient check on a tiny cube lives in the op sweep") {
    // the 16x16x8 / hidden=4 full-model finite-difference check runs inside
    // run_gradcheck_suite (see test_tensor and the acceptance suite); here
    // just pin the configuration contract it relies on
    NetConfig net = tiny_config();
    CHECK(net.hidden_channels == 4);
    CHECK(net.stem_channels() == 16);
    CHECK_NOTHROW(net.validate());
}
