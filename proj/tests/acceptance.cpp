// Acceptance suite: runs every gating criterion end to end and prints one
// PASS/FAIL line per criterion. Returns nonzero if any gating criterion
// fails. Heavy criteria share training runs where the definitions allow it.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "ssdgl/gradcheck_suite.hpp"
#include "ssdgl/metrics.hpp"
#include "ssdgl/predict.hpp"
#include "ssdgl/trainer.hpp"

using namespace ssdgl;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void verdict(int criterion, bool pass, const std::string& detail) {
    std::printf("criterion %2d: %s — %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

void info(int criterion, const std::string& detail) {
    std::printf("criterion %2d: INFO — %s\n", criterion, detail.c_str());
    std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

LabelRaster raster_with_totals(const std::vector<int>& totals) {
    long long n = 64;
    for (int t : totals) n += t;
    const int width = 101;
    const int height = int((n + width - 1) / width);
    LabelRaster r;
    r.height = height;
    r.width = width;
    r.labels.assign(std::size_t(height) * std::size_t(width), 0);
    std::size_t pos = 0;
    for (std::size_t c = 0; c < totals.size(); ++c)
        for (int i = 0; i < totals[c]; ++i) r.labels[pos++] = std::uint16_t(c + 1);
    return r;
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// --- criteria 1-2: split oracles -------------------------------------------

void criterion_split_oracles() {
    {
        const auto t0 = std::chrono::steady_clock::now();
        const std::vector<int> totals = {46, 1428, 830, 237, 483, 730, 28, 478,
                                         20, 972, 2455, 593, 205, 1265, 386, 93};
        const std::vector<int> expect = {5, 72, 42, 12, 25, 37, 5, 24, 5, 49, 123, 30, 11, 64, 20, 5};
        const SampleSplit sp = split_ratio(raster_with_totals(totals), 0.05, 5, 42);
        const bool pass = sp.train_counts() == expect && sp.total_train() == 529 &&
                          (long long)sp.test_indices.size() == 9720;
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "16-class 5%% split: train %lld (expect 529), test %zu (expect 9720), %.3f s",
                      sp.total_train(), sp.test_indices.size(), seconds_since(t0));
        verdict(1, pass && seconds_since(t0) < 1.0, buf);
    }
    {
        const auto t0 = std::chrono::steady_clock::now();
        const std::vector<int> totals = {6631, 18649, 2099, 3064, 1345, 5029, 1330, 3682, 947};
        const std::vector<int> expect = {67, 187, 21, 31, 14, 51, 14, 37, 10};
        const SampleSplit sp = split_ratio(raster_with_totals(totals), 0.01, 5, 42);
        const bool pass = sp.train_counts() == expect && sp.total_train() == 432;
        char buf[120];
        std::snprintf(buf, sizeof buf, "9-class 1%% split: train %lld (expect 432), %.3f s",
                      sp.total_train(), seconds_since(t0));
        verdict(2, pass && seconds_since(t0) < 1.0, buf);
    }
}

// --- criterion 3: class-weight oracle ---------------------------------------

void criterion_class_weights() {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = true;
    std::string why;

    const ClassWeights cw = class_weights({10, 1000}, 0.99);
    const auto ref = oracle::class_weights_highprec({10, 1000}, 0.99L);
    if (std::fabs(cw.w[0] - double(ref[0])) > 1e-9 || std::fabs(cw.w[1] - double(ref[1])) > 1e-9) {
        pass = false;
        why = "high-precision oracle mismatch";
    }

    Rng rng(20250810);
    for (int trial = 0; trial < 1000 && pass; ++trial) {
        const int m = 2 + int(rng.next_below(18));
        const double delta = rng.next_uniform(0.9, 0.9999);
        // draws stay inside the informative range of delta, where the
        // saturating formula is still strictly monotone in double precision
        const long long cap = std::min<long long>(10000, (long long)(8.0 / (1.0 - delta)));
        std::vector<long long> n(static_cast<std::size_t>(m));
        for (auto& v : n) v = 1 + (long long)rng.next_below(std::uint64_t(cap));
        const ClassWeights w = class_weights(n, delta);
        const double sum = std::accumulate(w.w.begin(), w.w.end(), 0.0);
        if (std::fabs(sum - double(m)) > 1e-9) {
            pass = false;
            why = "sum drifted from M at trial " + std::to_string(trial);
        }
        for (int a = 0; a < m && pass; ++a)
            for (int b = 0; b < m && pass; ++b)
                if (n[std::size_t(a)] > n[std::size_t(b)] &&
                    !(w.w[std::size_t(a)] < w.w[std::size_t(b)])) {
                    pass = false;
                    why = "monotonicity violated at trial " + std::to_string(trial);
                }
    }
    char buf[200];
    std::snprintf(buf, sizeof buf, "1000 draws, sum within 1e-9, strict monotonicity%s%s, %.2f s",
                  why.empty() ? "" : "; ", why.c_str(), seconds_since(t0));
    verdict(3, pass && seconds_since(t0) < 5.0, buf);
}

// --- criterion 4: gradient suite --------------------------------------------

void criterion_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cases = run_gradcheck_suite(1234, 1e-5, 20);
    double worst = 0.0;
    std::string worst_name;
    for (const auto& c : cases)
        if (c.max_rel_err > worst) {
            worst = c.max_rel_err;
            worst_name = c.name;
        }
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "%zu op families + full-model loss, worst %.2e in '%s' (tol 1e-4), %.1f s",
                  cases.size(), worst, worst_name.c_str(), seconds_since(t0));
    verdict(4, worst <= 1e-4 && seconds_since(t0) < 300.0, buf);
}

// --- criterion 5: loss algebra ----------------------------------------------

void criterion_loss_algebra() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(55);
    bool pass = true;
    double worst_eq = 0.0, worst_grad = 0.0;
    for (int trial = 0; trial < 25; ++trial) {
        const int m = 2 + int(rng.next_below(5));
        const int h = 3 + int(rng.next_below(4)), w = 3 + int(rng.next_below(4));
        LabelRaster labels;
        labels.height = h;
        labels.width = w;
        labels.labels.resize(std::size_t(h) * std::size_t(w));
        std::vector<std::uint8_t> mask(labels.labels.size(), 0);
        for (std::size_t i = 0; i < labels.labels.size(); ++i) {
            labels.labels[i] = std::uint16_t(1 + rng.next_below(std::uint64_t(m)));
            mask[i] = rng.next_below(3) != 0 ? 1 : 0;
        }
        mask[0] = 1;
        Tensor<double> logits = oracle::random_tensor<double>(rng, {m, h, w}, -4.0, 4.0);

        // uniform weights equal plain masked cross-entropy
        const double ours =
            weighted_masked_loss(logits, labels, mask, ClassWeights::uniform(m)).item();
        const double ref = oracle::plain_masked_ce(logits, labels, mask);
        worst_eq = std::max(worst_eq, std::fabs(ours - ref));

        // closed-form logit gradient
        std::vector<long long> counts;
        for (int c = 0; c < m; ++c) counts.push_back(1 + (long long)rng.next_below(500));
        const ClassWeights cw = class_weights(counts, 0.995);
        Tape<double> tape;
        Tensor<double> watched = tape.watch(logits);
        Gradients<double> grads = tape.backward(weighted_masked_loss(watched, labels, mask, cw));
        const Tensor<double>& g = grads.at(watched);
        long long k = 0;
        for (auto v : mask) k += v;
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                const bool masked = mask[std::size_t(i * w + j)] != 0;
                double se = 0.0;
                for (int c = 0; c < m; ++c) se += std::exp(logits.at({c, i, j}));
                for (int c = 0; c < m; ++c) {
                    const double expect =
                        masked ? cw.w[std::size_t(labels.at(i, j) - 1)] / double(k) *
                                     (std::exp(logits.at({c, i, j})) / se -
                                      (c == labels.at(i, j) - 1 ? 1.0 : 0.0))
                               : 0.0;
                    worst_grad = std::max(worst_grad, std::fabs(g.at({c, i, j}) - expect));
                }
            }
    }
    pass = worst_eq <= 1e-12 && worst_grad <= 1e-10;
    char buf[180];
    std::snprintf(buf, sizeof buf,
                  "uniform-vs-plain gap %.2e (tol 1e-12), closed-form gradient gap %.2e (tol 1e-10), %.2f s",
                  worst_eq, worst_grad, seconds_since(t0));
    verdict(5, pass && seconds_since(t0) < 10.0, buf);
}

// --- criterion 6: learning-rate schedule -------------------------------------

void criterion_schedule() {
    const auto t0 = std::chrono::steady_clock::now();
    OptimState<float> opt;
    bool pass = lr_at(0, opt) == 0.005;
    // independent evaluation through exp/log
    const double v500 = 0.005 * std::exp(0.8 * std::log(1.0 - 500.0 / 1000.0));
    const double v600 = 0.005 * std::exp(0.8 * std::log(1.0 - 600.0 / 1000.0));
    pass = pass && std::fabs(lr_at(500, opt) - v500) <= 1e-12;
    pass = pass && std::fabs(lr_at(600, opt) - v600) <= 1e-12;
    for (long long i = 1; i < 1000; ++i) pass = pass && lr_at(i, opt) < lr_at(i - 1, opt);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "lr(0)=%.6f, lr(500)=%.7f, lr(600)=%.7f, strictly decreasing over 0..999, %.3f s",
                  lr_at(0, opt), lr_at(500, opt), lr_at(600, opt), seconds_since(t0));
    verdict(6, pass && seconds_since(t0) < 1.0, buf);
}

// --- criteria 7, 8, 10: desk-scale end-to-end runs ---------------------------

// configuration of the pinned desk-scale run; only values the criterion
// leaves free are chosen here, sized for a single CPU core
RunConfig desk_config() {
    RunConfig cfg;
    cfg.seed = 7;
    cfg.lambda = 0.05;
    cfg.min_train = 5;
    cfg.alpha_strata = 5;
    cfg.beta = 10;
    cfg.delta = 0.999;
    cfg.time_steps = 8;
    cfg.cell_kernel = 5;
    cfg.hidden_channels = 16;
    cfg.reduction_ratio = 16;
    cfg.spatial_kernel = 7;
    cfg.gn_groups = 4;
    cfg.skip_channels = 64;
    cfg.encoder_channels = {32, 48, 64, 96};
    cfg.epochs = 150;
    cfg.checkpoint_every = 0;
    return cfg;
}

struct DeskRun {
    double train_accuracy = 0.0;
    std::vector<double> test_accuracy;  // per class
    double seconds = 0.0;
    fs::path dir;
};

DeskRun desk_run(const RunConfig& cfg, const HsiCube& raw, const LabelRaster& labels,
                 const std::string& tag) {
    DeskRun out;
    out.dir = fs::temp_directory_path() / ("ssdgl_acceptance_" + std::to_string(::getpid())) / tag;
    fs::create_directories(out.dir);

    const auto t0 = std::chrono::steady_clock::now();
    const PaddedCube padded = pad_for_network(normalize(raw));
    TrainResult res = train(padded.cube, labels, cfg);

    RunConfig stamped = cfg;
    stamped.bands = raw.bands;
    stamped.num_classes = res.split.num_classes;
    save_params(res.params, stamped.serialize(), (out.dir / "model.ssdm").string());
    res.log.write((out.dir / "train.log").string());

    NetConfig net = stamped.net_config();
    const LabelRaster pred = run_prediction(raw, res.params, net);
    save_labels(pred, (out.dir / "pred.hsig").string());
    render_map(pred, Palette::for_classes(net.num_classes), (out.dir / "map.ppm").string());
    out.seconds = seconds_since(t0);

    long long train_total = 0, train_hit = 0;
    for (std::size_t c = 0; c < res.split.train_by_class.size(); ++c)
        for (int idx : res.split.train_by_class[c]) {
            ++train_total;
            if (pred.labels[std::size_t(idx)] == c + 1) ++train_hit;
        }
    out.train_accuracy = double(train_hit) / double(train_total);
    const MetricsReport rep = report(confusion(pred, labels, res.split.test_indices));
    out.test_accuracy = rep.per_class_accuracy;
    return out;
}

void criteria_desk_scale() {
    auto [cube, labels] = synth_cube(7, 64, 64, 32, 4, {0.45, 0.45, 0.08, 0.02});
    const RunConfig cfg = desk_config();

    DeskRun a, b, c;
    std::string err;
    try {
        a = desk_run(cfg, cube, labels, "run_a");
        b = desk_run(cfg, cube, labels, "run_b");
        RunConfig ablated = cfg;
        ablated.use_hbwl = false;
        c = desk_run(ablated, cube, labels, "run_c");
    } catch (const std::exception& e) {
        err = e.what();
        verdict(7, false, "desk run threw: " + err);
        verdict(8, false, "desk run threw: " + err);
        verdict(10, false, "desk run threw: " + err);
        return;
    }

    {
        const double minority = a.test_accuracy.back();
        const bool pass = a.train_accuracy >= 0.99 && minority >= 0.90 && a.seconds <= 900.0;
        char buf[220];
        std::snprintf(buf, sizeof buf,
                      "train acc %.2f%% (need >=99%%), minority test acc %.2f%% (need >=90%%), %d epochs, %.0f s (limit 900)",
                      a.train_accuracy * 100.0, minority * 100.0, cfg.epochs, a.seconds);
        verdict(7, pass, buf);
    }
    {
        const double full = a.test_accuracy.back(), ablated = c.test_accuracy.back();
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "minority test acc: balanced+weighted %.2f%% >= unweighted single-stratum %.2f%%",
                      full * 100.0, ablated * 100.0);
        verdict(8, full >= ablated, buf);
    }
    {
        const bool model_eq = slurp((a.dir / "model.ssdm").string()) == slurp((b.dir / "model.ssdm").string());
        const bool log_eq = slurp((a.dir / "train.log").string()) == slurp((b.dir / "train.log").string());
        const bool map_eq = slurp((a.dir / "map.ppm").string()) == slurp((b.dir / "map.ppm").string());
        const bool pred_eq = slurp((a.dir / "pred.hsig").string()) == slurp((b.dir / "pred.hsig").string());
        char buf[160];
        std::snprintf(buf, sizeof buf, "byte-identical second run: model %s, log %s, map %s, labels %s",
                      model_eq ? "yes" : "NO", log_eq ? "yes" : "NO", map_eq ? "yes" : "NO",
                      pred_eq ? "yes" : "NO");
        verdict(10, model_eq && log_eq && map_eq && pred_eq, buf);
    }
    fs::remove_all(fs::temp_directory_path() / ("ssdgl_acceptance_" + std::to_string(::getpid())));
}

}  // namespace

int main() {
    std::printf("acceptance suite\n----------------\n");
    criterion_split_oracles();
    criterion_class_weights();
    criterion_gradients();
    criterion_loss_algebra();
    criterion_schedule();
    criteria_desk_scale();
    info(9, "headline full-dataset accuracies (e.g. 99.63% OA on the 16-class Indian Pines scene) "
            "need the original data and GPU-scale budgets; they are not gated here. The optional "
            "stretch run on user-converted data (target OA >= 90%) is documented in the README and "
            "never asserted.");
    std::printf("----------------\n%s (%d failing)\n",
                g_failures == 0 ? "ALL GATING CRITERIA PASS" : "FAILURES", g_failures);
    return g_failures == 0 ? 0 : 1;
}
