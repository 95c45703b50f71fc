#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ssdgl/hsi_data.hpp"
#include "ssdgl/network.hpp"
#include "ssdgl/run_config.hpp"
#include "ssdgl/sampler.hpp"

namespace ssdgl {

/// Momentum SGD with decoupled multiplicative weight decay and polynomial
/// learning-rate decay.
template <class Scalar>
struct OptimState {
    double lr0 = 0.005;
    double momentum = 0.9;
    double weight_decay = 0.001;
    double power = 0.8;
    int max_iter = 1000;
    std::vector<AlignedVec<Scalar>> velocity;  // mirrors the parameter list
    int epoch = 0;
    long long iteration = 0;

    static OptimState from_config(const RunConfig& cfg) {
        OptimState o;
        o.lr0 = cfg.lr;
        o.momentum = cfg.momentum;
        o.weight_decay = cfg.weight_decay;
        o.power = cfg.power;
        o.max_iter = cfg.max_iter;
        return o;
    }
};

/// lr0 * (1 - iter/max_iter)^power; iterations at or past max_iter are
/// clamped to the max_iter-1 value so the factor never reaches zero.
template <class Scalar>
double lr_at(long long iter, const OptimState<Scalar>& opt) {
    if (iter < 0) throw ConfigError("lr_at: negative iteration");
    if (iter >= opt.max_iter) iter = opt.max_iter - 1;
    return opt.lr0 * std::pow(1.0 - double(iter) / double(opt.max_iter), opt.power);
}

/// Weighted masked softmax cross-entropy over the class axis:
///   L = -(1/K) * sum_{mask=1} w[label] * log softmax(logits)[label]
/// with K the number of masked pixels. Logit planes may be larger than the
/// raster (padded input); masked pixels always lie in the original extent.
template <class Scalar>
Tensor<Scalar> weighted_masked_loss(const Tensor<Scalar>& logits, const LabelRaster& labels,
                                    const std::vector<std::uint8_t>& mask, const ClassWeights& weights) {
    if (logits.rank() != 3) throw ShapeError("weighted_masked_loss: logits must be [M,H,W]");
    const int M = logits.dim(0), Hp = logits.dim(1), Wp = logits.dim(2);
    const int H = labels.height, W = labels.width;
    if (Hp < H || Wp < W)
        throw ShapeError("weighted_masked_loss: logit planes " + to_string(logits.shape()) +
                         " smaller than label raster " + std::to_string(H) + "x" + std::to_string(W));
    if (int(weights.w.size()) != M)
        throw ShapeError("weighted_masked_loss: " + std::to_string(weights.w.size()) +
                         " class weights for " + std::to_string(M) + " logit channels");
    if (mask.size() != std::size_t(H) * std::size_t(W))
        throw ShapeError("weighted_masked_loss: mask size does not match the raster");

    auto picks = std::make_shared<std::vector<std::pair<long long, int>>>();  // (plane offset, label)
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            if (!mask[std::size_t(i) * W + j]) continue;
            const int y = labels.at(i, j);
            if (y == 0)
                throw ConfigError("weighted_masked_loss: mask marks unlabeled pixel (" + std::to_string(i) +
                                  "," + std::to_string(j) + "); schedule corrupt");
            if (y > M)
                throw ShapeError("weighted_masked_loss: label " + std::to_string(y) + " exceeds " +
                                 std::to_string(M) + " classes");
            picks->emplace_back((long long)i * Wp + j, y);
        }
    if (picks->empty()) throw ConfigError("weighted_masked_loss: empty mask");

    const long long K = (long long)picks->size();
    const long long plane = (long long)Hp * Wp;
    const Scalar* lv = logits.data();
    auto wv = std::make_shared<std::vector<double>>(weights.w);

    double acc = 0.0;
    for (const auto& [off, y] : *picks) {
        double best = double(lv[off]);
        for (int c = 1; c < M; ++c) best = std::max(best, double(lv[c * plane + off]));
        double se = 0.0;
        for (int c = 0; c < M; ++c) se += std::exp(double(lv[c * plane + off]) - best);
        const double lse = best + std::log(se);
        acc += (*wv)[std::size_t(y - 1)] * (lse - double(lv[(long long)(y - 1) * plane + off]));
    }
    Tensor<Scalar> loss = Tensor<Scalar>::scalar_value(Scalar(acc / double(K)));

    if (Tape<Scalar>* tp = logits.tape()) {
        tp->attach(loss);
        const int ln = logits.node(), on = loss.node();
        auto lb = logits.buffer();
        tp->push_step([tp, ln, on, lb, picks, wv, M, plane, K] {
            const Scalar* go = tp->grad_read(on);
            if (!go) return;
            const double g0 = double(go[0]);
            auto& gl = tp->grad_accum(ln);
            const Scalar* lv = lb->data();
            for (const auto& [off, y] : *picks) {
                double best = double(lv[off]);
                for (int c = 1; c < M; ++c) best = std::max(best, double(lv[c * plane + off]));
                double se = 0.0;
                for (int c = 0; c < M; ++c) se += std::exp(double(lv[c * plane + off]) - best);
                const double scale = g0 * (*wv)[std::size_t(y - 1)] / double(K);
                for (int c = 0; c < M; ++c) {
                    const double p = std::exp(double(lv[c * plane + off]) - best) / se;
                    const double onehot = (c == y - 1) ? 1.0 : 0.0;
                    gl[std::size_t(c * plane + off)] += Scalar(scale * (p - onehot));
                }
            }
        });
    }
    return loss;
}

/// v <- momentum*v + grad;  theta <- theta*(1 - lr*wd) - lr*v.
/// Applied uniformly to every parameter; arithmetic in double.
template <class Scalar>
void sgd_step(ParamStore<Scalar>& params, const Gradients<Scalar>& grads,
              const ParamStore<Scalar>& watched, OptimState<Scalar>& opt, double lr) {
    if (opt.velocity.empty()) {
        opt.velocity.resize(params.count());
        for (std::size_t i = 0; i < params.count(); ++i)
            opt.velocity[i].assign(std::size_t(params.items()[i].second.size()), Scalar(0));
    }
    if (opt.velocity.size() != params.count())
        throw ShapeError("sgd_step: optimizer state does not match the parameter list");
    const double decay = 1.0 - lr * opt.weight_decay;
    for (std::size_t i = 0; i < params.count(); ++i) {
        Tensor<Scalar>& theta = params.items()[i].second;
        const Tensor<Scalar>& g = grads.at(watched.items()[i].second);
        if (g.shape() != theta.shape())
            throw ShapeError("sgd_step: gradient shape " + to_string(g.shape()) +
                             " mismatches parameter " + to_string(theta.shape()));
        auto& v = opt.velocity[i];
        Scalar* tv = theta.raw();
        const Scalar* gv = g.data();
        for (long long e = 0; e < theta.size(); ++e) {
            const double vel = opt.momentum * double(v[std::size_t(e)]) + double(gv[e]);
            v[std::size_t(e)] = Scalar(vel);
            tv[e] = Scalar(double(tv[e]) * decay - lr * vel);
        }
    }
    ++opt.iteration;
}

struct TrainRecord {
    int epoch = 0;
    int stratum = 0;
    double loss = 0.0;
    double lr = 0.0;
    double seconds = 0.0;  // wall time; kept in memory, not serialized
};

/// Append-only per-iteration log. The serialized form holds only the
/// deterministic columns so that identical runs write identical bytes.
struct TrainLog {
    std::vector<TrainRecord> records;

    void append(TrainRecord r) { records.push_back(r); }

    std::string serialize() const {
        std::string out = "# epoch\tstratum\tloss\tlr\n";
        char buf[128];
        for (const TrainRecord& r : records) {
            std::snprintf(buf, sizeof buf, "%d\t%d\t%.17g\t%.17g\n", r.epoch, r.stratum, r.loss, r.lr);
            out += buf;
        }
        return out;
    }

    void write(const std::string& path) const {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError("cannot open '" + path + "' for writing");
        out << serialize();
        if (!out) throw IoError("write failed on '" + path + "'");
    }
};

struct TrainOptions {
    std::string checkpoint_dir;  // empty = no checkpoints
    int checkpoint_every = 0;    // epochs; 0 = only the implicit final state
    std::function<void(int epoch, double mean_loss)> on_epoch;
};

struct TrainResult {
    ParamStore<float> params;
    TrainLog log;
    SampleSplit split;
    ClassWeights weights;
    int epochs_run = 0;
    bool early_stopped = false;
};

/// Algorithm: one epoch sweeps the alpha strata in order; each iteration is
/// a full-image forward pass, the weighted masked loss on that stratum's
/// mask, a backward sweep and one SGD step. The learning rate is indexed by
/// epoch. Deterministic given (config, inputs).
inline TrainResult train(const HsiCube& cube, const LabelRaster& labels, const RunConfig& cfg,
                         const TrainOptions& opts = {}) {
    cfg.validate();
    if (cube.height % 16 != 0 || cube.width % 16 != 0)
        throw ShapeError("train: cube must be padded to multiples of 16 first");
    if (labels.height > cube.height || labels.width > cube.width)
        throw ShapeError("train: label raster larger than the cube");

    TrainResult res;
    res.split = cfg.train_count > 0 ? split_count(labels, cfg.train_count, cfg.split_seed())
                                    : split_ratio(labels, cfg.lambda, cfg.min_train, cfg.split_seed());
    const int M = res.split.num_classes;
    const int alpha = cfg.use_hbwl ? cfg.alpha_strata : 1;
    HierarchicalSchedule schedule = build_schedule(res.split, alpha, cfg.beta, cfg.schedule_seed());
    if (cfg.use_hbwl) {
        std::vector<long long> counts;
        for (int c : res.split.train_counts()) counts.push_back(c);
        res.weights = class_weights(counts, cfg.delta);
    } else {
        res.weights = ClassWeights::uniform(M);
    }

    NetConfig net = cfg.net_config();
    net.num_classes = M;
    net.in_bands = cube.bands;
    res.params = init_params<float>(net, cfg.init_seed());

    OptimState<float> opt = OptimState<float>::from_config(cfg);
    const Tensor<float> input = to_tensor<float>(cube);

    int last_checkpoint_epoch = -1;
    auto checkpoint = [&](int epoch) {
        if (opts.checkpoint_dir.empty()) return;
        char name[64];
        std::snprintf(name, sizeof name, "/ckpt_epoch%04d.ssdm", epoch);
        RunConfig stamped = cfg;
        stamped.bands = cube.bands;
        stamped.num_classes = M;
        save_params(res.params, stamped.serialize(), opts.checkpoint_dir + name);
        last_checkpoint_epoch = epoch;
    };

    double prev_mean = 0.0;
    int flat_epochs = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        opt.epoch = epoch;
        const double eta = lr_at(epoch, opt);
        double epoch_loss = 0.0;
        for (int s = 0; s < alpha; ++s) {
            const auto t0 = std::chrono::steady_clock::now();
            Tape<float> tape;
            ParamStore<float> watched = res.params.watched(tape);
            Tensor<float> logits = ssdgl_forward(input, watched, net);
            Tensor<float> loss = weighted_masked_loss(logits, labels, schedule.mask_of(s), res.weights);
            const double lv = double(loss.item());
            if (!std::isfinite(lv)) {
                const std::string at = last_checkpoint_epoch >= 0
                                           ? "last good checkpoint is epoch " + std::to_string(last_checkpoint_epoch)
                                           : "no checkpoint was written";
                throw TrainAbort("non-finite loss at epoch " + std::to_string(epoch) + " stratum " +
                                 std::to_string(s) + "; " + at);
            }
            Gradients<float> grads = tape.backward(loss);
            sgd_step(res.params, grads, watched, opt, eta);
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            res.log.append({epoch, s, lv, eta, secs});
            epoch_loss += lv;
        }
        const double mean = epoch_loss / double(alpha);
        res.epochs_run = epoch + 1;
        if (opts.on_epoch) opts.on_epoch(epoch, mean);
        if (opts.checkpoint_every > 0 && (epoch + 1) % opts.checkpoint_every == 0) checkpoint(epoch);
        if (cfg.early_stop) {
            if (epoch > 0 && std::fabs(mean - prev_mean) < 1e-6) {
                if (++flat_epochs >= 20) {
                    res.early_stopped = true;
                    break;
                }
            } else {
                flat_epochs = 0;
            }
            prev_mean = mean;
        }
    }
    return res;
}

}  // namespace ssdgl
