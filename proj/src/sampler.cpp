#include "ssdgl/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "ssdgl/rng.hpp"

namespace ssdgl {

namespace {

std::vector<std::vector<int>> indices_by_class(const LabelRaster& labels, int& num_classes) {
    num_classes = labels.max_label();
    if (num_classes < 2) throw ConfigError("split: no labeled pixels (need at least 2 classes)");
    std::vector<std::vector<int>> pools(static_cast<std::size_t>(num_classes));
    const long long n = (long long)labels.height * labels.width;
    for (long long i = 0; i < n; ++i) {
        const int v = labels.labels[std::size_t(i)];
        if (v > 0) pools[std::size_t(v - 1)].push_back(int(i));
    }
    for (int c = 0; c < num_classes; ++c)
        if (pools[std::size_t(c)].empty())
            throw ConfigError("split: class " + std::to_string(c + 1) + " has no labeled pixels");
    return pools;
}

SampleSplit split_impl(const LabelRaster& labels, double lambda, int fixed_count, int min_train,
                       std::uint64_t seed) {
    SampleSplit out;
    out.height = labels.height;
    out.width = labels.width;
    out.lambda = lambda;
    out.fixed_count = fixed_count;
    out.min_train = min_train;
    auto pools = indices_by_class(labels, out.num_classes);
    out.train_by_class.resize(std::size_t(out.num_classes));

    Rng rng(seed);
    for (int c = 0; c < out.num_classes; ++c) {
        auto& pool = pools[std::size_t(c)];
        const long long n = (long long)pool.size();
        long long take;
        if (fixed_count > 0)
            take = std::min<long long>(fixed_count, n);
        else
            take = std::min<long long>(n, std::max<long long>(min_train, (long long)std::ceil(double(n) * lambda)));
        rng.shuffle(pool);
        auto& train = out.train_by_class[std::size_t(c)];
        train.assign(pool.begin(), pool.begin() + take);
        std::sort(train.begin(), train.end());
        std::sort(pool.begin() + take, pool.end());
        out.test_indices.insert(out.test_indices.end(), pool.begin() + take, pool.end());
    }
    std::sort(out.test_indices.begin(), out.test_indices.end());
    return out;
}

}  // namespace

SampleSplit split_ratio(const LabelRaster& labels, double lambda, int min_train, std::uint64_t seed) {
    if (!(lambda > 0.0) || lambda > 1.0)
        throw ConfigError("split: training ratio " + std::to_string(lambda) + " outside (0,1]");
    if (min_train < 0) throw ConfigError("split: min_train must be >= 0");
    return split_impl(labels, lambda, 0, min_train, seed);
}

SampleSplit split_count(const LabelRaster& labels, int fixed_count, std::uint64_t seed) {
    if (fixed_count < 1) throw ConfigError("split: fixed train count must be >= 1");
    return split_impl(labels, 0.0, fixed_count, 0, seed);
}

HierarchicalSchedule build_schedule(const SampleSplit& split, int alpha, int beta, std::uint64_t seed) {
    if (alpha < 1 || beta < 1) throw ConfigError("schedule: alpha and beta must be >= 1");
    for (int c = 0; c < split.num_classes; ++c)
        if (split.train_by_class[std::size_t(c)].empty())
            throw ConfigError("schedule: class " + std::to_string(c + 1) + " has an empty train pool");

    HierarchicalSchedule sched;
    sched.alpha = alpha;
    sched.beta = beta;
    sched.height = split.height;
    sched.width = split.width;
    sched.masks.resize(std::size_t(alpha));
    sched.draws.resize(std::size_t(alpha));

    Rng rng(seed);
    const std::size_t cells = std::size_t(split.height) * std::size_t(split.width);
    for (int s = 0; s < alpha; ++s) {
        auto& mask = sched.masks[std::size_t(s)];
        mask.assign(cells, 0);
        auto& per_class = sched.draws[std::size_t(s)];
        per_class.resize(std::size_t(split.num_classes));
        for (int c = 0; c < split.num_classes; ++c) {
            std::vector<int> pool = split.train_by_class[std::size_t(c)];
            rng.shuffle(pool);
            const std::size_t take = std::min<std::size_t>(std::size_t(beta), pool.size());
            pool.resize(take);
            for (int idx : pool) mask[std::size_t(idx)] = 1;
            per_class[std::size_t(c)] = std::move(pool);
        }
    }
    return sched;
}

ClassWeights class_weights(const std::vector<long long>& class_train_counts, double delta) {
    if (!(delta > 0.0) || !(delta < 1.0))
        throw ConfigError("class_weights: delta " + std::to_string(delta) + " outside (0,1)");
    const std::size_t M = class_train_counts.size();
    if (M == 0) throw ConfigError("class_weights: no classes");
    for (long long n : class_train_counts)
        if (n < 1) throw ConfigError("class_weights: class counts must be >= 1");

    ClassWeights cw;
    cw.delta = delta;
    cw.m.resize(M);
    cw.q.resize(M);
    cw.w.resize(M);
    bool all_equal = true;
    for (std::size_t i = 0; i < M; ++i) {
        cw.m[i] = 1.0 - std::pow(delta, double(class_train_counts[i]));
        cw.q[i] = (1.0 - delta) / cw.m[i];
        all_equal = all_equal && class_train_counts[i] == class_train_counts[0];
    }
    if (all_equal) {
        // symmetric case is exactly uniform; avoids rounding drift in the sum
        std::fill(cw.w.begin(), cw.w.end(), 1.0);
        return cw;
    }
    double qsum = 0.0;
    for (double v : cw.q) qsum += v;
    for (std::size_t i = 0; i < M; ++i) cw.w[i] = cw.q[i] / qsum * double(M);
    return cw;
}

std::vector<double> sampling_prob(const SamplingPolicy& policy) {
    if (policy.exponent < 0.0 || policy.exponent > 1.0)
        throw ConfigError("sampling_prob: exponent outside [0,1]");
    if (policy.class_sizes.empty()) throw ConfigError("sampling_prob: no classes");
    std::vector<double> p(policy.class_sizes.size());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (policy.class_sizes[i] < 1) throw ConfigError("sampling_prob: class sizes must be >= 1");
        p[i] = std::pow(double(policy.class_sizes[i]), policy.exponent);
        total += p[i];
    }
    for (double& v : p) v /= total;
    return p;
}

}  // namespace ssdgl
