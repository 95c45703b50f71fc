#pragma once

#include <cstdint>
#include <vector>

#include "ssdgl/errors.hpp"
#include "ssdgl/hsi_data.hpp"

namespace ssdgl {

/// Per-class train/test partition of the labeled pixels. Indices are flat
/// row-major positions into the original H x W grid.
struct SampleSplit {
    int height = 0;
    int width = 0;
    int num_classes = 0;
    double lambda = 0.0;   // ratio mode; 0 when count mode was used
    int fixed_count = 0;   // count mode; 0 when ratio mode was used
    int min_train = 0;
    std::vector<std::vector<int>> train_by_class;  // [class-1] -> sorted indices
    std::vector<int> test_indices;                 // sorted

    long long total_train() const {
        long long n = 0;
        for (const auto& v : train_by_class) n += (long long)v.size();
        return n;
    }
    std::vector<int> train_counts() const {
        std::vector<int> c;
        for (const auto& v : train_by_class) c.push_back(int(v.size()));
        return c;
    }
};

/// Sequence of stratified binary mask matrices; stratum s marks up to beta
/// training pixels of every class.
struct HierarchicalSchedule {
    int alpha = 0;
    int beta = 0;
    int height = 0;
    int width = 0;
    std::vector<std::vector<std::uint8_t>> masks;      // [stratum] -> H*W binary
    std::vector<std::vector<std::vector<int>>> draws;  // [stratum][class-1] -> drawn indices

    const std::vector<std::uint8_t>& mask_of(int stratum) const {
        if (stratum < 0 || stratum >= alpha)
            throw ConfigError("mask_of: stratum " + std::to_string(stratum) + " outside [0," +
                              std::to_string(alpha) + ")");
        return masks[std::size_t(stratum)];
    }
};

/// Effective-number class weights: m_i = 1 - delta^{n_i},
/// q_i = (1 - delta)/m_i, w_j = q_j / sum_i q_i * M.
struct ClassWeights {
    double delta = 0.0;
    std::vector<double> m;
    std::vector<double> q;
    std::vector<double> w;

    static ClassWeights uniform(int num_classes) {
        ClassWeights cw;
        cw.delta = 0.0;
        cw.m.assign(std::size_t(num_classes), 1.0);
        cw.q.assign(std::size_t(num_classes), 1.0);
        cw.w.assign(std::size_t(num_classes), 1.0);
        return cw;
    }
};

/// Sampling-probability family p_j = n_j^q / sum_i n_i^q.
struct SamplingPolicy {
    double exponent = 1.0;  // q in [0,1]
    std::vector<long long> class_sizes;
};

/// Ratio mode: per-class train count = max(min_train, ceil(n_i * lambda)),
/// capped at n_i. Selection within a class is a seeded uniform shuffle.
SampleSplit split_ratio(const LabelRaster& labels, double lambda, int min_train, std::uint64_t seed);

/// Count mode: per-class train count = min(fixed_count, n_i).
SampleSplit split_count(const LabelRaster& labels, int fixed_count, std::uint64_t seed);

/// alpha strata; per class and stratum a fresh seeded shuffle of the class
/// train pool, drawing min(beta, pool size) pixels without replacement
/// within the stratum.
HierarchicalSchedule build_schedule(const SampleSplit& split, int alpha, int beta, std::uint64_t seed);

ClassWeights class_weights(const std::vector<long long>& class_train_counts, double delta);

std::vector<double> sampling_prob(const SamplingPolicy& policy);

}  // namespace ssdgl
