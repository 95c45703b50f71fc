#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssdgl/network.hpp"

namespace ssdgl {

/// Every knob of a run, parsed from plain `key = value` text. Unknown keys
/// are rejected; all values are range-checked before any work starts.
struct RunConfig {
    std::uint64_t seed = 0;
    double lambda = 0.05;  // train ratio; used when train_count == 0
    int train_count = 0;   // fixed per-class train count; 0 = ratio mode
    int min_train = 5;
    int alpha_strata = 10;
    int beta = 10;
    double delta = 0.999;
    int time_steps = 8;
    int cell_kernel = 5;
    int hidden_channels = 64;
    int reduction_ratio = 16;
    int spatial_kernel = 7;
    int gn_groups = 4;
    int skip_channels = 128;
    std::vector<int> encoder_channels = {64, 96, 128, 192};
    double lr = 0.005;
    double momentum = 0.9;
    double weight_decay = 0.001;
    double power = 0.8;
    int max_iter = 1000;
    int epochs = 600;
    int checkpoint_every = 100;
    bool early_stop = false;
    bool use_gcl = true;
    bool use_gjam = true;
    bool use_hbwl = true;
    int bands = 0;        // stamped when a model is trained
    int num_classes = 0;  // stamped when a model is trained

    bool operator==(const RunConfig&) const = default;

    static RunConfig parse_text(const std::string& text);
    static RunConfig parse_file(const std::string& path);
    std::string serialize() const;
    void validate() const;

    NetConfig net_config() const;

    // sub-seeds so the split, the schedule and the initialization draw from
    // independent streams; shared by train / sample / evaluate
    std::uint64_t split_seed() const { return seed; }
    std::uint64_t schedule_seed() const { return seed + 0x100000001ULL; }
    std::uint64_t init_seed() const { return seed + 0x200000002ULL; }
};

}  // namespace ssdgl
