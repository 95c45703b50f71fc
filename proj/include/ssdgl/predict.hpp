#pragma once

#include "ssdgl/hsi_data.hpp"
#include "ssdgl/network.hpp"

namespace ssdgl {

/// Per-pixel argmax over class logits, restricted to the original
/// (pre-padding) extent. Ties resolve to the lowest class index; output
/// labels are 1..M, never 0.
template <class Scalar>
LabelRaster predict_labels(const Tensor<Scalar>& logits, int orig_height, int orig_width) {
    if (logits.rank() != 3) throw ShapeError("predict_labels: logits must be [M,H,W]");
    const int M = logits.dim(0), Hp = logits.dim(1), Wp = logits.dim(2);
    if (orig_height > Hp || orig_width > Wp)
        throw ShapeError("predict_labels: original extent exceeds the logit planes");
    LabelRaster out;
    out.height = orig_height;
    out.width = orig_width;
    out.labels.resize(std::size_t(orig_height) * std::size_t(orig_width));
    const long long plane = (long long)Hp * Wp;
    const Scalar* lv = logits.data();
    for (int i = 0; i < orig_height; ++i)
        for (int j = 0; j < orig_width; ++j) {
            const long long off = (long long)i * Wp + j;
            int best = 0;
            Scalar top = lv[off];
            for (int c = 1; c < M; ++c)
                if (lv[c * plane + off] > top) {
                    top = lv[c * plane + off];
                    best = c;
                }
            out.labels[std::size_t(i) * std::size_t(orig_width) + std::size_t(j)] = std::uint16_t(best + 1);
        }
    return out;
}

/// Full inference pipeline on a raw cube: normalize, pad, forward, argmax,
/// crop back to the original extent.
inline LabelRaster run_prediction(const HsiCube& raw, const ParamStore<float>& params,
                                  const NetConfig& cfg) {
    if (raw.bands != cfg.in_bands)
        throw ConfigError("predict: cube has " + std::to_string(raw.bands) + " bands but the model was trained on " +
                          std::to_string(cfg.in_bands));
    const PaddedCube padded = pad_for_network(normalize(raw));
    const Tensor<float> input = to_tensor<float>(padded.cube);
    const Tensor<float> logits = ssdgl_forward(input, params, cfg);
    return predict_labels(logits, padded.orig_height, padded.orig_width);
}

}  // namespace ssdgl
