#pragma once

#include <string>
#include <vector>

#include "ssdgl/hsi_data.hpp"

namespace ssdgl {

/// Counts with rows = true class and columns = predicted class; one extra
/// trailing column collects pixels the prediction left unassigned (label 0),
/// flagged rather than crashing.
struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<long long> counts;  // M x (M+1), row-major
    long long total = 0;
    bool has_unassigned = false;

    long long at(int true_class, int pred_class) const {  // 1-based classes
        return counts[std::size_t(true_class - 1) * std::size_t(num_classes + 1) + std::size_t(pred_class - 1)];
    }
    long long unassigned(int true_class) const {
        return counts[std::size_t(true_class - 1) * std::size_t(num_classes + 1) + std::size_t(num_classes)];
    }
    long long row_sum(int true_class) const {
        long long s = 0;
        for (int p = 0; p <= num_classes; ++p)
            s += counts[std::size_t(true_class - 1) * std::size_t(num_classes + 1) + std::size_t(p)];
        return s;
    }

    std::string to_csv() const;
};

struct MetricsReport {
    long long total = 0;
    double overall_accuracy = 0.0;
    double average_accuracy = 0.0;
    double kappa = 0.0;
    bool kappa_degenerate = false;
    std::vector<double> per_class_accuracy;  // -1 for classes absent from the eval set
    std::vector<long long> per_class_count;

    std::string to_text() const;
};

/// Accumulate prediction-vs-truth counts over `eval_indices` (flat row-major
/// positions). Every eval pixel must carry a nonzero truth label.
ConfusionMatrix confusion(const LabelRaster& pred, const LabelRaster& truth,
                          const std::vector<int>& eval_indices);

/// OA = trace/N, per-class accuracy = diagonal/rowsum (rows without truth
/// pixels are excluded from AA), Kappa = (OA - p_e)/(1 - p_e) with
/// p_e = sum_k rowsum_k * colsum_k / N^2; p_e = 1 reports Kappa 0, flagged.
MetricsReport report(const ConfusionMatrix& cm);

}  // namespace ssdgl
