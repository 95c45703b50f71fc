#include "ssdgl/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "ssdgl/errors.hpp"

namespace ssdgl {

ConfusionMatrix confusion(const LabelRaster& pred, const LabelRaster& truth,
                          const std::vector<int>& eval_indices) {
    if (pred.height != truth.height || pred.width != truth.width)
        throw ShapeError("confusion: prediction and truth rasters differ in size");
    if (eval_indices.empty()) throw ConfigError("confusion: empty evaluation set");

    int m = 0;
    for (int idx : eval_indices) {
        if (idx < 0 || idx >= truth.height * truth.width)
            throw ShapeError("confusion: eval index out of range");
        const int t = truth.labels[std::size_t(idx)];
        if (t == 0) throw ConfigError("confusion: eval pixel " + std::to_string(idx) + " has no truth label");
        m = std::max({m, t, int(pred.labels[std::size_t(idx)])});
    }

    ConfusionMatrix cm;
    cm.num_classes = m;
    cm.counts.assign(std::size_t(m) * std::size_t(m + 1), 0);
    for (int idx : eval_indices) {
        const int t = truth.labels[std::size_t(idx)];
        const int p = pred.labels[std::size_t(idx)];
        const std::size_t col = p == 0 ? std::size_t(m) : std::size_t(p - 1);
        if (p == 0) cm.has_unassigned = true;
        ++cm.counts[std::size_t(t - 1) * std::size_t(m + 1) + col];
        ++cm.total;
    }
    return cm;
}

MetricsReport report(const ConfusionMatrix& cm) {
    if (cm.total < 1) throw ConfigError("report: empty confusion matrix");
    const int m = cm.num_classes;
    MetricsReport rep;
    rep.total = cm.total;
    rep.per_class_accuracy.assign(std::size_t(m), -1.0);
    rep.per_class_count.assign(std::size_t(m), 0);

    long long trace = 0;
    double aa_sum = 0.0;
    int aa_classes = 0;
    std::vector<long long> colsum(std::size_t(m + 1), 0);
    for (int t = 1; t <= m; ++t) {
        const long long rs = cm.row_sum(t);
        rep.per_class_count[std::size_t(t - 1)] = rs;
        for (int p = 0; p <= m; ++p)
            colsum[std::size_t(p)] += cm.counts[std::size_t(t - 1) * std::size_t(m + 1) + std::size_t(p)];
        if (rs > 0) {
            const double acc = double(cm.at(t, t)) / double(rs);
            rep.per_class_accuracy[std::size_t(t - 1)] = acc;
            aa_sum += acc;
            ++aa_classes;
        }
        trace += cm.at(t, t);
    }
    rep.overall_accuracy = double(trace) / double(cm.total);
    rep.average_accuracy = aa_classes > 0 ? aa_sum / double(aa_classes) : 0.0;

    double pe = 0.0;
    for (int k = 1; k <= m; ++k)
        pe += double(cm.row_sum(k)) * double(colsum[std::size_t(k - 1)]);
    pe /= double(cm.total) * double(cm.total);
    if (std::fabs(1.0 - pe) < 1e-15) {
        rep.kappa = 0.0;
        rep.kappa_degenerate = true;
    } else {
        rep.kappa = (rep.overall_accuracy - pe) / (1.0 - pe);
    }
    return rep;
}

std::string ConfusionMatrix::to_csv() const {
    std::ostringstream os;
    os << "true\\pred";
    for (int p = 1; p <= num_classes; ++p) os << ',' << p;
    os << ",unassigned\n";
    for (int t = 1; t <= num_classes; ++t) {
        os << t;
        for (int p = 1; p <= num_classes; ++p) os << ',' << at(t, p);
        os << ',' << unassigned(t) << '\n';
    }
    return os.str();
}

std::string MetricsReport::to_text() const {
    std::ostringstream os;
    char buf[128];
    os << "class\tn_eval\taccuracy\n";
    for (std::size_t k = 0; k < per_class_accuracy.size(); ++k) {
        if (per_class_accuracy[k] < 0.0) {
            std::snprintf(buf, sizeof buf, "%zu\t%lld\t-\n", k + 1, per_class_count[k]);
        } else {
            std::snprintf(buf, sizeof buf, "%zu\t%lld\t%.2f\n", k + 1, per_class_count[k],
                          per_class_accuracy[k] * 100.0);
        }
        os << buf;
    }
    std::snprintf(buf, sizeof buf, "OA\t%.2f\nAA\t%.2f\nKappa\t%.4f%s\n", overall_accuracy * 100.0,
                  average_accuracy * 100.0, kappa, kappa_degenerate ? " (degenerate)" : "");
    os << buf;
    return os.str();
}

}  // namespace ssdgl
