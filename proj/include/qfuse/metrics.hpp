#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qfuse/image.hpp"

namespace qfuse {

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::uint64_t total() const { return tp + fp + tn + fn; }
};

/// Pixel classification at a threshold: positive iff pred >= threshold;
/// ground truth positive iff gt >= 0.5.
ConfusionCounts confusion(const Image& pred, const Image& gt, double threshold);

struct Prf {
    double precision, recall, f;
};

/// P = tp/(tp+fp), R = tp/(tp+fn), F = (1+beta)PR / (beta*P + R) as printed
/// (beta, not beta^2) unless beta_squared is set. Degenerate cases: no
/// predicted positives -> P = 1; no actual positives -> R = 1; zero
/// denominator -> F = 0.
Prf prf(const ConfusionCounts& c, double beta, bool beta_squared = false);

/// Mean squared error between two same-shape maps (symmetric).
double mse_metric(const Image& a, const Image& b);

struct PrPoint {
    double threshold, precision, recall, f;
};

/// 256-threshold sweep (t = i/255), counts pooled over the dataset,
/// ascending threshold order.
std::vector<PrPoint> pr_curve(const std::vector<const Image*>& preds, const std::vector<const Image*>& gts,
                              double beta, bool beta_squared = false);

struct EvalReport {
    double mean_mse = 0.0;
    double max_f = 0.0;
    double p_at_max_f = 0.0;
    double r_at_max_f = 0.0;
    double threshold_at_max_f = 0.0;
    std::vector<PrPoint> curve;
};

/// Aggregates a run: mean MSE over samples plus the pooled PR sweep with its
/// max-F operating point (first threshold on ties).
EvalReport evaluate_run(const std::vector<const Image*>& preds, const std::vector<const Image*>& gts,
                        double beta, bool beta_squared = false);

/// threshold,precision,recall,fmeasure rows plus a trailing summary line.
void write_report_csv(const std::string& path, const EvalReport& report);

/// {mean_mse, max_f, p_at_max_f, r_at_max_f, threshold_at_max_f}
void write_report_json(const std::string& path, const EvalReport& report);

}  // namespace qfuse
