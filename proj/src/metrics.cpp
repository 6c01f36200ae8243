#include "qfuse/metrics.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace qfuse {

ConfusionCounts confusion(const Image& pred, const Image& gt, double threshold) {
    if (!pred.same_shape(gt)) {
        throw DimensionError("confusion: prediction and ground truth shapes disagree");
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.v[i] >= static_cast<float>(threshold);
        const bool g = gt.v[i] >= 0.5f;
        if (p && g)
            ++c.tp;
        else if (p && !g)
            ++c.fp;
        else if (!p && g)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

Prf prf(const ConfusionCounts& c, double beta, bool beta_squared) {
    if (!(beta > 0.0)) throw ContractError("prf: beta must be positive");
    const double p = (c.tp + c.fp) == 0 ? 1.0 : static_cast<double>(c.tp) / (c.tp + c.fp);
    const double r = (c.tp + c.fn) == 0 ? 1.0 : static_cast<double>(c.tp) / (c.tp + c.fn);
    const double b = beta_squared ? beta * beta : beta;
    const double denom = b * p + r;
    const double f = denom == 0.0 ? 0.0 : (1.0 + b) * p * r / denom;
    return {p, r, f};
}

double mse_metric(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw DimensionError("mse_metric: shapes disagree");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.v[i]) - b.v[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

std::vector<PrPoint> pr_curve(const std::vector<const Image*>& preds, const std::vector<const Image*>& gts,
                              double beta, bool beta_squared) {
    if (preds.empty() || preds.size() != gts.size()) {
        throw ContractError("pr_curve: need matching non-empty prediction/gt lists");
    }
    std::vector<PrPoint> curve;
    curve.reserve(256);
    for (int t = 0; t < 256; ++t) {
        const double threshold = t / 255.0;
        ConfusionCounts pooled;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const ConfusionCounts c = confusion(*preds[i], *gts[i], threshold);
            pooled.tp += c.tp;
            pooled.fp += c.fp;
            pooled.tn += c.tn;
            pooled.fn += c.fn;
        }
        const Prf m = prf(pooled, beta, beta_squared);
        curve.push_back({threshold, m.precision, m.recall, m.f});
    }
    return curve;
}

EvalReport evaluate_run(const std::vector<const Image*>& preds, const std::vector<const Image*>& gts,
                        double beta, bool beta_squared) {
    EvalReport rep;
    rep.curve = pr_curve(preds, gts, beta, beta_squared);
    double acc = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) acc += mse_metric(*preds[i], *gts[i]);
    rep.mean_mse = acc / static_cast<double>(preds.size());
    std::size_t best = 0;
    for (std::size_t i = 1; i < rep.curve.size(); ++i) {
        if (rep.curve[i].f > rep.curve[best].f) best = i;
    }
    rep.max_f = rep.curve[best].f;
    rep.p_at_max_f = rep.curve[best].precision;
    rep.r_at_max_f = rep.curve[best].recall;
    rep.threshold_at_max_f = rep.curve[best].threshold;
    return rep;
}

void write_report_csv(const std::string& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "threshold,precision,recall,fmeasure\n";
    char buf[160];
    for (const auto& p : report.curve) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g\n", p.threshold, p.precision, p.recall, p.f);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "summary,mean_mse=%.9g,max_f=%.9g,threshold_at_max_f=%.9g\n",
                  report.mean_mse, report.max_f, report.threshold_at_max_f);
    out << buf;
    if (!out.flush()) throw IoError("short write to '" + path + "'");
}

void write_report_json(const std::string& path, const EvalReport& report) {
    nlohmann::json j = {{"mean_mse", report.mean_mse},
                        {"max_f", report.max_f},
                        {"p_at_max_f", report.p_at_max_f},
                        {"r_at_max_f", report.r_at_max_f},
                        {"threshold_at_max_f", report.threshold_at_max_f}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
    if (!out.flush()) throw IoError("short write to '" + path + "'");
}

}  // namespace qfuse
