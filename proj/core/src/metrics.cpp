#include "malefic/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace malefic::metrics {

namespace {

void validate_inputs(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size())
        throw ParamError("metrics: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
    if (predictions.empty()) throw ParamError("metrics: empty inputs");
    for (size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i] < 0 || predictions[i] >= kNumClasses || labels[i] < 0 ||
            labels[i] >= kNumClasses)
            throw DataError("metrics: class id out of range at position " + std::to_string(i));
}

}  // namespace

F1Scores f1_scores(std::span<const int> predictions, std::span<const int> labels) {
    validate_inputs(predictions, labels);
    std::array<int64_t, kNumClasses> tp{}, fp{}, fn{};
    int64_t correct = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        const int p = predictions[i], l = labels[i];
        if (p == l) {
            ++tp[static_cast<size_t>(p)];
            ++correct;
        } else {
            ++fp[static_cast<size_t>(p)];
            ++fn[static_cast<size_t>(l)];
        }
    }
    F1Scores out;
    double macro_sum = 0.0;
    for (int c = 0; c < kNumClasses; ++c) {
        const auto ci = static_cast<size_t>(c);
        const double denom = static_cast<double>(2 * tp[ci] + fp[ci] + fn[ci]);
        if (denom == 0.0) {
            out.per_class[ci] = 0.0;  // precision + recall undefined: scored zero
            ++out.degenerate_classes;
        } else {
            out.per_class[ci] = 2.0 * static_cast<double>(tp[ci]) / denom;
        }
        macro_sum += out.per_class[ci];
    }
    out.macro = macro_sum / static_cast<double>(kNumClasses);
    // single-label multiclass: pooled micro F1 reduces to accuracy
    out.micro = static_cast<double>(correct) / static_cast<double>(predictions.size());
    return out;
}

ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> labels) {
    validate_inputs(predictions, labels);
    ConfusionMatrix cm;
    for (size_t i = 0; i < predictions.size(); ++i)
        ++cm.counts[static_cast<size_t>(labels[i])][static_cast<size_t>(predictions[i])];
    for (int a = 0; a < kNumClasses; ++a) {
        int64_t row = 0;
        for (int p = 0; p < kNumClasses; ++p) row += cm.counts[static_cast<size_t>(a)][static_cast<size_t>(p)];
        if (row == 0) continue;
        for (int p = 0; p < kNumClasses; ++p)
            cm.rows[static_cast<size_t>(a)][static_cast<size_t>(p)] =
                static_cast<double>(cm.counts[static_cast<size_t>(a)][static_cast<size_t>(p)]) /
                static_cast<double>(row);
    }
    return cm;
}

Interval bootstrap_ci(std::span<const int> predictions, std::span<const int> labels,
                      const MetricFn& metric, int B, uint64_t seed) {
    validate_inputs(predictions, labels);
    if (predictions.size() < 2) throw ParamError("bootstrap_ci: need at least 2 samples");
    if (B < 1) throw ParamError("bootstrap_ci: B must be >= 1");
    const size_t n = predictions.size();
    std::vector<double> stats(static_cast<size_t>(B));
    parallel_for(B, [&](int64_t b) {
        Rng rng = make_rng(derive_seed(seed, static_cast<uint64_t>(b)));
        std::vector<int> rp(n), rl(n);
        std::uniform_int_distribution<size_t> pick(0, n - 1);
        for (size_t i = 0; i < n; ++i) {
            const size_t j = pick(rng);
            rp[i] = predictions[j];
            rl[i] = labels[j];
        }
        stats[static_cast<size_t>(b)] = metric(rp, rl);
    });
    std::sort(stats.begin(), stats.end());
    const auto idx = [&](double q) {
        return static_cast<size_t>(std::llround(q * static_cast<double>(B - 1)));
    };
    return {stats[idx(0.025)], stats[idx(0.975)]};
}

EvalReport evaluate(std::span<const int> predictions, std::span<const int> labels, int bootstrap_B,
                    uint64_t seed) {
    EvalReport report;
    report.n_samples = static_cast<int64_t>(predictions.size());
    report.f1 = f1_scores(predictions, labels);
    report.confusion = confusion_matrix(predictions, labels);
    for (int c = 0; c < kNumClasses; ++c) {
        report.ci_per_class[static_cast<size_t>(c)] = bootstrap_ci(
            predictions, labels,
            [c](std::span<const int> p, std::span<const int> l) {
                return f1_scores(p, l).per_class[static_cast<size_t>(c)];
            },
            bootstrap_B, derive_seed(seed, 100 + static_cast<uint64_t>(c)));
    }
    report.ci_micro = bootstrap_ci(
        predictions, labels,
        [](std::span<const int> p, std::span<const int> l) { return f1_scores(p, l).micro; },
        bootstrap_B, derive_seed(seed, 200));
    report.ci_macro = bootstrap_ci(
        predictions, labels,
        [](std::span<const int> p, std::span<const int> l) { return f1_scores(p, l).macro; },
        bootstrap_B, derive_seed(seed, 201));
    return report;
}

namespace {

nlohmann::json interval_json(const Interval& iv) { return {iv.lo, iv.hi}; }

}  // namespace

std::string report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["n_samples"] = report.n_samples;
    for (int c = 0; c < kNumClasses; ++c) {
        const auto name = corpus::label_name(static_cast<corpus::MiscLabel>(c));
        j["f1"][name] = report.f1.per_class[static_cast<size_t>(c)];
        j["ci"][name] = interval_json(report.ci_per_class[static_cast<size_t>(c)]);
    }
    j["f1"]["micro"] = report.f1.micro;
    j["f1"]["macro"] = report.f1.macro;
    j["ci"]["micro"] = interval_json(report.ci_micro);
    j["ci"]["macro"] = interval_json(report.ci_macro);
    j["degenerate_classes"] = report.f1.degenerate_classes;
    nlohmann::json rows = nlohmann::json::array(), counts = nlohmann::json::array();
    for (int a = 0; a < kNumClasses; ++a) {
        rows.push_back(report.confusion.rows[static_cast<size_t>(a)]);
        counts.push_back(report.confusion.counts[static_cast<size_t>(a)]);
    }
    j["confusion"]["rows"] = rows;
    j["confusion"]["counts"] = counts;
    j["confusion"]["label_order"] = {"CT", "ST", "FN"};
    return j.dump(1) + "\n";
}

std::string report_to_table(const EvalReport& report) {
    char buf[160];
    std::string out;
    out += "metric      value   95% CI\n";
    for (int c = 0; c < kNumClasses; ++c) {
        const auto ci = report.ci_per_class[static_cast<size_t>(c)];
        std::snprintf(buf, sizeof(buf), "F1 - %-5s  %.3f   [%.3f, %.3f]\n",
                      corpus::label_name(static_cast<corpus::MiscLabel>(c)),
                      report.f1.per_class[static_cast<size_t>(c)], ci.lo, ci.hi);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "F1 - micro  %.3f   [%.3f, %.3f]\n", report.f1.micro,
                  report.ci_micro.lo, report.ci_micro.hi);
    out += buf;
    std::snprintf(buf, sizeof(buf), "F1 - macro  %.3f   [%.3f, %.3f]\n", report.f1.macro,
                  report.ci_macro.lo, report.ci_macro.hi);
    out += buf;
    out += "\nconfusion (rows = actual CT/ST/FN, cols = predicted):\n";
    for (int a = 0; a < kNumClasses; ++a) {
        std::snprintf(buf, sizeof(buf), "%-3s %.3f %.3f %.3f\n",
                      corpus::label_name(static_cast<corpus::MiscLabel>(a)),
                      report.confusion.rows[static_cast<size_t>(a)][0],
                      report.confusion.rows[static_cast<size_t>(a)][1],
                      report.confusion.rows[static_cast<size_t>(a)][2]);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "\nn = %lld\n", static_cast<long long>(report.n_samples));
    out += buf;
    return out;
}

void write_report(const std::filesystem::path& dir, const EvalReport& report,
                  const std::string& stem) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / (stem + ".json"));
        if (!out) throw IoError("cannot write report to " + dir.string());
        out << report_to_json(report);
    }
    {
        std::ofstream out(dir / (stem + ".txt"));
        out << report_to_table(report);
    }
    write_confusion_csv(dir / "confusion.csv", report.confusion);
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "actual,pred_CT,pred_ST,pred_FN,row_CT,row_ST,row_FN\n";
    out.precision(17);
    for (int a = 0; a < kNumClasses; ++a) {
        out << corpus::label_name(static_cast<corpus::MiscLabel>(a));
        for (int p = 0; p < kNumClasses; ++p)
            out << "," << cm.counts[static_cast<size_t>(a)][static_cast<size_t>(p)];
        for (int p = 0; p < kNumClasses; ++p)
            out << "," << cm.rows[static_cast<size_t>(a)][static_cast<size_t>(p)];
        out << "\n";
    }
}

}  // namespace malefic::metrics
