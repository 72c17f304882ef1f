#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <span>

#include "malefic/common.hpp"
#include "malefic/corpus.hpp"

namespace malefic::metrics {

using corpus::kNumClasses;

struct F1Scores {
    std::array<double, kNumClasses> per_class{};  // CT, ST, FN
    double micro = 0.0;
    double macro = 0.0;
    int degenerate_classes = 0;  // classes where precision + recall was zero
};

// Class ids follow corpus::MiscLabel order. Lists must be nonempty and of
// equal length.
F1Scores f1_scores(std::span<const int> predictions, std::span<const int> labels);

struct ConfusionMatrix {
    std::array<std::array<int64_t, kNumClasses>, kNumClasses> counts{};  // [actual][predicted]
    // row-normalized: entry[i][j] = P(pred = j | actual = i); zero rows stay zero
    std::array<std::array<double, kNumClasses>, kNumClasses> rows{};
};

ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> labels);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

using MetricFn = std::function<double(std::span<const int>, std::span<const int>)>;

// Percentile bootstrap: B resamples with replacement, [2.5%, 97.5%] of the
// resampled metric. Per-resample RNG streams are derived from the seed, so
// the result is reproducible and order-independent.
Interval bootstrap_ci(std::span<const int> predictions, std::span<const int> labels,
                      const MetricFn& metric, int B = 1000, uint64_t seed = 0);

struct EvalReport {
    int64_t n_samples = 0;
    F1Scores f1;
    std::array<Interval, kNumClasses> ci_per_class{};
    Interval ci_micro, ci_macro;
    ConfusionMatrix confusion;
};

EvalReport evaluate(std::span<const int> predictions, std::span<const int> labels,
                    int bootstrap_B = 1000, uint64_t seed = 0);

std::string report_to_json(const EvalReport& report);
std::string report_to_table(const EvalReport& report);
void write_report(const std::filesystem::path& dir, const EvalReport& report,
                  const std::string& stem = "eval_report");
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm);

}  // namespace malefic::metrics
