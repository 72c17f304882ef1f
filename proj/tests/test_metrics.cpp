#include <doctest.h>

#include <algorithm>

#include "malefic/metrics.hpp"
#include "testutil.hpp"

using namespace malefic;
using namespace malefic::metrics;

namespace {

// From-scratch counting oracle, written against the textbook definitions and
// sharing nothing with the implementation.
struct OracleF1 {
    std::array<double, 3> per_class{};
    double micro = 0.0, macro = 0.0;
};

// Counts TP/FP/FN per class with naive triple scans and evaluates the exact
// integer-count form 2TP/(2TP+FP+FN); the precision/recall form is also
// checked (to 1e-12) to guard against an algebra mistake in either path.
OracleF1 oracle_f1(const std::vector<int>& pred, const std::vector<int>& label) {
    OracleF1 out;
    int64_t correct = 0;
    for (size_t i = 0; i < pred.size(); ++i) correct += pred[i] == label[i];
    for (int c = 0; c < 3; ++c) {
        int64_t tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < pred.size(); ++i)
            if (pred[i] == c && label[i] == c) ++tp;
        for (size_t i = 0; i < pred.size(); ++i)
            if (pred[i] == c && label[i] != c) ++fp;
        for (size_t i = 0; i < pred.size(); ++i)
            if (pred[i] != c && label[i] == c) ++fn;
        const int64_t denom = 2 * tp + fp + fn;
        const double f1 = denom > 0 ? 2.0 * static_cast<double>(tp) / static_cast<double>(denom)
                                    : 0.0;
        const double precision = (tp + fp) > 0
                                     ? static_cast<double>(tp) / static_cast<double>(tp + fp)
                                     : 0.0;
        const double recall = (tp + fn) > 0
                                  ? static_cast<double>(tp) / static_cast<double>(tp + fn)
                                  : 0.0;
        const double pr_form =
            (precision + recall) > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
        REQUIRE(std::abs(f1 - pr_form) < 1e-12);
        out.per_class[static_cast<size_t>(c)] = f1;
    }
    out.micro = static_cast<double>(correct) / static_cast<double>(pred.size());
    out.macro = ((out.per_class[0] + out.per_class[1]) + out.per_class[2]) / 3.0;
    return out;
}

std::pair<std::vector<int>, std::vector<int>> random_case(Rng& rng, size_t n) {
    std::vector<int> pred(n), label(n);
    for (size_t i = 0; i < n; ++i) {
        label[i] = static_cast<int>(rng() % 3);
        pred[i] = (rng() % 4 == 0) ? label[i] : static_cast<int>(rng() % 3);
    }
    return {pred, label};
}

}  // namespace

TEST_CASE("perfect predictions give F1 = 1 everywhere and identity confusion") {
    const std::vector<int> labels = {0, 1, 2, 0, 1, 2, 2, 2};
    const auto f1 = f1_scores(labels, labels);
    for (int c = 0; c < 3; ++c) CHECK(f1.per_class[static_cast<size_t>(c)] == 1.0);
    CHECK(f1.micro == 1.0);
    CHECK(f1.macro == 1.0);
    const auto cm = confusion_matrix(labels, labels);
    for (int a = 0; a < 3; ++a)
        for (int p = 0; p < 3; ++p)
            CHECK(cm.rows[static_cast<size_t>(a)][static_cast<size_t>(p)] ==
                  (a == p ? 1.0 : 0.0));
}

TEST_CASE("micro F1 equals accuracy in single-label multiclass") {
    Rng rng = make_rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        const auto [pred, label] = random_case(rng, 83);
        int64_t correct = 0;
        for (size_t i = 0; i < pred.size(); ++i) correct += pred[i] == label[i];
        const double accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
        CHECK(f1_scores(pred, label).micro == accuracy);
    }
}

TEST_CASE("random cases match the counting oracle exactly") {
    Rng rng = make_rng(11);
    for (int rep = 0; rep < 200; ++rep) {
        const auto [pred, label] = random_case(rng, 200);
        const auto got = f1_scores(pred, label);
        const auto want = oracle_f1(pred, label);
        for (int c = 0; c < 3; ++c)
            CHECK(got.per_class[static_cast<size_t>(c)] == want.per_class[static_cast<size_t>(c)]);
        CHECK(got.micro == want.micro);
        CHECK(got.macro == want.macro);

        const auto cm = confusion_matrix(pred, label);
        for (int a = 0; a < 3; ++a)
            for (int p = 0; p < 3; ++p) {
                int64_t want_count = 0;
                for (size_t i = 0; i < pred.size(); ++i)
                    want_count += (label[i] == a && pred[i] == p) ? 1 : 0;
                CHECK(cm.counts[static_cast<size_t>(a)][static_cast<size_t>(p)] == want_count);
            }
    }
}

TEST_CASE("confusion rows sum to one when the class is present") {
    Rng rng = make_rng(13);
    const auto [pred, label] = random_case(rng, 120);
    const auto cm = confusion_matrix(pred, label);
    for (int a = 0; a < 3; ++a) {
        const double sum = cm.rows[static_cast<size_t>(a)][0] + cm.rows[static_cast<size_t>(a)][1] +
                           cm.rows[static_cast<size_t>(a)][2];
        CHECK(std::abs(sum - 1.0) < 1e-6);
    }
    std::vector<int> all_fn(label.size(), 2);
    const auto cm2 = confusion_matrix(all_fn, label);
    for (int a = 0; a < 3; ++a) CHECK(cm2.rows[static_cast<size_t>(a)][2] == 1.0);
}

TEST_CASE("macro F1 is invariant under consistent relabeling") {
    Rng rng = make_rng(17);
    const auto [pred, label] = random_case(rng, 150);
    const double base = f1_scores(pred, label).macro;
    const std::array<std::array<int, 3>, 5> perms = {
        {{1, 0, 2}, {2, 1, 0}, {0, 2, 1}, {1, 2, 0}, {2, 0, 1}}};
    for (const auto& perm : perms) {
        std::vector<int> p2(pred.size()), l2(label.size());
        for (size_t i = 0; i < pred.size(); ++i) {
            p2[i] = perm[static_cast<size_t>(pred[i])];
            l2[i] = perm[static_cast<size_t>(label[i])];
        }
        CHECK(f1_scores(p2, l2).macro == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("length mismatch and empty inputs are rejected") {
    const std::vector<int> a = {0, 1}, b = {0};
    CHECK_THROWS_AS(f1_scores(a, b), ParamError);
    CHECK_THROWS_AS(f1_scores(std::vector<int>{}, std::vector<int>{}), ParamError);
}

TEST_CASE("bootstrap: degenerate interval for constant-correct predictions") {
    const std::vector<int> labels = {0, 1, 2, 1, 1, 0, 2, 2, 1, 0};
    const auto iv = bootstrap_ci(labels, labels,
                                 [](std::span<const int> p, std::span<const int> l) {
                                     return f1_scores(p, l).macro;
                                 },
                                 500, 42);
    CHECK(iv.lo == 1.0);
    CHECK(iv.hi == 1.0);
}

TEST_CASE("bootstrap interval contains the point estimate on random cases") {
    Rng rng = make_rng(23);
    for (int rep = 0; rep < 100; ++rep) {
        const auto [pred, label] = random_case(rng, 150);
        const MetricFn macro = [](std::span<const int> p, std::span<const int> l) {
            return f1_scores(p, l).macro;
        };
        const double point = macro(pred, label);
        const auto iv = bootstrap_ci(pred, label, macro, 400, 1000 + static_cast<uint64_t>(rep));
        CHECK(iv.lo <= point);
        CHECK(point <= iv.hi);
    }
}

TEST_CASE("bootstrap is deterministic given the seed") {
    Rng rng = make_rng(29);
    const auto [pred, label] = random_case(rng, 90);
    const MetricFn micro = [](std::span<const int> p, std::span<const int> l) {
        return f1_scores(p, l).micro;
    };
    const auto a = bootstrap_ci(pred, label, micro, 300, 7);
    const auto b = bootstrap_ci(pred, label, micro, 300, 7);
    CHECK(a.lo == b.lo);
    CHECK(a.hi == b.hi);
    const auto c = bootstrap_ci(pred, label, micro, 300, 8);
    CHECK((a.lo != c.lo || a.hi != c.hi));
}

TEST_CASE("bootstrap with B=1 returns that resample's metric exactly") {
    Rng rng = make_rng(31);
    const auto [pred, label] = random_case(rng, 40);
    const MetricFn macro = [](std::span<const int> p, std::span<const int> l) {
        return f1_scores(p, l).macro;
    };
    const auto iv = bootstrap_ci(pred, label, macro, 1, 5);
    CHECK(iv.lo == iv.hi);
    Rng replay = make_rng(derive_seed(5, 0));
    std::vector<int> rp(pred.size()), rl(label.size());
    std::uniform_int_distribution<size_t> pick(0, pred.size() - 1);
    for (size_t i = 0; i < pred.size(); ++i) {
        const size_t j = pick(replay);
        rp[i] = pred[j];
        rl[i] = label[j];
    }
    CHECK(iv.lo == macro(rp, rl));
}

TEST_CASE("bootstrap interval width shrinks as n grows") {
    const MetricFn macro = [](std::span<const int> p, std::span<const int> l) {
        return f1_scores(p, l).macro;
    };
    int narrower = 0;
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
        Rng rng = make_rng(40 + static_cast<uint64_t>(s));
        const auto [p1, l1] = random_case(rng, 100);
        const auto [p2, l2] = random_case(rng, 10000);
        const auto small_iv = bootstrap_ci(p1, l1, macro, 300, 3);
        const auto large_iv = bootstrap_ci(p2, l2, macro, 300, 3);
        if (large_iv.hi - large_iv.lo < small_iv.hi - small_iv.lo) ++narrower;
    }
    CHECK(narrower >= 18);  // monotone within sampling noise
}

TEST_CASE("report serialization carries every field") {
    Rng rng = make_rng(37);
    const auto [pred, label] = random_case(rng, 60);
    const auto report = evaluate(pred, label, 200, 11);
    const auto json_text = report_to_json(report);
    CHECK(json_text.find("\"macro\"") != std::string::npos);
    CHECK(json_text.find("\"confusion\"") != std::string::npos);
    const auto table = report_to_table(report);
    CHECK(table.find("F1 - macro") != std::string::npos);

    testutil::TempDir dir("metrics_report");
    write_report(dir.path(), report);
    CHECK(std::filesystem::exists(dir.path() / "eval_report.json"));
    CHECK(std::filesystem::exists(dir.path() / "eval_report.txt"));
    CHECK(std::filesystem::exists(dir.path() / "confusion.csv"));
}
