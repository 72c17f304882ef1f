#include <doctest.h>

#include <cmath>

#include "malefic/signal.hpp"
#include "testutil.hpp"

using namespace malefic;
using namespace malefic::feat;

namespace {

// Independent windowed-median oracle: recomputes each output with a naive
// scan, sharing no code with the implementation.
double oracle_window_median(const std::vector<double>& s, int64_t i, int kernel) {
    std::vector<double> w;
    for (int64_t j = i - kernel / 2; j <= i + kernel / 2; ++j)
        if (j >= 0 && j < static_cast<int64_t>(s.size())) w.push_back(s[static_cast<size_t>(j)]);
    std::sort(w.begin(), w.end());
    const size_t m = w.size();
    return (m % 2 == 1) ? w[m / 2] : 0.5 * (w[m / 2 - 1] + w[m / 2]);
}

}  // namespace

TEST_CASE("median filter: constants, identity kernel, spike case vs oracle") {
    CHECK(median_filter({2, 2, 2, 2, 2}, 5) == std::vector<double>{2, 2, 2, 2, 2});
    const std::vector<double> s = {4.0, -1.0, 7.5, 0.0};
    CHECK(median_filter(s, 1) == s);

    const std::vector<double> spike = {1, 9, 1, 1, 1};
    const auto filtered = median_filter(spike, 5);
    for (int64_t i = 0; i < 5; ++i)
        CHECK(filtered[static_cast<size_t>(i)] == oracle_window_median(spike, i, 5));

    Rng rng = make_rng(99);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> r(31);
        for (auto& v : r) v = rand_normal(rng);
        for (const int k : {3, 5, 7}) {
            const auto f = median_filter(r, k);
            for (int64_t i = 0; i < 31; ++i)
                CHECK(f[static_cast<size_t>(i)] == oracle_window_median(r, i, k));
        }
    }
}

TEST_CASE("median filter rejects even kernels and missing values") {
    CHECK_THROWS_AS(median_filter({1, 2, 3}, 2), ParamError);
    CHECK_THROWS_AS(median_filter({1, 2, 3}, 0), ParamError);
    CHECK_THROWS_AS(median_filter({1, missing_value(), 3}, 3), DataError);
}

TEST_CASE("median filter is idempotent on constant and monotone series") {
    // With truncated edge windows the edges of a strictly monotone series are
    // not fixed points, so idempotence is asserted on the full-window interior.
    const std::vector<double> mono = {0, 1, 2, 3, 4, 5, 6, 7};
    const auto once = median_filter(mono, 5);
    const auto twice = median_filter(once, 5);
    for (size_t i = 2; i + 2 < mono.size(); ++i) {
        CHECK(once[i] == mono[i]);
        CHECK(twice[i] == once[i]);
    }
    const std::vector<double> c(9, 3.25);
    CHECK(median_filter(median_filter(c, 5), 5) == c);
}

TEST_CASE("interpolation: midpoint, identity, hand-traced gap pattern") {
    const double miss = missing_value();
    CHECK(interpolate_missing({1.0, miss, 3.0}) == std::vector<double>{1, 2, 3});
    const std::vector<double> clean = {5, 6, 7};
    CHECK(interpolate_missing(clean) == clean);
    CHECK(interpolate_missing({miss, miss, 4.0, miss, 8.0, miss}) ==
          std::vector<double>{4, 4, 4, 6, 8, 8});
}

TEST_CASE("interpolation preserves observed values and fails on all-missing") {
    const double miss = missing_value();
    Rng rng = make_rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> s(40, miss);
        for (int i = 0; i < 40; ++i)
            if (rng() % 3 == 0) s[static_cast<size_t>(i)] = rand_normal(rng);
        bool any = false;
        for (double v : s) any = any || !is_missing(v);
        if (!any) s[7] = 1.0;
        const auto filled = interpolate_missing(s);
        for (size_t i = 0; i < s.size(); ++i)
            if (!is_missing(s[i])) CHECK(filled[i] == s[i]);
    }
    CHECK_THROWS_WITH_AS(interpolate_missing({miss, miss}, "gaze_angle_x"),
                         doctest::Contains("gaze_angle_x"), DataError);
}

TEST_CASE("amplitude: coincident wrists, hand computation, degenerate framing") {
    FrameJoints f;
    f.left_wrist = f.right_wrist = {0.4, 0.4};
    f.neck = {0.5, 0.2};
    f.mid_hip = {0.5, 0.7};
    CHECK(amplitude(f) == 0.0);

    f.left_wrist = {0.2, 0.5};
    f.right_wrist = {0.8, 0.5};
    CHECK(amplitude(f) == doctest::Approx(1.2));  // 0.6 / 0.5

    FrameJoints degenerate = f;
    degenerate.mid_hip = degenerate.neck;
    CHECK_THROWS_AS(amplitude(degenerate), DataError);
}

TEST_CASE("amplitude is invariant under translation and uniform scaling") {
    Rng rng = make_rng(31);
    for (int rep = 0; rep < 50; ++rep) {
        FrameJoints f;
        f.left_wrist = {rand_uniform(rng), rand_uniform(rng)};
        f.right_wrist = {rand_uniform(rng), rand_uniform(rng)};
        f.neck = {rand_uniform(rng), rand_uniform(rng)};
        f.mid_hip = {rand_uniform(rng) + 0.5, rand_uniform(rng) + 0.5};
        const double base = amplitude(f);

        const double tx = rand_normal(rng), ty = rand_normal(rng);
        const double k = 0.5 + 2.0 * rand_uniform(rng);
        auto moved = [&](Point p) { return Point{(p.x + tx) * k, (p.y + ty) * k}; };
        FrameJoints g{moved(f.left_wrist), moved(f.right_wrist), moved(f.neck), moved(f.mid_hip)};
        CHECK(std::abs(amplitude(g) - base) <= 1e-12 * std::max(1.0, std::abs(base)));
    }
}

TEST_CASE("quantity of motion: static pose, direct subtraction, missing tail") {
    const std::vector<double> static_areas(30, 0.04);
    const auto q = quantity_of_motion(static_areas, 10);
    for (size_t t = 0; t + 10 < q.size(); ++t) CHECK(q[t] == 0.0);
    for (size_t t = q.size() - 10; t < q.size(); ++t) CHECK(is_missing(q[t]));

    std::vector<double> grow(12);
    for (size_t t = 0; t < grow.size(); ++t)
        grow[t] = 0.02 + 0.03 * static_cast<double>(t) / 11.0;
    const auto qg = quantity_of_motion(grow, 11);
    CHECK(qg[0] == doctest::Approx(0.03));

    CHECK_THROWS_AS(quantity_of_motion(grow, 0), ParamError);
    CHECK_THROWS_AS(quantity_of_motion(grow, -2), ParamError);
}

TEST_CASE("quantity of motion alternates sign on an oscillating-arms track") {
    // arms swing out and in with period 20; verified against brute-force areas
    KeypointTrack track;
    track.frames.resize(80);
    for (size_t t = 0; t < 80; ++t) {
        const double spread = 0.25 + 0.2 * std::sin(2.0 * M_PI * static_cast<double>(t) / 20.0);
        auto& f = track.frames[t];
        f[0] = {0.5 - spread, 0.5, 1.0, true};
        f[1] = {0.5 + spread, 0.5, 1.0, true};
        f[2] = {0.5, 0.3, 1.0, true};
        f[3] = {0.5, 0.8, 1.0, true};
    }
    const auto feats = body_features(track, 10, 0.3);
    for (size_t t = 0; t + 10 < 80; ++t) {
        auto area = [&](size_t i) {
            const auto& f = track.frames[i];
            const double w = std::max({f[0].x, f[1].x, f[2].x, f[3].x}) -
                             std::min({f[0].x, f[1].x, f[2].x, f[3].x});
            const double h = std::max({f[0].y, f[1].y, f[2].y, f[3].y}) -
                             std::min({f[0].y, f[1].y, f[2].y, f[3].y});
            return w * h;
        };
        CHECK(feats.qom[t] == doctest::Approx(area(t + 10) - area(t)));
    }
    bool pos = false, neg = false;
    for (size_t t = 0; t + 10 < 80; ++t) {
        pos = pos || feats.qom[t] > 1e-6;
        neg = neg || feats.qom[t] < -1e-6;
    }
    CHECK(pos);
    CHECK(neg);
}

TEST_CASE("QoM antisymmetry under time reversal") {
    Rng rng = make_rng(77);
    std::vector<double> areas(40);
    for (auto& a : areas) a = 0.05 + 0.02 * rand_uniform(rng);
    std::vector<double> rev(areas.rbegin(), areas.rend());
    const int lag = 7;
    const auto fwd = quantity_of_motion(areas, lag);
    const auto bwd = quantity_of_motion(rev, lag);
    const size_t n = areas.size();
    for (size_t t = 0; t + lag < n; ++t) {
        const size_t tr = n - 1 - (t + static_cast<size_t>(lag));
        CHECK(bwd[tr] == doctest::Approx(-fwd[t]));
    }
}

TEST_CASE("preprocess_track equals interpolate-then-median per channel") {
    Rng rng = make_rng(13);
    const int64_t T = 25, C = 3;
    diff::Tensor raw({T, C});
    for (int64_t t = 0; t < T; ++t)
        for (int64_t c = 0; c < C; ++c)
            raw.at(t, c) = (rng() % 5 == 0) ? missing_value() : rand_normal(rng);
    for (int64_t c = 0; c < C; ++c) raw.at(3, c) = rand_normal(rng);  // ensure one observation
    const auto out = preprocess_track(raw, 5);
    for (int64_t c = 0; c < C; ++c) {
        std::vector<double> col(static_cast<size_t>(T));
        for (int64_t t = 0; t < T; ++t) col[static_cast<size_t>(t)] = raw.at(t, c);
        const auto expected = median_filter(interpolate_missing(col), 5);
        for (int64_t t = 0; t < T; ++t) CHECK(out.at(t, c) == expected[static_cast<size_t>(t)]);
    }

    diff::Tensor clean = diff::Tensor::full({10, 2}, 1.5);
    const auto same = preprocess_track(clean, 5);
    for (int64_t i = 0; i < same.size(); ++i) CHECK(same[i] == 1.5);

    diff::Tensor spiky = diff::Tensor::full({11, 1}, 2.0);
    spiky.at(5, 0) = 40.0;
    const auto despiked = preprocess_track(spiky, 5);
    for (int64_t t = 0; t < 11; ++t) CHECK(despiked.at(t, 0) == 2.0);
}

TEST_CASE("AU csv and pose jsonl round-trip through files") {
    testutil::TempDir dir("signal_io");
    AUTrack track;
    track.channels = face_channels();
    track.values = diff::Tensor({6, static_cast<int64_t>(track.channels.size())});
    Rng rng = make_rng(3);
    for (int64_t t = 0; t < 6; ++t)
        for (int64_t c = 0; c < track.values.cols(); ++c)
            track.values.at(t, c) = c < 8 ? 5.0 * rand_uniform(rng) : rand_normal(rng);
    for (int64_t c = 0; c < track.values.cols(); ++c) track.values.at(2, c) = missing_value();
    write_au_csv(dir.path() / "x.au.csv", track);
    const auto loaded = read_au_csv(dir.path() / "x.au.csv");
    CHECK(loaded.channels == track.channels);
    CHECK(loaded.values.rows() == 6);
    CHECK(is_missing(loaded.values.at(2, 0)));
    CHECK(loaded.values.at(1, 3) == track.values.at(1, 3));

    const auto feats = face_features(loaded);
    CHECK(feats.rows() == 6);
    CHECK(feats.cols() == 16);
    CHECK(feats.all_finite());

    KeypointTrack pose;
    pose.frames.resize(4);
    for (size_t t = 0; t < 4; ++t)
        for (int j = 0; j < kNumBodyJoints; ++j)
            pose.frames[t][static_cast<size_t>(j)] = {0.1 * static_cast<double>(j) + 0.2, 0.5,
                                                      0.9, true};
    write_pose_jsonl(dir.path() / "x.pose.jsonl", pose);
    const auto pose2 = read_pose_jsonl(dir.path() / "x.pose.jsonl");
    CHECK(pose2.frames.size() == 4);
    CHECK(pose2.frames[1][2].x == pose.frames[1][2].x);

    AUTrack bad = track;
    bad.values.at(0, 0) = 9.0;  // out-of-range intensity
    write_au_csv(dir.path() / "bad.au.csv", bad);
    CHECK_THROWS_AS(read_au_csv(dir.path() / "bad.au.csv"), DataError);
}

TEST_CASE("low-confidence wrists mark frames missing") {
    KeypointTrack track;
    track.frames.resize(3);
    for (size_t t = 0; t < 3; ++t) {
        auto& f = track.frames[t];
        f[0] = {0.2, 0.5, 0.9, true};
        f[1] = {0.8, 0.5, 0.9, true};
        f[2] = {0.5, 0.2, 0.9, true};
        f[3] = {0.5, 0.7, 0.9, true};
    }
    track.frames[1][0].confidence = 0.1;  // below the 0.3 threshold
    const auto feats = body_features(track, 1, 0.3);
    CHECK(!is_missing(feats.amplitude[0]));
    CHECK(is_missing(feats.amplitude[1]));
    CHECK(feats.amplitude[0] == doctest::Approx(1.2));
}
