#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "malefic/common.hpp"
#include "malefic/tensor.hpp"

namespace testutil {

// Chi-square critical values at alpha = 0.01 for df 1..10.
inline double chi2_crit_01(int df) {
    static const double table[] = {6.635, 9.210, 11.345, 13.277, 15.086,
                                   16.812, 18.475, 20.090, 21.666, 23.209};
    return table[df - 1];
}

// Goodness-of-fit statistic for observed counts against expected proportions.
inline double chi2_stat(const std::vector<int64_t>& observed, const std::vector<double>& expected_p) {
    int64_t n = 0;
    for (int64_t c : observed) n += c;
    double stat = 0.0;
    for (size_t i = 0; i < observed.size(); ++i) {
        const double e = expected_p[i] * static_cast<double>(n);
        if (e <= 0.0) continue;
        const double d = static_cast<double>(observed[i]) - e;
        stat += d * d / e;
    }
    return stat;
}

// Independence statistic for an r x c contingency table.
inline double chi2_independence(const std::vector<std::vector<int64_t>>& table) {
    const size_t R = table.size(), C = table[0].size();
    std::vector<double> row(R, 0.0), col(C, 0.0);
    double n = 0.0;
    for (size_t r = 0; r < R; ++r)
        for (size_t c = 0; c < C; ++c) {
            row[r] += static_cast<double>(table[r][c]);
            col[c] += static_cast<double>(table[r][c]);
            n += static_cast<double>(table[r][c]);
        }
    double stat = 0.0;
    for (size_t r = 0; r < R; ++r)
        for (size_t c = 0; c < C; ++c) {
            const double e = row[r] * col[c] / n;
            if (e <= 0.0) continue;
            const double d = static_cast<double>(table[r][c]) - e;
            stat += d * d / e;
        }
    return stat;
}

inline malefic::diff::Tensor random_tensor(std::vector<int64_t> shape, malefic::Rng& rng,
                                           double scale = 1.0) {
    malefic::diff::Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = malefic::rand_normal(rng) * scale;
    return t;
}

// Unique scratch directory under the build tree; removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<uint64_t> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("malefic_test_" + tag + "_" + std::to_string(counter.fetch_add(1)) + "_" +
                 std::to_string(::getpid()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace testutil
