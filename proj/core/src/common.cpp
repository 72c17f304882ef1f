#include "malefic/common.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <sstream>
#include <thread>

namespace malefic {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t base, uint64_t stream) {
    return splitmix64(splitmix64(base) ^ (stream * 0xd6e8feb86659fd93ULL + 1));
}

Rng make_rng(uint64_t seed) { return Rng(splitmix64(seed)); }

double rand_uniform(Rng& rng) {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

double rand_normal(Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

int sample_categorical(std::span<const double> probs, Rng& rng) {
    if (probs.empty()) throw ParamError("sample_categorical: empty distribution");
    const double u = rand_uniform(rng);
    double cum = 0.0;
    int last_positive = -1;
    for (size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] < 0.0) throw ParamError("sample_categorical: negative probability");
        if (probs[i] > 0.0) last_positive = static_cast<int>(i);
        cum += probs[i];
        if (u < cum && probs[i] > 0.0) return static_cast<int>(i);
    }
    if (last_positive < 0) throw ParamError("sample_categorical: all-zero distribution");
    return last_positive;  // u landed in the round-off tail
}

int worker_thread_cap() {
    const char* env = std::getenv("MALEFIC_THREADS");
    if (!env) return 1;
    const int n = std::atoi(env);
    return n >= 1 ? n : 1;
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    const int threads = std::min<int64_t>(worker_thread_cap(), n);
    if (threads <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int64_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const int64_t i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::vector<std::string> split_string(const std::string& s, char delim) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, delim)) out.push_back(cur);
    return out;
}

std::string join_strings(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

uint64_t fnv1a64(std::string_view bytes) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace malefic
