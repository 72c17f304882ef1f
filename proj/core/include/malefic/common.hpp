#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace malefic {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : Error { using Error::Error; };  // operand shapes incompatible
struct ParamError : Error { using Error::Error; };  // invalid argument value
struct DataError : Error { using Error::Error; };   // malformed or inconsistent data
struct IoError : Error { using Error::Error; };     // filesystem / file format failure
struct StateError : Error { using Error::Error; };  // API used in the wrong order

using Rng = std::mt19937_64;

uint64_t splitmix64(uint64_t x);

// Derives independent, reproducible seeds for the RNG streams of one run
// (model init, sampler, dropout, ...) from a single run seed.
uint64_t derive_seed(uint64_t base, uint64_t stream);

Rng make_rng(uint64_t seed);

double rand_uniform(Rng& rng);  // [0, 1)
double rand_normal(Rng& rng);

// Draws an index with probability proportional to probs[i]. Entries must be
// nonnegative with a positive sum; exact zeros are never drawn.
int sample_categorical(std::span<const double> probs, Rng& rng);

// Worker-thread cap read from MALEFIC_THREADS (default 1).
int worker_thread_cap();

// Runs fn(i) for i in [0, n). Uses up to worker_thread_cap() threads; results
// must not depend on scheduling (callers write to disjoint slots).
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

std::string lowercase(std::string s);
std::vector<std::string> split_string(const std::string& s, char delim);
std::string join_strings(const std::vector<std::string>& parts, const std::string& sep);

// FNV-1a over a byte string; used for config hashes.
uint64_t fnv1a64(std::string_view bytes);
std::string hex64(uint64_t v);

}  // namespace malefic
