#pragma once

#include <atomic>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace foct {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user input: malformed files, contract violations on arguments.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// No tree in the search space satisfies the leaf-size constraint.
class Infeasible : public Error {
public:
    using Error::Error;
};

/// A requested enumeration or resampling budget cannot be met.
class BudgetExceeded : public Error {
public:
    using Error::Error;
};

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent generator from a root seed and a path of stream
/// indices, e.g. stream(seed, {replicate, 0}). The same path always yields the
/// same sequence, independent of how many other streams exist.
inline std::mt19937_64 stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path)
{
    std::uint64_t h = splitmix64(seed);
    for (std::uint64_t p : path)
        h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    return std::mt19937_64(h);
}

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline unsigned resolve_threads(unsigned requested)
{
    if (requested > 0)
        return requested;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Callers write
/// results into per-index slots so the outcome never depends on scheduling.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn)
{
    threads = std::min<unsigned>(resolve_threads(threads), static_cast<unsigned>(count));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::thread> workers;
    workers.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) {
        workers.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= count || failed.load())
                    return;
                try {
                    fn(i);
                } catch (...) {
                    if (!failed.exchange(true))
                        failure = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : workers)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
}

} // namespace foct
