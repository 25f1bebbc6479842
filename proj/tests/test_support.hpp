#pragma once

// Test-side helpers: an independent scalar minimiser and a log-uniform
// sampler on std::mt19937_64, kept apart from the library's own oracle and
// rng code.

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fedbud/common.hpp"

namespace fedbud::testing {

/// Ternary search in log space on [lo, hi]; f must be unimodal there.
inline double ternary_log_minimize(const std::function<double(double)>& f, double lo, double hi,
                                   int iterations = 300) {
    double a = std::log(lo), b = std::log(hi);
    for (int i = 0; i < iterations; ++i) {
        const double m1 = a + (b - a) / 3.0;
        const double m2 = b - (b - a) / 3.0;
        if (f(std::exp(m1)) < f(std::exp(m2)))
            b = m2;
        else
            a = m1;
    }
    return std::exp(0.5 * (a + b));
}

class LogUniform {
public:
    explicit LogUniform(std::uint64_t seed, double lo = 1e-2, double hi = 1e2)
        : gen_(seed), dist_(std::log(lo), std::log(hi)) {}

    double operator()() { return std::exp(dist_(gen_)); }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
    std::uniform_real_distribution<double> dist_;
};

/// Collects warnings for the lifetime of the object.
class WarningCapture {
public:
    WarningCapture()
        : previous_(set_warning_handler([this](const std::string& m) { messages.push_back(m); })) {}
    ~WarningCapture() { set_warning_handler(previous_); }

    std::vector<std::string> messages;

private:
    WarningHandler previous_;
};

inline double rel_err(double got, double want) { return std::abs(got - want) / std::abs(want); }

}  // namespace fedbud::testing
