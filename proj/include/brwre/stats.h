#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace brwre {

struct MeanEstimate {
    double value = 0.0;
    double stdError = 0.0;
};

/// Welford accumulator. Values are pushed in index order by callers, so the
/// result is independent of how the values were produced.
class RunningStats {
public:
    void push(double x) {
        ++count_;
        const double delta = x - mean_;
        mean_ += delta / static_cast<double>(count_);
        m2_ += delta * (x - mean_);
    }

    std::size_t count() const { return count_; }
    double mean() const { return mean_; }
    double variance() const { return count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 0.0; }
    double stddev() const { return std::sqrt(variance()); }
    double stdError() const {
        return count_ > 1 ? std::sqrt(variance() / static_cast<double>(count_)) : 0.0;
    }
    MeanEstimate estimate() const { return {mean(), stdError()}; }

private:
    std::size_t count_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

inline MeanEstimate meanOf(std::span<const double> values) {
    RunningStats stats;
    for (double v : values) {
        stats.push(v);
    }
    return stats.estimate();
}

}  // namespace brwre
