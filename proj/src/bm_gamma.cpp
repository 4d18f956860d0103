#include "brwre/bm_gamma.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "brwre/parallel.h"

namespace brwre {

void TubeGrid::validate() const {
    if (!(a > 0.0)) {
        throw std::invalid_argument("tube grid: a must be > 0");
    }
    if (points < 51 || points % 2 == 0) {
        throw std::invalid_argument("tube grid: spatial points must be odd and >= 51");
    }
    if (!(dt > 0.0) || dt > a * a / 16.0) {
        throw std::invalid_argument("tube grid: need 0 < dt <= a^2/16");
    }
    const double ratio = horizon / dt;
    if (!(horizon > 0.0) || std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
        throw std::invalid_argument("tube grid: horizon must be a positive multiple of dt");
    }
}

std::size_t TubeGrid::steps() const { return static_cast<std::size_t>(std::llround(horizon / dt)); }

namespace {

double bridgeStay(double x, double y, double a, double dt) {
    const double up = (a - x) * (a - y);
    const double down = (a + x) * (a + y);
    if (up <= 0.0 || down <= 0.0) {
        return 0.0;
    }
    return -std::expm1(-2.0 * up / dt) * -std::expm1(-2.0 * down / dt);
}

}  // namespace

TubeKernel::TubeKernel(const TubeGrid& grid) : grid_(grid) {
    grid_.validate();
    const std::size_t m = grid_.points;
    h_ = 2.0 * grid_.a / static_cast<double>(m - 1);
    nodes_.resize(m);
    weights_.assign(m, h_);
    weights_.front() = weights_.back() = 0.5 * h_;
    for (std::size_t i = 0; i < m; ++i) {
        nodes_[i] = -grid_.a + h_ * static_cast<double>(i);
    }
    const double dt = grid_.dt;
    const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * dt);
    transition_.resize(m * m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double d = nodes_[j] - nodes_[i];
            transition_[i * m + j] =
                norm * std::exp(-d * d / (2.0 * dt)) * bridgeStay(nodes_[i], nodes_[j], grid_.a, dt);
        }
    }
}

std::vector<double> TubeKernel::logSurvivalCurve(std::span<const double> w, double beta) const {
    const std::size_t m = grid_.points;
    const std::size_t center = m / 2;
    const double dt = grid_.dt;
    std::vector<double> curve;
    curve.reserve(w.size());

    // mass[i]: quadrature mass at node i (density times weight), normalized
    std::vector<double> mass(m, 0.0);
    std::vector<double> density(m, 0.0);
    mass[center] = 1.0;
    double logTotal = 0.0;
    double previousW = 0.0;

    for (std::size_t k = 0; k < w.size(); ++k) {
        const double shift = beta * (w[k] - previousW);
        previousW = w[k];
        // φ(d + s) = φ(d)·e^{−s²/2Δ}·r^{j−c}·r^{−(i−c)} with r = e^{−hs/Δ}
        const double logR = -h_ * shift / dt;
        std::fill(density.begin(), density.end(), 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            if (mass[i] == 0.0) {
                continue;
            }
            const double u = mass[i] * std::exp(-logR * (static_cast<double>(i) - static_cast<double>(center)));
            const double* row = &transition_[i * m];
            for (std::size_t j = 0; j < m; ++j) {
                density[j] += u * row[j];
            }
        }
        const double common = -shift * shift / (2.0 * dt);
        double total = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            density[j] *= std::exp(common + logR * (static_cast<double>(j) - static_cast<double>(center)));
            mass[j] = density[j] * weights_[j];
            total += mass[j];
        }
        if (!(total > 0.0) || !std::isfinite(total)) {
            curve.resize(w.size(), -std::numeric_limits<double>::infinity());
            return curve;
        }
        for (double& x : mass) {
            x /= total;
        }
        logTotal += std::log(total);
        curve.push_back(logTotal);
    }
    return curve;
}

double tubeLogProbability(std::span<const double> w, double beta, const TubeGrid& grid) {
    if (w.size() != grid.steps()) {
        throw std::invalid_argument("tube probability: W path length must equal horizon/dt");
    }
    const auto curve = TubeKernel(grid).logSurvivalCurve(w, beta);
    return curve.empty() ? 0.0 : curve.back();
}

double tubeProbability(std::span<const double> w, double beta, const TubeGrid& grid) {
    return std::exp(tubeLogProbability(w, beta, grid));
}

std::vector<double> sampleBrownianPath(const TubeGrid& grid, CounterRng& rng) {
    std::normal_distribution<double> step(0.0, std::sqrt(grid.dt));
    std::vector<double> w(grid.steps());
    double x = 0.0;
    for (double& v : w) {
        x += step(rng);
        v = x;
    }
    return w;
}

MeanEstimate tubeProbabilityMonteCarlo(std::span<const double> w, double beta,
                                       const TubeGrid& grid, std::size_t replicates,
                                       std::uint64_t seed, unsigned threads) {
    grid.validate();
    if (w.size() != grid.steps()) {
        throw std::invalid_argument("tube probability: W path length must equal horizon/dt");
    }
    std::vector<double> inside(replicates, 0.0);
    parallelFor(replicates, threads, [&](std::size_t r) {
        CounterRng rng(seed, StreamPurpose::TubeMonteCarlo, r);
        std::normal_distribution<double> step(0.0, std::sqrt(grid.dt));
        double b = 0.0;
        double x = 0.0;
        for (double wk : w) {
            b += step(rng);
            const double y = b - beta * wk;
            if (std::abs(y) > grid.a || rng.uniform() >= bridgeStay(x, y, grid.a, grid.dt)) {
                return;
            }
            x = y;
        }
        inside[r] = 1.0;
    });
    return meanOf(inside);
}

GammaEstimate estimateGammaHat(double beta, const TubeGrid& grid, std::size_t outerReplicates,
                               std::uint64_t seed, unsigned threads) {
    if (outerReplicates < 2) {
        throw std::invalid_argument("estimate_gamma_hat: need at least 2 outer replicates");
    }
    if (!(beta >= 0.0) || !std::isfinite(beta)) {
        throw std::invalid_argument("estimate_gamma_hat: beta must be >= 0");
    }
    const TubeKernel kernel(grid);
    const double scale = -4.0 * grid.a * grid.a / grid.horizon;
    std::vector<double> values(outerReplicates, 0.0);
    std::vector<std::uint8_t> zero(outerReplicates, 0);
    parallelFor(outerReplicates, threads, [&](std::size_t r) {
        CounterRng rng(seed, StreamPurpose::GammaPath, r);
        const auto w = sampleBrownianPath(grid, rng);
        const auto curve = kernel.logSurvivalCurve(w, beta);
        const double logP = curve.back();
        if (!std::isfinite(logP)) {
            zero[r] = 1;
            return;
        }
        values[r] = scale * logP;
    });
    GammaEstimate out;
    out.beta = beta;
    out.grid = grid;
    out.replicates = outerReplicates;
    RunningStats stats;
    for (std::size_t r = 0; r < outerReplicates; ++r) {
        if (zero[r]) {
            ++out.excluded;
        } else {
            stats.push(values[r]);
        }
    }
    out.value = stats.mean();
    out.stdError = stats.stdError();
    out.unreliable = static_cast<double>(out.excluded) > 0.05 * static_cast<double>(outerReplicates);
    return out;
}

GammaPair gammaConstants(double sigma2, double sigmaStar2, double theta,
                         const GammaEstimate& gammaHat) {
    if (!(sigmaStar2 > 0.0) || !(theta > 0.0)) {
        throw std::invalid_argument("gamma constants: need sigma_*^2 > 0 and theta > 0");
    }
    const double beta = sigma2 / sigmaStar2;
    if (std::abs(beta - gammaHat.beta) > 1e-9 * std::max(1.0, beta)) {
        throw std::invalid_argument("gamma constants: gamma-hat was estimated at a different beta");
    }
    GammaPair out;
    out.gammaSigma = sigmaStar2 * gammaHat.value;
    out.gamma = -std::sqrt(out.gammaSigma / theta);
    return out;
}

}  // namespace brwre
