#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "romer/linalg.hpp"
#include "romer/rng.hpp"

namespace romer {

// Multiplicative Gaussian device noise: each stored weight w becomes
// w * (1 + e), e ~ N(0, sigma_dev^2).
struct DeviceNoiseSpec {
    double sigma_dev = 0.0;

    void validate() const {
        if (sigma_dev < 0.0) throw std::invalid_argument("sigma_dev must be >= 0");
    }
};

// ADC quantization noise: additive uniform on (-step/2, step/2) per output,
// step = v_ref / (2^bits - 1).
struct AdcSpec {
    double v_ref = 1.0;
    int bits = 8;
    bool enabled = false;

    void validate() const {
        if (bits < 1) throw std::invalid_argument("adc bits must be >= 1");
        if (!(v_ref > 0.0)) throw std::invalid_argument("adc v_ref must be > 0");
    }
};

inline double quantization_step(const AdcSpec& adc) {
    adc.validate();
    return adc.v_ref / (std::pow(2.0, adc.bits) - 1.0);
}

// Frozen: one device-noise realization per weight location per deployment
// (models fixed programming errors). Resample: fresh realization every MVM.
enum class NoiseMode { kFrozenPerDeployment, kResamplePerCall };

struct NoiseConfig {
    DeviceNoiseSpec device;
    AdcSpec adc;
    bool perturb_router = true;
    bool perturb_experts = true;
    NoiseMode noise_mode = NoiseMode::kFrozenPerDeployment;

    bool device_enabled() const { return device.sigma_dev > 0.0; }
    bool adc_enabled() const { return adc.enabled; }
    bool fully_disabled() const { return !device_enabled() && !adc_enabled(); }

    static NoiseConfig disabled() { return NoiseConfig{}; }

    void validate() const {
        device.validate();
        adc.validate();
    }
};

// Operating-temperature axis: each point maps a temperature to the device
// sigma used at that regime. The shipped defaults are simulator plumbing,
// not chip measurements; outputs always echo the sigma actually used.
struct TemperatureProfile {
    struct Point {
        double temp_c;
        double sigma_dev;
    };
    std::vector<Point> points;

    static TemperatureProfile defaults() {
        return TemperatureProfile{{{25.0, 0.02}, {45.0, 0.04}, {65.0, 0.07}, {80.0, 0.10}, {85.0, 0.12}}};
    }

    void validate() const {
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (points[i].sigma_dev < 0.0) {
                throw std::invalid_argument("temperature profile: sigma_dev must be >= 0");
            }
            if (i > 0) {
                if (!(points[i].temp_c > points[i - 1].temp_c)) {
                    throw std::invalid_argument("temperature profile: temperatures must be strictly increasing");
                }
                if (points[i].sigma_dev < points[i - 1].sigma_dev) {
                    throw std::invalid_argument("temperature profile: sigma_dev must be non-decreasing");
                }
            }
        }
    }

    double sigma_at(double temp_c) const {
        for (const Point& p : points) {
            if (p.temp_c == temp_c) return p.sigma_dev;
        }
        throw std::invalid_argument("temperature " + std::to_string(temp_c) + " not in profile");
    }

    // Reverse lookup for reporting; returns NaN when sigma is not a profile point.
    double temp_for_sigma(double sigma) const {
        for (const Point& p : points) {
            if (p.sigma_dev == sigma) return p.temp_c;
        }
        return std::numeric_limits<double>::quiet_NaN();
    }
};

// W~ = W .* (1 + E_dev), entries of E_dev i.i.d. N(0, sigma^2). Zero weights
// stay exactly zero (multiplicative model). sigma == 0 is a bit-identical
// copy and consumes no draws.
inline Matrix perturb_weights(const Matrix& w, const DeviceNoiseSpec& spec, RandomStream& rng) {
    spec.validate();
    Matrix out = w;
    if (spec.sigma_dev == 0.0) return out;
    for (double& v : out.data()) {
        v *= 1.0 + rng.normal(0.0, spec.sigma_dev);
    }
    return out;
}

// Adds an independent uniform draw on (-step/2, step/2) to each entry.
// Disabled ADC returns y unchanged and consumes no draws.
inline Vector apply_adc(Vector y, const AdcSpec& adc, RandomStream& rng) {
    if (!adc.enabled) return y;
    const double step = quantization_step(adc);
    for (double& v : y) {
        v += rng.uniform01() * step - step * 0.5;
    }
    return y;
}

// One noisy MVM with resample-per-call semantics: device perturbation, exact
// product, then ADC noise. A fully disabled config reproduces matvec
// bit-exactly. Frozen-per-deployment reuse is handled by NoiseSession.
inline Vector noisy_matvec(const Matrix& w, const Vector& x, const NoiseConfig& cfg, RandomStream& rng) {
    cfg.validate();
    Vector y;
    if (cfg.device_enabled()) {
        y = matvec(perturb_weights(w, cfg.device, rng), x);
    } else {
        y = matvec(w, x);
    }
    return apply_adc(std::move(y), cfg.adc, rng);
}

// Stable ids for physical weight locations. Replacement copies weights into
// a different location, so the copy always receives its own noise draw.
constexpr std::uint64_t kTokenStreamBase = 0x8000000000000000ULL;

constexpr std::uint64_t location_router(int layer) {
    return (1ULL << 40) | (static_cast<std::uint64_t>(layer) << 20);
}
constexpr std::uint64_t location_expert_in(int layer, int expert) {
    return (2ULL << 40) | (static_cast<std::uint64_t>(layer) << 20) | static_cast<std::uint64_t>(expert);
}
constexpr std::uint64_t location_expert_out(int layer, int expert) {
    return (3ULL << 40) | (static_cast<std::uint64_t>(layer) << 20) | static_cast<std::uint64_t>(expert);
}

// One hardware deployment: the noise configuration plus the deployment seed.
// In frozen mode the perturbed copy of each weight matrix is materialized at
// most once per location and then shared read-only; ADC draws always come
// from the caller's per-call stream.
class NoiseSession {
public:
    NoiseSession(NoiseConfig cfg, std::uint64_t deployment_seed)
        : cfg_(std::move(cfg)), seed_(deployment_seed) {
        cfg_.validate();
    }

    const NoiseConfig& config() const { return cfg_; }
    std::uint64_t deployment_seed() const { return seed_; }

    // MVM through this deployment. `perturb` is the path toggle
    // (perturb_router / perturb_experts); when false the MVM is clean.
    Vector matvec(const Matrix& w, const Vector& x, std::uint64_t location, RandomStream& call_rng,
                  bool perturb) {
        if (!perturb) return romer::matvec(w, x);
        Vector y;
        if (!cfg_.device_enabled()) {
            y = romer::matvec(w, x);
        } else if (cfg_.noise_mode == NoiseMode::kResamplePerCall) {
            y = romer::matvec(perturb_weights(w, cfg_.device, call_rng), x);
        } else {
            y = romer::matvec(frozen(w, location), x);
        }
        return apply_adc(std::move(y), cfg_.adc, call_rng);
    }

    // Materializes (and caches) the frozen perturbation of `w` at `location`.
    // The draw depends only on (deployment seed, location), never on call order.
    const Matrix& frozen(const Matrix& w, std::uint64_t location) {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = cache_.find(location);
        if (it == cache_.end()) {
            RandomStream rng(seed_, location);
            it = cache_.emplace(location, perturb_weights(w, cfg_.device, rng)).first;
        } else if (!it->second.same_shape(w)) {
            throw std::logic_error("NoiseSession: location reused with different weight shape");
        }
        return it->second;
    }

private:
    NoiseConfig cfg_;
    std::uint64_t seed_;
    std::unordered_map<std::uint64_t, Matrix> cache_;
    std::mutex mu_;
};

}  // namespace romer
