#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "romer/moe.hpp"
#include "romer/profile.hpp"
#include "romer/stats.hpp"

namespace romer {

// Per-layer replacement bookkeeping. top is ordered by descending activation
// rank, bottom by ascending rank; the bijection pairs top[r] with bottom[r]
// (most-activated expert overwrites the least-activated slot).
struct LayerPlan {
    std::vector<int> top;
    std::vector<int> bottom;

    bool empty() const { return top.empty(); }

    // Rank of `expert` in the top set, or -1.
    int top_rank(int expert) const {
        for (std::size_t r = 0; r < top.size(); ++r) {
            if (top[r] == expert) return static_cast<int>(r);
        }
        return -1;
    }

    bool in_bottom(int expert) const {
        return std::find(bottom.begin(), bottom.end(), expert) != bottom.end();
    }
};

struct ReplacementPlan {
    int n = 0;
    int num_experts = 0;
    std::vector<LayerPlan> layers;

    bool empty() const { return n == 0; }

    void validate(int model_experts, int model_layers) const {
        if (n == 0) return;
        if (num_experts != model_experts) {
            throw std::invalid_argument("plan: expert count does not match model");
        }
        if (static_cast<int>(layers.size()) != model_layers) {
            throw std::invalid_argument("plan: layer count does not match model");
        }
        for (const LayerPlan& lp : layers) {
            if (static_cast<int>(lp.top.size()) != n || static_cast<int>(lp.bottom.size()) != n) {
                throw std::invalid_argument("plan: layer sets must both hold n indices");
            }
            for (int i : lp.top) {
                if (i < 0 || i >= model_experts) throw std::invalid_argument("plan: index out of range");
                if (lp.in_bottom(i)) throw std::invalid_argument("plan: top and bottom sets overlap");
            }
            for (int i : lp.bottom) {
                if (i < 0 || i >= model_experts) throw std::invalid_argument("plan: index out of range");
            }
        }
    }
};

// How discarded bottom-set logits behave: kMask removes those experts from
// top-k candidacy entirely; kLiteralZero writes a 0.0 logit, which still
// receives softmax mass and can be selected.
enum class BottomMode { kMask, kLiteralZero };

inline std::string bottom_mode_name(BottomMode m) {
    return m == BottomMode::kMask ? "mask" : "literal-zero";
}

inline BottomMode bottom_mode_from_name(const std::string& name) {
    if (name == "mask") return BottomMode::kMask;
    if (name == "literal-zero" || name == "literal_zero" || name == "zero") return BottomMode::kLiteralZero;
    throw std::invalid_argument("unknown bottom mode: " + name);
}

struct CalibrationConfig {
    double lambda = 0.0;          // calibration strength
    int n = 0;                    // replacement count per layer
    BottomMode bottom_mode = BottomMode::kMask;
    bool replacement_enabled = true;
    bool calibration_enabled = true;
    bool calibrate_before_adjust = true;  // pipeline order; false = adjust first (ablation)
    bool halve_top_logits = true;         // the z/2 rule on top-set logits
    bool extended_lambda = false;         // admit lambda in [0,1] for ablation axes

    void validate() const {
        const double hi = extended_lambda ? 1.0 : 0.5;
        if (!(lambda >= 0.0) || lambda > hi || (!extended_lambda && lambda == 0.5)) {
            throw std::invalid_argument("calibration: lambda out of domain");
        }
        if (n < 0) throw std::invalid_argument("calibration: n must be >= 0");
    }
};

// Per-layer top/bottom selection from an activation map row. Tie values
// resolve to the lower index; the bottom set is drawn from the experts left
// after the top set so the two never overlap even on flat maps.
inline LayerPlan build_layer_plan(const std::vector<double>& activation, int n) {
    const int experts = static_cast<int>(activation.size());
    if (2 * n > experts) {
        throw std::invalid_argument("top and bottom sets would overlap (2n > E)");
    }
    LayerPlan lp;
    if (n == 0) return lp;
    std::vector<int> order(experts);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (activation[a] != activation[b]) return activation[a] > activation[b];
        return a < b;
    });
    lp.top.assign(order.begin(), order.begin() + n);
    std::vector<int> rest(order.begin() + n, order.end());
    std::sort(rest.begin(), rest.end(), [&](int a, int b) {
        if (activation[a] != activation[b]) return activation[a] < activation[b];
        return a < b;
    });
    lp.bottom.assign(rest.begin(), rest.begin() + n);
    return lp;
}

// Router logit edit applied at inference time once a plan is installed:
// top-set logits are halved, bottom-set logits are discarded per `mode`.
// Masked entries become -inf sentinels (zero softmax mass, never selected).
inline Vector adjust_logits(const Vector& z, const LayerPlan& plan, BottomMode mode,
                            bool halve_top = true) {
    Vector out = z;
    for (int i : plan.top) {
        if (i < 0 || static_cast<std::size_t>(i) >= z.size()) {
            throw std::invalid_argument("adjust_logits: top index out of range");
        }
        if (halve_top) out[i] = z[i] / 2.0;
    }
    for (int i : plan.bottom) {
        if (i < 0 || static_cast<std::size_t>(i) >= z.size()) {
            throw std::invalid_argument("adjust_logits: bottom index out of range");
        }
        out[i] = mode == BottomMode::kMask ? -std::numeric_limits<double>::infinity() : 0.0;
    }
    return out;
}

// Percentile-based router calibration: sort ascending, add lambda*IQR to the
// lower half (positions 1..floor(E/2)), subtract it from the upper half,
// then restore original index order. lambda = 0 is the exact identity.
// Non-finite entries (mask sentinels) are left in place and excluded from
// the statistics.
inline Vector calibrate_logits(const Vector& z, double lambda) {
    if (z.size() < 2) throw std::invalid_argument("calibrate_logits: need len >= 2");
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw std::invalid_argument("calibrate_logits: lambda outside [0,1]");
    }
    if (lambda == 0.0) return z;

    std::vector<int> finite;
    finite.reserve(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (std::isfinite(z[i])) finite.push_back(static_cast<int>(i));
    }
    if (finite.size() < 2) return z;

    // Stable value sort: equal logits keep index order, so ranks are unique.
    std::vector<int> order = finite;
    std::sort(order.begin(), order.end(), [&z](int a, int b) {
        if (z[a] != z[b]) return z[a] < z[b];
        return a < b;
    });

    Vector vals;
    vals.reserve(order.size());
    for (int i : order) vals.push_back(z[i]);
    const double shift = lambda * interquartile_range(vals);
    const std::size_t half = order.size() / 2;

    Vector out = z;
    for (std::size_t r = 0; r < order.size(); ++r) {
        out[order[r]] = vals[r] + (r < half ? shift : -shift);
    }
    return out;
}

// Builds the per-layer replacement plan from a profiled activation map.
inline ReplacementPlan build_replacement_plan(const ActivationMap& map, int n) {
    if (n < 0) throw std::invalid_argument("build_replacement_plan: n must be >= 0");
    if (2 * n > map.num_experts) {
        throw std::invalid_argument("top and bottom sets would overlap (2n > E)");
    }
    ReplacementPlan plan;
    plan.n = n;
    plan.num_experts = map.num_experts;
    plan.layers.resize(map.num_layers);
    for (int l = 0; l < map.num_layers; ++l) {
        plan.layers[l] = build_layer_plan(map.layer_row(l), n);
    }
    return plan;
}

// Programming-phase overwrite: every bottom-slot expert receives a deep copy
// of its paired top expert's weights. The input model is untouched.
inline MoEModel apply_replacement(const MoEModel& model, const ReplacementPlan& plan) {
    MoEModel patched = model;
    if (plan.empty()) return patched;
    plan.validate(model.num_experts(), model.num_layers());
    for (int l = 0; l < model.num_layers(); ++l) {
        const LayerPlan& lp = plan.layers[l];
        for (std::size_t r = 0; r < lp.top.size(); ++r) {
            patched.layers[l].experts[lp.bottom[r]] = model.layers[l].experts[lp.top[r]];
        }
    }
    return patched;
}

// Physical-location view of an activation map under a plan: a duplicated
// expert's gate mass is computed half in its own slot and half in the
// overwritten slot, which is what a per-location activity heatmap shows.
inline ActivationMap location_activity(const ActivationMap& map, const ReplacementPlan& plan) {
    ActivationMap out = map;
    if (plan.empty()) return out;
    if (plan.num_experts != map.num_experts || static_cast<int>(plan.layers.size()) != map.num_layers) {
        throw std::invalid_argument("location_activity: plan does not match map shape");
    }
    for (int l = 0; l < map.num_layers; ++l) {
        const LayerPlan& lp = plan.layers[l];
        for (std::size_t r = 0; r < lp.top.size(); ++r) {
            const int t = lp.top[r];
            const int b = lp.bottom[r];
            const double half_mass = map.at(l, t) / 2.0;
            out.at(l, t) -= half_mass;
            out.at(l, b) += half_mass;
            const long long c = map.counts[static_cast<std::size_t>(l) * map.num_experts + t];
            out.counts[static_cast<std::size_t>(l) * map.num_experts + b] += c;
        }
    }
    return out;
}

// Plan file: auditable per-layer index lists. Pairing is positional
// (r-th top index maps to r-th bottom index).
inline void save_plan(const ReplacementPlan& plan, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open plan file for writing: " + path);
    out << "romer-plan 1\n";
    out << "layers " << plan.layers.size() << " experts " << plan.num_experts << " n " << plan.n << "\n";
    for (std::size_t l = 0; l < plan.layers.size(); ++l) {
        out << "layer " << l << " top";
        for (int i : plan.layers[l].top) out << " " << i;
        out << " bottom";
        for (int i : plan.layers[l].bottom) out << " " << i;
        out << "\n";
    }
    if (!out) throw std::runtime_error("failed writing plan file: " + path);
}

inline ReplacementPlan load_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open plan file: " + path);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "romer-plan" || version != 1) {
        throw std::runtime_error("not a romer-plan file: " + path);
    }
    ReplacementPlan plan;
    std::string kw;
    std::size_t layers = 0;
    in >> kw >> layers;
    if (kw != "layers") throw std::runtime_error("bad plan file (expected 'layers'): " + path);
    in >> kw >> plan.num_experts;
    if (kw != "experts") throw std::runtime_error("bad plan file (expected 'experts'): " + path);
    in >> kw >> plan.n;
    if (kw != "n") throw std::runtime_error("bad plan file (expected 'n'): " + path);
    plan.layers.resize(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        std::size_t idx = 0;
        in >> kw >> idx;
        if (kw != "layer" || idx != l) throw std::runtime_error("bad plan file layer row: " + path);
        in >> kw;
        if (kw != "top") throw std::runtime_error("bad plan file (expected 'top'): " + path);
        LayerPlan& lp = plan.layers[l];
        lp.top.resize(plan.n);
        for (int r = 0; r < plan.n; ++r) in >> lp.top[r];
        in >> kw;
        if (kw != "bottom") throw std::runtime_error("bad plan file (expected 'bottom'): " + path);
        lp.bottom.resize(plan.n);
        for (int r = 0; r < plan.n; ++r) in >> lp.bottom[r];
    }
    if (!in) throw std::runtime_error("truncated plan file: " + path);
    return plan;
}

}  // namespace romer
