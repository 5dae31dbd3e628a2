#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "romer/linalg.hpp"

namespace romer {

enum class Activation { kRelu, kGelu, kSilu };

inline double apply_activation(Activation a, double x) {
    switch (a) {
        case Activation::kRelu:
            return x > 0.0 ? x : 0.0;
        case Activation::kGelu:
            // tanh approximation
            return 0.5 * x * (1.0 + std::tanh(0.7978845608028654 * (x + 0.044715 * x * x * x)));
        case Activation::kSilu:
            return x / (1.0 + std::exp(-x));
    }
    throw std::logic_error("unknown activation");
}

inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::kRelu: return "relu";
        case Activation::kGelu: return "gelu";
        case Activation::kSilu: return "silu";
    }
    throw std::logic_error("unknown activation");
}

inline Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::kRelu;
    if (name == "gelu") return Activation::kGelu;
    if (name == "silu") return Activation::kSilu;
    throw std::invalid_argument("unknown activation: " + name);
}

// Two-matrix feed-forward expert: y = w_out * act(w_in * x).
// w_in maps hidden -> inner (rows = inner), w_out maps inner -> hidden.
struct ExpertFFN {
    Matrix w_in;
    Matrix w_out;
    Activation activation = Activation::kSilu;

    std::size_t hidden_dim() const { return w_in.cols(); }
    std::size_t inner_dim() const { return w_in.rows(); }

    void validate() const {
        if (w_in.rows() != w_out.cols()) {
            throw std::invalid_argument("expert: inner dim mismatch between w_in and w_out");
        }
        if (w_in.cols() != w_out.rows()) {
            throw std::invalid_argument("expert: hidden dim mismatch between w_in and w_out");
        }
    }

    bool same_nominal_weights(const ExpertFFN& other) const {
        return activation == other.activation && w_in == other.w_in && w_out == other.w_out;
    }
};

// Router linear map: hidden -> E logits, with the top-k count.
struct RouterSpec {
    Matrix w_router;
    int k = 1;

    int num_experts() const { return static_cast<int>(w_router.rows()); }

    void validate() const {
        if (k < 1 || k > num_experts()) {
            throw std::invalid_argument("router: need 1 <= k <= E, got k=" + std::to_string(k) +
                                        " E=" + std::to_string(num_experts()));
        }
    }
};

struct MoELayer {
    RouterSpec router;
    std::vector<ExpertFFN> experts;
    int layer_index = 0;

    void validate(std::size_t hidden_dim) const {
        router.validate();
        if (experts.size() != static_cast<std::size_t>(router.num_experts())) {
            throw std::invalid_argument("layer: expert count does not match router rows");
        }
        if (router.w_router.cols() != hidden_dim) {
            throw std::invalid_argument("layer: router input dim does not match hidden_dim");
        }
        for (const ExpertFFN& e : experts) {
            e.validate();
            if (e.hidden_dim() != hidden_dim) {
                throw std::invalid_argument("layer: expert hidden dim does not match model");
            }
        }
    }
};

// Gate probabilities applied to selected experts: values of the softmax over
// the full logit vector (default, matches how the calibration math reads
// them), or renormalized over the selected set.
enum class GateMode { kFullSoftmax, kRenormalized };

inline std::string gate_mode_name(GateMode m) {
    return m == GateMode::kFullSoftmax ? "full" : "renorm";
}

inline GateMode gate_mode_from_name(const std::string& name) {
    if (name == "full") return GateMode::kFullSoftmax;
    if (name == "renorm") return GateMode::kRenormalized;
    throw std::invalid_argument("unknown gate mode: " + name);
}

struct MoEModel {
    std::vector<MoELayer> layers;
    int hidden_dim = 0;
    bool residual = true;
    GateMode gate_mode = GateMode::kFullSoftmax;

    int num_layers() const { return static_cast<int>(layers.size()); }
    int num_experts() const { return layers.empty() ? 0 : layers.front().router.num_experts(); }

    void validate() const {
        if (hidden_dim < 1) throw std::invalid_argument("model: hidden_dim must be >= 1");
        for (const MoELayer& l : layers) l.validate(static_cast<std::size_t>(hidden_dim));
    }
};

// Routing record for one (token, layer) step: the logits the router decided
// on, the selected expert indices (top-k order) and their gate values.
struct RoutingEvent {
    Vector logits;
    std::vector<int> selected;
    std::vector<double> gates;
};

struct TokenTrace {
    std::vector<RoutingEvent> layers;
};

struct RoutingTrace {
    int num_layers = 0;
    int num_experts = 0;
    std::vector<TokenTrace> tokens;
};

}  // namespace romer
