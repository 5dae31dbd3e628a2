#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "romer/moe.hpp"
#include "romer/stats.hpp"

namespace romer {

// Cumulative activation magnitudes A[l][e]: gate mass accumulated by expert
// e in layer l over a corpus, plus a raw selection-count channel.
struct ActivationMap {
    int num_layers = 0;
    int num_experts = 0;
    long long token_count = 0;
    std::vector<double> gate_mass;     // num_layers * num_experts
    std::vector<long long> counts;     // same shape

    ActivationMap() = default;
    ActivationMap(int layers, int experts)
        : num_layers(layers),
          num_experts(experts),
          gate_mass(static_cast<std::size_t>(layers) * experts, 0.0),
          counts(static_cast<std::size_t>(layers) * experts, 0) {}

    double& at(int layer, int expert) { return gate_mass[static_cast<std::size_t>(layer) * num_experts + expert]; }
    double at(int layer, int expert) const { return gate_mass[static_cast<std::size_t>(layer) * num_experts + expert]; }
    long long& count_at(int layer, int expert) { return counts[static_cast<std::size_t>(layer) * num_experts + expert]; }

    std::vector<double> layer_row(int layer) const {
        return std::vector<double>(gate_mass.begin() + static_cast<std::size_t>(layer) * num_experts,
                                   gate_mass.begin() + static_cast<std::size_t>(layer + 1) * num_experts);
    }
};

// Folds a routing trace into the activation map: every selected expert
// accrues its gate probability for that (token, layer) event.
inline ActivationMap accumulate_activation(const RoutingTrace& trace, int num_layers, int num_experts) {
    ActivationMap map(num_layers, num_experts);
    map.token_count = static_cast<long long>(trace.tokens.size());
    for (const TokenTrace& tok : trace.tokens) {
        if (static_cast<int>(tok.layers.size()) > num_layers) {
            throw std::invalid_argument("accumulate_activation: layer index out of range");
        }
        for (std::size_t l = 0; l < tok.layers.size(); ++l) {
            const RoutingEvent& ev = tok.layers[l];
            if (ev.selected.size() != ev.gates.size()) {
                throw std::invalid_argument("accumulate_activation: selected/gates size mismatch");
            }
            for (std::size_t s = 0; s < ev.selected.size(); ++s) {
                const int e = ev.selected[s];
                if (e < 0 || e >= num_experts) {
                    throw std::invalid_argument("accumulate_activation: expert index out of range");
                }
                map.at(static_cast<int>(l), e) += ev.gates[s];
                map.count_at(static_cast<int>(l), e) += 1;
            }
        }
    }
    return map;
}

inline ActivationMap add(const ActivationMap& a, const ActivationMap& b) {
    if (a.num_layers != b.num_layers || a.num_experts != b.num_experts) {
        throw std::invalid_argument("ActivationMap add: shape mismatch");
    }
    ActivationMap out = a;
    out.token_count += b.token_count;
    for (std::size_t i = 0; i < out.gate_mass.size(); ++i) {
        out.gate_mass[i] += b.gate_mass[i];
        out.counts[i] += b.counts[i];
    }
    return out;
}

struct LayerBalance {
    double entropy = 0.0;           // normalized by log E
    double max_mean_ratio = 0.0;
    double underact_fraction = 0.0; // share of experts below tau * uniform share
    bool empty = false;             // no gate mass reached this layer
};

struct LoadBalanceReport {
    double tau = 0.0;
    std::vector<LayerBalance> layers;
    double mean_entropy = 0.0;
    double mean_underact_fraction = 0.0;
};

inline LoadBalanceReport balance_report(const ActivationMap& map, double tau) {
    LoadBalanceReport rep;
    rep.tau = tau;
    rep.layers.resize(map.num_layers);
    double ent_sum = 0.0;
    double under_sum = 0.0;
    for (int l = 0; l < map.num_layers; ++l) {
        const std::vector<double> row = map.layer_row(l);
        LayerBalance& lb = rep.layers[l];
        double total = 0.0;
        double mx = 0.0;
        for (double v : row) {
            total += v;
            if (v > mx) mx = v;
        }
        if (total <= 0.0) {
            lb.empty = true;
            lb.entropy = 0.0;
            lb.max_mean_ratio = 0.0;
            lb.underact_fraction = 1.0;
        } else {
            lb.entropy = normalized_entropy(row);
            const double mean_share = total / map.num_experts;
            lb.max_mean_ratio = mx / mean_share;
            int under = 0;
            for (double v : row) {
                if (v < tau * mean_share) ++under;
            }
            lb.underact_fraction = static_cast<double>(under) / map.num_experts;
        }
        ent_sum += lb.entropy;
        under_sum += lb.underact_fraction;
    }
    if (map.num_layers > 0) {
        rep.mean_entropy = ent_sum / map.num_layers;
        rep.mean_underact_fraction = under_sum / map.num_layers;
    }
    return rep;
}

struct LogitSpreadStats {
    std::vector<double> clean_variance;  // per layer: mean over tokens of within-token logit variance
    std::vector<double> noisy_variance;
    std::vector<double> ratio;           // noisy / clean
};

inline LogitSpreadStats logit_spread(const RoutingTrace& clean, const RoutingTrace& noisy) {
    if (clean.num_layers != noisy.num_layers || clean.num_experts != noisy.num_experts ||
        clean.tokens.size() != noisy.tokens.size()) {
        throw std::invalid_argument("logit_spread: trace shape mismatch");
    }
    const int layers = clean.num_layers;
    LogitSpreadStats st;
    st.clean_variance.assign(layers, 0.0);
    st.noisy_variance.assign(layers, 0.0);
    st.ratio.assign(layers, 0.0);
    const std::size_t tokens = clean.tokens.size();
    if (tokens == 0) return st;
    for (std::size_t t = 0; t < tokens; ++t) {
        if (clean.tokens[t].layers.size() != static_cast<std::size_t>(layers) ||
            noisy.tokens[t].layers.size() != static_cast<std::size_t>(layers)) {
            throw std::invalid_argument("logit_spread: trace shape mismatch");
        }
        for (int l = 0; l < layers; ++l) {
            st.clean_variance[l] += variance(clean.tokens[t].layers[l].logits);
            st.noisy_variance[l] += variance(noisy.tokens[t].layers[l].logits);
        }
    }
    for (int l = 0; l < layers; ++l) {
        st.clean_variance[l] /= static_cast<double>(tokens);
        st.noisy_variance[l] /= static_cast<double>(tokens);
        st.ratio[l] = st.clean_variance[l] > 0.0 ? st.noisy_variance[l] / st.clean_variance[l]
                                                 : std::numeric_limits<double>::quiet_NaN();
    }
    return st;
}

// Shortest decimal string that round-trips a double exactly.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Grid file: one header line `# layers=L experts=E tokens=T`, then L rows of
// E comma-separated values (raw gate mass; consumers normalize).
inline void export_heatmap(const ActivationMap& map, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open heatmap file for writing: " + path);
    out << "# layers=" << map.num_layers << " experts=" << map.num_experts
        << " tokens=" << map.token_count << "\n";
    for (int l = 0; l < map.num_layers; ++l) {
        for (int e = 0; e < map.num_experts; ++e) {
            if (e) out << ",";
            out << format_double(map.at(l, e));
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("failed writing heatmap file: " + path);
}

// Same grid format for the selection-count channel.
inline void export_count_heatmap(const ActivationMap& map, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open heatmap file for writing: " + path);
    out << "# layers=" << map.num_layers << " experts=" << map.num_experts
        << " tokens=" << map.token_count << "\n";
    for (int l = 0; l < map.num_layers; ++l) {
        for (int e = 0; e < map.num_experts; ++e) {
            if (e) out << ",";
            out << map.counts[static_cast<std::size_t>(l) * map.num_experts + e];
        }
        out << "\n";
    }
}

inline ActivationMap load_heatmap(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open heatmap file: " + path);
    std::string header;
    std::getline(in, header);
    int layers = 0, experts = 0;
    long long tokens = 0;
    if (std::sscanf(header.c_str(), "# layers=%d experts=%d tokens=%lld", &layers, &experts, &tokens) != 3) {
        throw std::runtime_error("bad heatmap header in " + path);
    }
    ActivationMap map(layers, experts);
    map.token_count = tokens;
    std::string line;
    for (int l = 0; l < layers; ++l) {
        if (!std::getline(in, line)) throw std::runtime_error("truncated heatmap file: " + path);
        std::stringstream ss(line);
        std::string cell;
        for (int e = 0; e < experts; ++e) {
            if (!std::getline(ss, cell, ',')) throw std::runtime_error("short heatmap row in " + path);
            map.at(l, e) = std::stod(cell);
        }
    }
    return map;
}

// Mean symmetric KL divergence between softmax-normalized outputs:
// 0.5 * (KL(p||q) + KL(q||p)) averaged over tokens. Zero iff every pair is
// identical after softmax (uniform shifts vanish).
inline double output_divergence(const std::vector<Vector>& ref, const std::vector<Vector>& test) {
    if (ref.size() != test.size()) throw std::invalid_argument("output_divergence: token count mismatch");
    if (ref.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t t = 0; t < ref.size(); ++t) {
        if (ref[t].size() != test[t].size()) {
            throw std::invalid_argument("output_divergence: vector length mismatch");
        }
        const Vector p = softmax(ref[t]);
        const Vector q = softmax(test[t]);
        double d = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            d += 0.5 * (p[i] * std::log(p[i] / q[i]) + q[i] * std::log(q[i] / p[i]));
        }
        total += d;
    }
    return total / static_cast<double>(ref.size());
}

inline void write_balance_report(const LoadBalanceReport& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open report file for writing: " + path);
    out << "tau " << format_double(rep.tau) << "\n";
    out << "mean_entropy " << format_double(rep.mean_entropy) << "\n";
    out << "mean_underact_fraction " << format_double(rep.mean_underact_fraction) << "\n";
    for (std::size_t l = 0; l < rep.layers.size(); ++l) {
        const LayerBalance& lb = rep.layers[l];
        out << "layer" << l << ".entropy " << format_double(lb.entropy) << "\n";
        out << "layer" << l << ".max_mean_ratio " << format_double(lb.max_mean_ratio) << "\n";
        out << "layer" << l << ".underact_fraction " << format_double(lb.underact_fraction) << "\n";
        out << "layer" << l << ".empty " << (lb.empty ? 1 : 0) << "\n";
    }
}

}  // namespace romer
