#pragma once

// The hiePM controller and the bisection / random-scan baselines.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hiepm/array_channel.hpp"
#include "hiepm/codebook.hpp"
#include "hiepm/posterior.hpp"
#include "hiepm/rng.hpp"

namespace hiepm {

enum class MeasurementModel { full, onebit };

inline const char* to_string(MeasurementModel m) { return m == MeasurementModel::full ? "full" : "onebit"; }

struct StoppingRule {
    enum class Kind { fixed_length, variable_length };
    Kind kind = Kind::fixed_length;
    int n = 28;
    double epsilon = 1e-2;
    // Overrides epsilon when set, so targets below the double range stay usable.
    std::optional<double> log_epsilon;

    static StoppingRule fixed(int n) { return {Kind::fixed_length, n, 1e-2, std::nullopt}; }
    static StoppingRule variable(double eps) { return {Kind::variable_length, 28, eps, std::nullopt}; }
    static StoppingRule variable_log(double ln_eps) {
        return {Kind::variable_length, 28, std::exp(ln_eps), ln_eps};
    }

    double ln_epsilon() const { return log_epsilon ? *log_epsilon : std::log(epsilon); }

    void validate() const {
        if (kind == Kind::fixed_length && n < 1) throw std::invalid_argument("stopping: n must be >= 1");
        if (kind == Kind::variable_length && !log_epsilon && !(epsilon > 0.0 && epsilon < 1.0))
            throw std::invalid_argument("stopping: epsilon must lie in (0,1)");
        if (kind == Kind::variable_length && log_epsilon && !(*log_epsilon < 0.0))
            throw std::invalid_argument("stopping: log epsilon must be < 0");
    }
};

struct ResolutionRule {
    enum class Kind { fixed, variable };
    Kind kind = Kind::fixed;
    double epsilon = 0.1;  // VR confidence 1 - epsilon
};

/// Codebook node, 1-based; level 0 denotes the root.
struct Node {
    int level = 0;
    int index = 1;
    bool operator==(const Node&) const = default;
};

struct TraceStep {
    Node node;                    // level 0 for random-scan beams
    std::vector<int> directions;  // random scan only
    cplx y{};
    std::optional<int> bit;
};

struct SessionTrace {
    std::vector<TraceStep> steps;
    int tau = 0;
    Node final_beam;
    double phi_hat = 0.0;
    bool capped = false;
    std::vector<std::vector<double>> snapshots;  // posterior before each step, when recorded
    std::vector<double> final_posterior;
};

/// Posterior mass of every tree node in heap order: node (l,k) sits at 2^l + k - 1.
class MassTree {
public:
    explicit MassTree(std::span<const double> pi) {
        const int m = static_cast<int>(pi.size());
        if (!is_power_of_two(m)) throw std::invalid_argument("mass tree: size must be a power of two");
        levels_ = 0;
        while ((1 << levels_) < m) ++levels_;
        mass_.assign(2 * static_cast<std::size_t>(m), 0.0);
        std::copy(pi.begin(), pi.end(), mass_.begin() + m);
        for (int j = m - 1; j >= 1; --j) mass_[j] = mass_[2 * j] + mass_[2 * j + 1];
    }

    int levels() const { return levels_; }
    double operator()(int l, int k) const { return mass_[(std::size_t{1} << l) + k - 1]; }
    double operator()(Node n) const { return (*this)(n.level, n.index); }

    /// Heaviest cell at level l; ties to the lower index.
    Node argmax(int l) const {
        Node best{l, 1};
        for (int k = 2; k <= (1 << l); ++k)
            if ((*this)(l, k) > (*this)(best)) best.index = k;
        return best;
    }

private:
    int levels_ = 0;
    std::vector<double> mass_;
};

/// Descend toward the heavier child while the current mass exceeds 1/2, then
/// pick whichever of the exit node and its parent has mass closer to 1/2.
inline Node hiepm_select(std::span<const double> pi) {
    const MassTree tree(pi);
    const int S = tree.levels();
    Node cur{0, 1};
    while (cur.level < S && (cur.level == 0 || tree(cur) > 0.5)) {
        const Node a{cur.level + 1, 2 * cur.index - 1};
        const Node b{cur.level + 1, 2 * cur.index};
        cur = tree(b) > tree(a) ? b : a;
    }
    if (cur.level == 1) return cur;
    const Node up{cur.level - 1, (cur.index + 1) / 2};
    return std::abs(tree(up) - 0.5) < std::abs(tree(cur) - 0.5) ? up : cur;
}

inline Node hiepm_select(const Posterior& pi) { return hiepm_select(pi.probs()); }

/// FL: t == n. VL: max pi > 1 - eps, tested as ln(sum of the rest) < ln eps.
inline bool check_stop(const Posterior& pi, int t, const StoppingRule& rule) {
    if (rule.kind == StoppingRule::Kind::fixed_length) return t >= rule.n;
    return pi.log_residual_mass() < rule.ln_epsilon();
}

inline Node final_beam(std::span<const double> pi, const ResolutionRule& rule) {
    const MassTree tree(pi);
    const int S = tree.levels();
    if (rule.kind == ResolutionRule::Kind::fixed) return tree.argmax(S);
    for (int l = S; l >= 1; --l) {
        const Node n = tree.argmax(l);
        if (tree(n) >= 1.0 - rule.epsilon) return n;
    }
    return tree.argmax(1);
}

inline Node final_beam(const Posterior& pi, const ResolutionRule& rule) {
    return final_beam(pi.probs(), rule);
}

/// Quantizer threshold and flip probabilities for one beam.
struct OneBitModel {
    double v_power = 0.0;
    double p_in = 0.5;   // P(z=0 | AoA inside)
    double p_out = 0.5;  // P(z=1 | AoA outside)
    bool minimax = true;  // false when G <= g forced the midpoint fallback
};

inline OneBitModel onebit_model(double G, double g, double P, double noise_var, double abs_alpha) {
    // keep likelihoods finite: a flip that underflows to 0 would zero out the true AoA
    constexpr double floor = 1e-300;
    OneBitModel m;
    if (G > g && abs_alpha > 0.0) {
        const auto t = optimal_threshold(G, g, P, noise_var, abs_alpha);
        m.v_power = t.power;
        m.p_in = rice_cdf(t.amplitude, measurement_rice(G, P, noise_var, abs_alpha));
        m.p_out = rice_ccdf(t.amplitude, measurement_rice(g, P, noise_var, abs_alpha));
    } else {
        m.minimax = false;
        m.v_power = P * abs_alpha * abs_alpha * 0.5 * (G + g) + noise_var;
        const double amp = std::sqrt(m.v_power);
        m.p_in = rice_cdf(amp, measurement_rice(G, P, noise_var, abs_alpha));
        m.p_out = rice_ccdf(amp, measurement_rice(g, P, noise_var, abs_alpha));
    }
    m.p_in = std::clamp(m.p_in, floor, 1.0 - floor);
    m.p_out = std::clamp(m.p_out, floor, 1.0 - floor);
    return m;
}

/// Memoized onebit_model keyed by (G, g); ideal beams share one entry per level.
class OneBitCache {
public:
    OneBitCache(double P, double noise_var, double abs_alpha)
        : P_(P), noise_var_(noise_var), abs_alpha_(abs_alpha) {}

    const OneBitModel& get(double G, double g) {
        const auto key = std::make_pair(G, g);
        auto it = cache_.find(key);
        if (it == cache_.end())
            it = cache_.emplace(key, onebit_model(G, g, P_, noise_var_, abs_alpha_)).first;
        return it->second;
    }

private:
    double P_, noise_var_, abs_alpha_;
    std::map<std::pair<double, double>, OneBitModel> cache_;
};

namespace detail {

// 1-bit observation of a beam. With a forced crossover the channel is a BSC on
// "AoA inside the beam", bypassing the Rician front end.
inline int onebit_observe(const ChannelState& ch, cplx response, bool inside,
                          const OneBitModel& m, std::optional<double> forced, CounterRng& rng,
                          cplx& y) {
    if (forced) {
        y = {};
        const int flip = rng.uniform() < *forced ? 1 : 0;
        return (inside ? 1 : 0) ^ flip;
    }
    y = measure_response(ch, response, rng);
    return onebit_quantize(y, m.v_power);
}

}  // namespace detail

struct HiepmConfig {
    MeasurementModel model = MeasurementModel::full;
    StoppingRule stop;
    ResolutionRule resolution;
    int tau_max = 10000;
    bool record_snapshots = false;
    std::optional<double> forced_crossover;  // 1-bit only
};

/// One hiePM access attempt. The controller uses alpha_hat, the channel uses ch.alpha.
class HiepmSession {
public:
    HiepmSession(const HierCodebook& cb, HiepmConfig cfg, const ChannelState& ch, cplx alpha_hat)
        : cb_(cb), cfg_(std::move(cfg)), ch_(ch), alpha_hat_(alpha_hat),
          pi_(init_uniform(cb.grid().size())), bits_(ch.power, ch.noise_var, std::abs(alpha_hat)) {
        cfg_.stop.validate();
        ch.validate(cb.grid());
        if (cfg_.tau_max < 1) throw std::invalid_argument("hiepm: tau_max must be >= 1");
        if (cfg_.forced_crossover && !(*cfg_.forced_crossover >= 0.0 && *cfg_.forced_crossover <= 0.5))
            throw std::invalid_argument("hiepm: forced crossover must lie in [0, 1/2]");
    }

    const Posterior& posterior() const { return pi_; }
    int t() const { return static_cast<int>(trace_.steps.size()); }

    bool stopped() const { return check_stop(pi_, t(), cfg_.stop) || capped(); }
    bool capped() const {
        return cfg_.stop.kind == StoppingRule::Kind::variable_length && t() >= cfg_.tau_max &&
               !check_stop(pi_, t(), cfg_.stop);
    }

    void step(CounterRng& rng) {
        if (cfg_.record_snapshots)
            trace_.snapshots.emplace_back(pi_.probs().begin(), pi_.probs().end());
        const Node n = hiepm_select(pi_);
        const Codeword& cw = cb_.at(n.level, n.index);
        const cplx r = cw.response[static_cast<std::size_t>(ch_.aoa_index)];
        TraceStep s{n, {}, {}, {}};
        if (cfg_.model == MeasurementModel::full) {
            s.y = measure_response(ch_, r, rng);
            update_full(pi_, s.y, cw.response, alpha_hat_, ch_.power, ch_.noise_var);
        } else {
            OneBitModel m;
            if (cfg_.forced_crossover)
                m.p_in = m.p_out = *cfg_.forced_crossover;
            else
                m = bits_.get(cw.min_in_gain2, cw.max_out_gain2);
            const int z = detail::onebit_observe(ch_, r, cw.support.contains(ch_.aoa_index), m,
                                                 cfg_.forced_crossover, rng, s.y);
            s.bit = z;
            update_onebit(pi_, z, cw.support, m.p_in, m.p_out);
        }
        trace_.steps.push_back(std::move(s));
    }

    SessionTrace run(CounterRng& rng) {
        while (!stopped()) step(rng);
        return finish();
    }

    SessionTrace finish() {
        trace_.tau = t();
        trace_.capped = capped();
        trace_.final_beam = final_beam(pi_, cfg_.resolution);
        trace_.phi_hat = cb_.center(trace_.final_beam.level, trace_.final_beam.index);
        trace_.final_posterior.assign(pi_.probs().begin(), pi_.probs().end());
        return trace_;
    }

private:
    const HierCodebook& cb_;
    HiepmConfig cfg_;
    ChannelState ch_;
    cplx alpha_hat_;
    Posterior pi_;
    OneBitCache bits_;
    SessionTrace trace_;
};

inline SessionTrace run_hiepm(const HierCodebook& cb, const HiepmConfig& cfg, const ChannelState& ch,
                              cplx alpha_hat, CounterRng& rng) {
    HiepmSession s(cb, cfg, ch, alpha_hat);
    return s.run(rng);
}

/// Equal-power bisection: at each level probe both children `reps` times and
/// descend into the one with larger summed |y|^2 (ties to the lower index).
inline SessionTrace bisection_baseline(const ChannelState& ch, const HierCodebook& cb, int reps,
                                       CounterRng& rng) {
    if (reps < 1) throw std::invalid_argument("bisection: reps_per_level must be >= 1");
    ch.validate(cb.grid());
    SessionTrace tr;
    Node cur{0, 1};
    for (int l = 1; l <= cb.levels(); ++l) {
        double energy[2] = {0.0, 0.0};
        for (int c = 0; c < 2; ++c) {
            const Node child{l, 2 * cur.index - 1 + c};
            const cplx r = cb.at(child.level, child.index).response[static_cast<std::size_t>(ch.aoa_index)];
            for (int rep = 0; rep < reps; ++rep) {
                TraceStep s{child, {}, measure_response(ch, r, rng), {}};
                energy[c] += std::norm(s.y);
                tr.steps.push_back(std::move(s));
            }
        }
        cur = Node{l, 2 * cur.index - 1 + (energy[1] > energy[0] ? 1 : 0)};
    }
    tr.tau = static_cast<int>(tr.steps.size());
    tr.final_beam = cur;
    tr.phi_hat = cb.center(cur.level, cur.index);
    return tr;
}

/// Non-adaptive random multi-lobe probing for tau samples, then the FR rule.
inline SessionTrace random_scan_baseline(const ChannelState& ch, const RandomScanner& scanner,
                                         const HierCodebook& cb, int tau, MeasurementModel model,
                                         cplx alpha_hat, CounterRng& rng) {
    if (tau < 1) throw std::invalid_argument("random scan: tau must be >= 1");
    ch.validate(cb.grid());
    Posterior pi = init_uniform(cb.grid().size());
    OneBitCache bits(ch.power, ch.noise_var, std::abs(alpha_hat));
    SessionTrace tr;
    for (int t = 0; t < tau; ++t) {
        RandomBeam b = scanner.sample(rng);
        const auto idx = static_cast<std::size_t>(ch.aoa_index);
        TraceStep s{Node{0, 0}, b.directions, {}, {}};
        if (model == MeasurementModel::full) {
            s.y = measure_response(ch, b.response[idx], rng);
            update_full(pi, s.y, b.response, alpha_hat, ch.power, ch.noise_var);
        } else {
            const auto& m = bits.get(b.min_in_gain2, b.max_out_gain2);
            const int z = detail::onebit_observe(ch, b.response[idx], b.mask[idx] != 0, m,
                                                 std::nullopt, rng, s.y);
            s.bit = z;
            update_onebit(pi, z, b.mask, m.p_in, m.p_out);
        }
        tr.steps.push_back(std::move(s));
    }
    tr.tau = tau;
    tr.final_beam = final_beam(pi, ResolutionRule{});
    tr.phi_hat = cb.center(tr.final_beam.level, tr.final_beam.index);
    tr.final_posterior.assign(pi.probs().begin(), pi.probs().end());
    return tr;
}

enum class PolicyKind { hiepm, bisection, random_scan };

struct PolicySpec {
    std::string name;  // free label for reports; derived when empty
    PolicyKind kind = PolicyKind::hiepm;
    MeasurementModel model = MeasurementModel::full;
    StoppingRule stop;  // random scan uses stop.n as its budget
    ResolutionRule resolution;
    int tau_max = 10000;
    int reps_per_level = 2;
    RandomScanBook scan{128, 16};
    std::optional<double> forced_crossover;
    std::optional<double> calibrate_tau;  // VL: pick epsilon so that E[tau] hits this
    bool record_snapshots = false;

    std::string label() const {
        if (!name.empty()) return name;
        switch (kind) {
            case PolicyKind::bisection:
                return "bisection";
            case PolicyKind::random_scan:
                return "random_scan_q" + std::to_string(scan.q);
            case PolicyKind::hiepm:
                break;
        }
        std::string s = "hiepm_";
        s += stop.kind == StoppingRule::Kind::fixed_length ? "FL" : "VL";
        s += resolution.kind == ResolutionRule::Kind::fixed ? "_FR" : "_VR";
        return s;
    }

    HiepmConfig hiepm_config() const {
        return HiepmConfig{model, stop, resolution, tau_max, record_snapshots, forced_crossover};
    }
};

/// Dispatch one session. `scanner` is required for random scan only.
inline SessionTrace run_session(const PolicySpec& spec, const HierCodebook& cb,
                                const RandomScanner* scanner, const ChannelState& ch,
                                cplx alpha_hat, CounterRng& rng) {
    switch (spec.kind) {
        case PolicyKind::hiepm:
            return run_hiepm(cb, spec.hiepm_config(), ch, alpha_hat, rng);
        case PolicyKind::bisection:
            return bisection_baseline(ch, cb, spec.reps_per_level, rng);
        case PolicyKind::random_scan:
            if (scanner == nullptr) throw std::invalid_argument("run_session: random scan needs a scanner");
            return random_scan_baseline(ch, *scanner, cb, spec.stop.n, spec.model, alpha_hat, rng);
    }
    throw std::logic_error("run_session: unknown policy");
}

}  // namespace hiepm
