#pragma once

// Hierarchical beamforming codebook (ideal or least-squares practical) and the
// random-scan beams used by the non-adaptive baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <numbers>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "hiepm/array_channel.hpp"
#include "hiepm/rng.hpp"

namespace hiepm {

enum class BeamMode { ideal, practical };

inline const char* to_string(BeamMode m) { return m == BeamMode::ideal ? "ideal" : "practical"; }

/// Contiguous range of grid indices [first, first + count).
struct Support {
    int first = 0;
    int count = 0;

    bool contains(int i) const { return i >= first && i < first + count; }
    int last() const { return first + count - 1; }
    bool operator==(const Support&) const = default;
};

struct Codeword {
    int level = 0;  // 1..S
    int index = 0;  // 1..2^level
    Support support;
    std::optional<CVector> weights;  // practical mode only, unit norm
    CVector response;                // w^H a(theta_i) for every grid point
    double ideal_gain = 0.0;         // G_l (amplitude), ideal mode
    double min_in_gain2 = 0.0;       // min over support of |w^H a|^2
    double max_out_gain2 = 0.0;      // max over the rest of the grid

    double gain_at(int i) const { return std::abs(response[static_cast<std::size_t>(i)]); }
};

/// Unconstrained regularized least-squares beam designer: w = (A A^H + lambda I)^{-1} A g,
/// A holding steering vectors on a grid oversampled `oversample` times around each point,
/// plus zero-target points on the visible region outside the sector.
class BeamDesigner {
public:
    BeamDesigner(const AngleGrid& grid, const ArrayGeometry& geo, int oversample,
                 double regularization)
        : grid_(grid), geo_(geo), oversample_(oversample) {
        geo.validate();
        if (oversample < 1) throw std::invalid_argument("designer: oversample must be >= 1");
        if (!(regularization >= 0.0))
            throw std::invalid_argument("designer: regularization must be >= 0");
        const int n = geo.num_antennas;
        const int m = grid.size() * oversample;
        dense_.resize(n, m);
        for (int col = 0; col < m; ++col) {
            const auto a = steering(geo, oversampled_angle(col));
            for (int r = 0; r < n; ++r) dense_(r, col) = a[static_cast<std::size_t>(r)];
        }
        hypotheses_.resize(n, grid.size());
        for (int i = 0; i < grid.size(); ++i) {
            const auto a = steering(geo, grid[i]);
            for (int r = 0; r < n; ++r) hypotheses_(r, i) = a[static_cast<std::size_t>(r)];
        }
        // zero-target guard points over the visible region outside the sector
        const double dtheta = grid.step() / oversample;
        std::vector<double> guard;
        for (double t = grid.theta_lo() - 0.5 * grid.step() - dtheta; t > -std::numbers::pi / 2;
             t -= dtheta)
            guard.push_back(t);
        for (double t = grid.theta_hi() - 0.5 * grid.step() + dtheta; t < std::numbers::pi / 2;
             t += dtheta)
            guard.push_back(t);
        Eigen::MatrixXcd guard_cols(n, static_cast<Eigen::Index>(guard.size()));
        for (std::size_t c = 0; c < guard.size(); ++c) {
            const auto a = steering(geo, guard[c]);
            for (int r = 0; r < n; ++r)
                guard_cols(r, static_cast<Eigen::Index>(c)) = a[static_cast<std::size_t>(r)];
        }
        Eigen::MatrixXcd gram = dense_ * dense_.adjoint() + guard_cols * guard_cols.adjoint();
        // relative Tikhonov term, scaled to the mean eigenvalue
        const double lambda = regularization * gram.trace().real() / n;
        gram += lambda * Eigen::MatrixXcd::Identity(n, n);
        llt_.compute(gram);
        if (llt_.info() != Eigen::Success)
            throw std::runtime_error("designer: least-squares system is rank deficient");
    }

    /// Oversampled points sit symmetrically around each grid angle.
    double oversampled_angle(int col) const {
        const int i = col / oversample_;
        const int j = col % oversample_;
        return grid_[i] + (j - 0.5 * (oversample_ - 1)) * grid_.step() / oversample_;
    }

    /// Unit-modulus target with its phase centre at the middle of the array, so the
    /// weights are not truncated at element 0.
    cplx target_phase(double theta) const {
        const double k = 2.0 * std::numbers::pi * geo_.spacing_over_wavelength * std::sin(theta);
        return std::polar(1.0, -k * 0.5 * (geo_.num_antennas - 1));
    }

    /// Unit-norm weights whose pattern has constant modulus on the masked grid points.
    CVector design(const std::vector<std::uint8_t>& grid_mask) const {
        const int n = geo_.num_antennas;
        Eigen::VectorXcd b = Eigen::VectorXcd::Zero(n);
        for (int i = 0; i < grid_.size(); ++i) {
            if (!grid_mask[static_cast<std::size_t>(i)]) continue;
            for (int j = 0; j < oversample_; ++j) {
                const int col = i * oversample_ + j;
                b += target_phase(oversampled_angle(col)) * dense_.col(col);
            }
        }
        Eigen::VectorXcd w = llt_.solve(b);
        const double nrm = w.norm();
        if (!(nrm > 0.0) || !std::isfinite(nrm))
            throw std::runtime_error("designer: degenerate beam (empty support?)");
        w /= nrm;
        return CVector(w.data(), w.data() + n);
    }

    CVector response(const CVector& w) const {
        Eigen::Map<const Eigen::VectorXcd> wv(w.data(), static_cast<Eigen::Index>(w.size()));
        Eigen::VectorXcd r = hypotheses_.adjoint() * wv;  // a^H w
        CVector out(static_cast<std::size_t>(grid_.size()));
        for (int i = 0; i < grid_.size(); ++i) out[i] = std::conj(r(i));  // w^H a
        return out;
    }

    const AngleGrid& grid() const { return grid_; }
    const ArrayGeometry& geometry() const { return geo_; }

private:
    AngleGrid grid_;
    ArrayGeometry geo_;
    int oversample_;
    Eigen::MatrixXcd dense_;
    Eigen::MatrixXcd hypotheses_;
    Eigen::LLT<Eigen::MatrixXcd> llt_;
};

namespace detail {

inline void fill_gain_extremes(Codeword& cw) {
    double lo = kInf, hi = 0.0;
    for (int i = 0; i < static_cast<int>(cw.response.size()); ++i) {
        const double g2 = std::norm(cw.response[static_cast<std::size_t>(i)]);
        if (cw.support.contains(i))
            lo = std::min(lo, g2);
        else
            hi = std::max(hi, g2);
    }
    cw.min_in_gain2 = lo;
    cw.max_out_gain2 = hi;
}

}  // namespace detail

/// Ideal power gain of a beam of angular width `width_rad`: pi / width.
inline double ideal_gain2(double width_rad) { return std::numbers::pi / width_rad; }

class HierCodebook {
public:
    HierCodebook(AngleGrid grid, ArrayGeometry geo, BeamMode mode)
        : grid_(grid), geo_(geo), mode_(mode), levels_(static_cast<std::size_t>(grid.levels())) {}

    int levels() const { return grid_.levels(); }
    BeamMode mode() const { return mode_; }
    const AngleGrid& grid() const { return grid_; }
    const ArrayGeometry& geometry() const { return geo_; }

    /// 1-based (level, index).
    const Codeword& at(int l, int k) const {
        check(l, k);
        return levels_[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(k - 1)];
    }
    Codeword& at(int l, int k) {
        check(l, k);
        return levels_[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(k - 1)];
    }
    const std::vector<Codeword>& level(int l) const {
        if (l < 1 || l > levels()) throw std::out_of_range("codebook: level out of range");
        return levels_[static_cast<std::size_t>(l - 1)];
    }
    std::vector<Codeword>& level_mut(int l) { return levels_.at(static_cast<std::size_t>(l - 1)); }

    /// Support of node (l, k); level 0 is the whole sector.
    Support support(int l, int k) const {
        const int size = grid_.size() >> l;
        return {(k - 1) * size, size};
    }

    /// Index k at level l of the cell containing grid point i.
    int cell_of(int l, int i) const { return i / (grid_.size() >> l) + 1; }

    /// Centre angle of D_l^k.
    double center(int l, int k) const {
        const auto s = support(l, k);
        return grid_[s.first] + 0.5 * (s.count - 1) * grid_.step();
    }

private:
    void check(int l, int k) const {
        if (l < 1 || l > levels() || k < 1 || k > (1 << l))
            throw std::out_of_range("codebook: node (" + std::to_string(l) + "," +
                                    std::to_string(k) + ") out of range");
    }

    AngleGrid grid_;
    ArrayGeometry geo_;
    BeamMode mode_;
    std::vector<std::vector<Codeword>> levels_;
};

/// Ideal beams: gain G_l inside D_l^k (G_l^2 = pi / |D_l^k| in radians), zero outside.
inline HierCodebook build_ideal(const AngleGrid& grid, const ArrayGeometry& geo = {}) {
    HierCodebook cb(grid, geo, BeamMode::ideal);
    for (int l = 1; l <= grid.levels(); ++l) {
        auto& lvl = cb.level_mut(l);
        const double g2 = ideal_gain2(grid.width() / (1 << l));
        const double gain = std::sqrt(g2);
        for (int k = 1; k <= (1 << l); ++k) {
            Codeword cw;
            cw.level = l;
            cw.index = k;
            cw.support = cb.support(l, k);
            cw.ideal_gain = gain;
            cw.response.assign(static_cast<std::size_t>(grid.size()), cplx{});
            for (int i = cw.support.first; i <= cw.support.last(); ++i) cw.response[i] = gain;
            cw.min_in_gain2 = g2;
            cw.max_out_gain2 = 0.0;
            lvl.push_back(std::move(cw));
        }
    }
    return cb;
}

inline std::vector<std::uint8_t> support_mask(int size, const Support& s) {
    std::vector<std::uint8_t> m(static_cast<std::size_t>(size), 0);
    for (int i = s.first; i <= s.last(); ++i) m[static_cast<std::size_t>(i)] = 1;
    return m;
}

inline HierCodebook build_practical(const BeamDesigner& designer) {
    const auto& grid = designer.grid();
    HierCodebook cb(grid, designer.geometry(), BeamMode::practical);
    for (int l = 1; l <= grid.levels(); ++l) {
        auto& lvl = cb.level_mut(l);
        for (int k = 1; k <= (1 << l); ++k) {
            Codeword cw;
            cw.level = l;
            cw.index = k;
            cw.support = cb.support(l, k);
            cw.weights = designer.design(support_mask(grid.size(), cw.support));
            cw.response = designer.response(*cw.weights);
            detail::fill_gain_extremes(cw);
            lvl.push_back(std::move(cw));
        }
    }
    return cb;
}

inline HierCodebook build_practical(const AngleGrid& grid, const ArrayGeometry& geo,
                                    int oversample = 4, double regularization = 1e-6) {
    if (geo.num_antennas < grid.size())
        std::clog << "warning: " << geo.num_antennas << " antennas for resolution " << grid.size()
                  << "; finest beams will overlap\n";
    return build_practical(BeamDesigner(grid, geo, oversample, regularization));
}

/// (l+1, 2k-1) and (l+1, 2k).
inline std::pair<const Codeword*, const Codeword*> children(const HierCodebook& cb, int l, int k) {
    if (l < 1 || l >= cb.levels()) throw std::out_of_range("children: level has no descendants");
    return {&cb.at(l + 1, 2 * k - 1), &cb.at(l + 1, 2 * k)};
}

inline std::pair<int, int> parent(int l, int k) { return {l - 1, (k + 1) / 2}; }

struct RandomScanBook {
    int n = 128;  // directions
    int q = 16;   // directions per beam

    void validate() const {
        if (n < 1 || q < 1 || q > n) throw std::invalid_argument("random scan: need 1 <= q <= n");
    }
};

/// One random multi-lobe beam. `mask` marks covered grid points.
struct RandomBeam {
    std::vector<int> directions;  // sorted, 0-based
    std::vector<std::uint8_t> mask;
    CVector response;
    double min_in_gain2 = 0.0;
    double max_out_gain2 = 0.0;
};

/// Draws beams from the C(n, q) pattern set lazily, without enumerating it.
class RandomScanner {
public:
    RandomScanner(RandomScanBook book, const AngleGrid& grid, BeamMode mode,
                  const BeamDesigner* designer = nullptr)
        : book_(book), grid_(grid), mode_(mode), designer_(designer) {
        book.validate();
        if (grid.size() % book.n != 0)
            throw std::invalid_argument("random scan: n must divide the grid resolution");
        if (mode == BeamMode::practical && designer == nullptr)
            throw std::invalid_argument("random scan: practical mode needs a beam designer");
    }

    const RandomScanBook& book() const { return book_; }
    int block() const { return grid_.size() / book_.n; }

    RandomBeam beam_for(std::vector<int> dirs) const {
        std::sort(dirs.begin(), dirs.end());
        RandomBeam b;
        b.mask.assign(static_cast<std::size_t>(grid_.size()), 0);
        for (int d : dirs)
            for (int i = d * block(); i < (d + 1) * block(); ++i) b.mask[i] = 1;
        b.directions = std::move(dirs);
        if (mode_ == BeamMode::ideal) {
            const double g2 =
                ideal_gain2(grid_.width() * static_cast<double>(book_.q) / book_.n);
            b.response.assign(static_cast<std::size_t>(grid_.size()), cplx{});
            for (int i = 0; i < grid_.size(); ++i)
                if (b.mask[i]) b.response[i] = std::sqrt(g2);
        } else {
            b.response = designer_->response(designer_->design(b.mask));
        }
        double lo = kInf, hi = 0.0;
        for (int i = 0; i < grid_.size(); ++i) {
            const double g2 = std::norm(b.response[i]);
            if (b.mask[i])
                lo = std::min(lo, g2);
            else
                hi = std::max(hi, g2);
        }
        b.min_in_gain2 = lo;
        b.max_out_gain2 = hi;
        return b;
    }

    RandomBeam sample(CounterRng& rng) const {
        // partial Fisher-Yates over [n]
        std::vector<int> pool(static_cast<std::size_t>(book_.n));
        std::iota(pool.begin(), pool.end(), 0);
        for (int j = 0; j < book_.q; ++j) {
            const auto pick = j + static_cast<int>(rng.below(static_cast<std::uint64_t>(book_.n - j)));
            std::swap(pool[j], pool[pick]);
        }
        return beam_for(std::vector<int>(pool.begin(), pool.begin() + book_.q));
    }

private:
    RandomScanBook book_;
    AngleGrid grid_;
    BeamMode mode_;
    const BeamDesigner* designer_;
};

inline RandomBeam sample_random_beam(const RandomScanner& scanner, CounterRng& rng) {
    return scanner.sample(rng);
}

}  // namespace hiepm
