#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qpcut {

enum class SetKind { Interval, FiniteSet, IntegerRange, IntervalUnion };

/// One variable's feasible set S_i: a closed bounded subset of the reals in
/// one of four shapes. L = min S, R = max S.
class VarSet {
public:
    static VarSet interval(double lo, double hi) {
        check_bounds(lo, hi);
        VarSet s(SetKind::Interval, lo, hi);
        s.pieces_ = {{lo, hi}};
        return s;
    }

    static VarSet finite_set(std::vector<double> values) {
        if (values.empty()) throw std::invalid_argument("VarSet: empty finite set");
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (double v : values)
            if (!std::isfinite(v)) throw std::invalid_argument("VarSet: non-finite value");
        VarSet s(SetKind::FiniteSet, values.front(), values.back());
        s.values_ = std::move(values);
        return s;
    }

    static VarSet integer_range(long lo, long hi) {
        if (lo > hi) throw std::invalid_argument("VarSet: integer range with lo > hi");
        VarSet s(SetKind::IntegerRange, static_cast<double>(lo), static_cast<double>(hi));
        return s;
    }

    /// Union of disjoint closed intervals; pieces are sorted and merged when
    /// they touch. Degenerate [a,a] pieces are allowed.
    static VarSet interval_union(std::vector<std::pair<double, double>> pieces) {
        if (pieces.empty()) throw std::invalid_argument("VarSet: empty interval union");
        for (auto& [a, b] : pieces) check_bounds(a, b);
        std::sort(pieces.begin(), pieces.end());
        std::vector<std::pair<double, double>> merged;
        for (const auto& p : pieces) {
            if (!merged.empty() && p.first <= merged.back().second) {
                if (p.first < merged.back().first)
                    throw std::invalid_argument("VarSet: overlapping union pieces");
                merged.back().second = std::max(merged.back().second, p.second);
            } else {
                merged.push_back(p);
            }
        }
        if (merged.size() == 1)
            return merged.front().first == merged.front().second
                       ? finite_set({merged.front().first})
                       : interval(merged.front().first, merged.front().second);
        VarSet s(SetKind::IntervalUnion, merged.front().first, merged.back().second);
        s.pieces_ = std::move(merged);
        return s;
    }

    SetKind kind() const { return kind_; }
    double lower() const { return lo_; }
    double upper() const { return hi_; }

    const std::vector<double>& values() const { return values_; }
    const std::vector<std::pair<double, double>>& pieces() const { return pieces_; }

    bool contains(double x, double tol = 1e-9) const {
        switch (kind_) {
            case SetKind::Interval:
                return x >= lo_ - tol && x <= hi_ + tol;
            case SetKind::FiniteSet:
                for (double v : values_)
                    if (std::abs(x - v) <= tol) return true;
                return false;
            case SetKind::IntegerRange:
                return x >= lo_ - tol && x <= hi_ + tol &&
                       std::abs(x - std::round(x)) <= tol;
            case SetKind::IntervalUnion:
                for (const auto& [a, b] : pieces_)
                    if (x >= a - tol && x <= b + tol) return true;
                return false;
        }
        return false;
    }

    /// Number of points for finite shapes; 0 for continuous shapes.
    long cardinality() const {
        switch (kind_) {
            case SetKind::FiniteSet: return static_cast<long>(values_.size());
            case SetKind::IntegerRange: return static_cast<long>(hi_ - lo_) + 1;
            default: return 0;
        }
    }

    /// Enumerates the points of a finite shape.
    std::vector<double> enumerate() const {
        if (kind_ == SetKind::FiniteSet) return values_;
        if (kind_ == SetKind::IntegerRange) {
            std::vector<double> out;
            for (double v = lo_; v <= hi_ + 0.5; v += 1.0) out.push_back(v);
            return out;
        }
        throw std::invalid_argument("VarSet: enumerate requires a finite set");
    }

private:
    VarSet(SetKind k, double lo, double hi) : kind_(k), lo_(lo), hi_(hi) {}

    static void check_bounds(double lo, double hi) {
        if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi)
            throw std::invalid_argument("VarSet: invalid bounds");
    }

    SetKind kind_;
    double lo_, hi_;
    std::vector<double> values_;
    std::vector<std::pair<double, double>> pieces_;
};

struct AffinePiece {
    double slope = 0.0;
    double intercept = 0.0;
    double eval(double x) const { return slope * x + intercept; }
};

/// Convex lower envelope l(x) and concave upper envelope u(x) of
/// {(x, x^2) : x in S} on [L, R]. l is the max of affine pieces plus an
/// optional x^2 piece; u is always the chord through (L, L^2), (R, R^2).
class EnvelopeModel {
public:
    EnvelopeModel(double lo, double hi, std::vector<AffinePiece> lower_pieces,
                  bool lower_has_quadratic)
        : lo_(lo),
          hi_(hi),
          lower_pieces_(std::move(lower_pieces)),
          lower_has_quadratic_(lower_has_quadratic),
          upper_{lo + hi, -lo * hi} {
        std::sort(lower_pieces_.begin(), lower_pieces_.end(),
                  [](const AffinePiece& a, const AffinePiece& b) { return a.slope < b.slope; });
    }

    double domain_lower() const { return lo_; }
    double domain_upper() const { return hi_; }
    const std::vector<AffinePiece>& lower_pieces() const { return lower_pieces_; }
    bool lower_has_quadratic() const { return lower_has_quadratic_; }
    const AffinePiece& upper_piece() const { return upper_; }

    double lower(double x) const {
        check_domain(x);
        double best = lower_has_quadratic_ ? x * x
                                           : -std::numeric_limits<double>::infinity();
        for (const auto& p : lower_pieces_) best = std::max(best, p.eval(x));
        return best;
    }

    double upper(double x) const {
        check_domain(x);
        return upper_.eval(x);
    }

    std::pair<double, double> evaluate(double x) const { return {lower(x), upper(x)}; }

    /// Separation coefficients at xbar: alpha = l(xbar) - xbar^2,
    /// beta = u(xbar) - xbar^2, clamped so 0 <= alpha <= beta under roundoff.
    std::pair<double, double> sep_coefficients(double xbar) const {
        const double sq = xbar * xbar;
        double alpha = std::max(0.0, lower(xbar) - sq);
        double beta = std::max(alpha, upper(xbar) - sq);
        return {alpha, beta};
    }

    /// True when l == u identically (two-point and singleton sets); the
    /// master model then substitutes y_i by the chord expression.
    bool degenerate() const {
        if (hi_ - lo_ <= 0.0) return true;
        const double tol = 1e-12 * (1.0 + std::abs(upper_.slope) + std::abs(upper_.intercept));
        for (const auto& p : lower_pieces_)
            if (std::abs(p.slope - upper_.slope) <= tol &&
                std::abs(p.intercept - upper_.intercept) <= tol)
                return true;
        return false;
    }

private:
    void check_domain(double x) const {
        const double tol = 1e-9 * (1.0 + std::max(std::abs(lo_), std::abs(hi_)));
        if (x < lo_ - tol || x > hi_ + tol)
            throw std::domain_error("EnvelopeModel: x outside [L, R]");
    }

    double lo_, hi_;
    std::vector<AffinePiece> lower_pieces_;
    bool lower_has_quadratic_;
    AffinePiece upper_;
};

/// Chord of x^2 through points a and b.
inline AffinePiece chord(double a, double b) { return {a + b, -a * b}; }

inline EnvelopeModel build_envelope(const VarSet& s) {
    const double lo = s.lower(), hi = s.upper();
    std::vector<AffinePiece> pieces;
    bool quad = false;
    switch (s.kind()) {
        case SetKind::Interval:
            quad = true;
            break;
        case SetKind::FiniteSet:
        case SetKind::IntegerRange: {
            const std::vector<double> pts = s.enumerate();
            if (pts.size() == 1) {
                pieces.push_back(chord(pts[0], pts[0]));
            } else {
                for (std::size_t k = 0; k + 1 < pts.size(); ++k)
                    pieces.push_back(chord(pts[k], pts[k + 1]));
            }
            break;
        }
        case SetKind::IntervalUnion: {
            // x^2 on the pieces, one chord across each gap; the chord
            // dominates x^2 exactly on its gap and is dominated elsewhere.
            quad = true;
            const auto& ps = s.pieces();
            for (std::size_t k = 0; k + 1 < ps.size(); ++k)
                pieces.push_back(chord(ps[k].second, ps[k + 1].first));
            break;
        }
    }
    return EnvelopeModel(lo, hi, std::move(pieces), quad);
}

}  // namespace qpcut
