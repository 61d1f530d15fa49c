#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "qpcut/envelopes.hpp"
#include "qpcut/rng.hpp"
#include "qpcut/separation.hpp"
#include "qpcut/sym_matrix.hpp"

namespace qpcut {

/// A problem instance: minimize x^T Q x + q^T x subject to x_i in S_i.
struct Instance {
    std::string name;
    int n = 0;
    SymMatrix Q{1};
    Eigen::VectorXd q;
    std::vector<VarSet> sets;
    std::string provenance;

    void validate() const {
        if (n < 1 || Q.size() != n || q.size() != n || static_cast<int>(sets.size()) != n)
            throw std::invalid_argument("Instance: inconsistent dimensions");
    }

    double objective(const Eigen::VectorXd& x) const {
        return x.dot(Q.dense() * x) + q.dot(x);
    }

    std::vector<EnvelopeModel> envelopes() const {
        std::vector<EnvelopeModel> out;
        out.reserve(sets.size());
        for (const auto& s : sets) out.push_back(build_envelope(s));
        return out;
    }
};

struct OracleResult {
    double value = 0.0;
    Eigen::VectorXd argmin;
    bool exact = false;
};

// ---------------------------------------------------------------------------
// Canonical instance format (JSON text, human-diffable)
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json varset_to_json(const VarSet& s) {
    nlohmann::ordered_json j;
    switch (s.kind()) {
        case SetKind::Interval:
            j["shape"] = "interval";
            j["L"] = s.lower();
            j["R"] = s.upper();
            break;
        case SetKind::FiniteSet:
            j["shape"] = "finite";
            j["values"] = s.values();
            break;
        case SetKind::IntegerRange:
            j["shape"] = "integer_range";
            j["L"] = static_cast<long>(s.lower());
            j["R"] = static_cast<long>(s.upper());
            break;
        case SetKind::IntervalUnion: {
            j["shape"] = "interval_union";
            auto arr = nlohmann::ordered_json::array();
            for (const auto& [a, b] : s.pieces()) arr.push_back({a, b});
            j["pieces"] = arr;
            break;
        }
    }
    return j;
}

inline VarSet varset_from_json(const nlohmann::json& j) {
    const std::string shape = j.at("shape").get<std::string>();
    if (shape == "interval") return VarSet::interval(j.at("L").get<double>(), j.at("R").get<double>());
    if (shape == "finite") return VarSet::finite_set(j.at("values").get<std::vector<double>>());
    if (shape == "integer_range")
        return VarSet::integer_range(j.at("L").get<long>(), j.at("R").get<long>());
    if (shape == "interval_union") {
        std::vector<std::pair<double, double>> pieces;
        for (const auto& p : j.at("pieces"))
            pieces.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
        return VarSet::interval_union(std::move(pieces));
    }
    throw std::runtime_error("instance parse: unknown set shape '" + shape + "'");
}

}  // namespace detail

inline std::string to_canonical_json(const Instance& inst) {
    inst.validate();
    nlohmann::ordered_json j;
    j["name"] = inst.name;
    j["n"] = inst.n;
    j["q"] = std::vector<double>(inst.q.data(), inst.q.data() + inst.n);
    std::vector<double> qflat;
    qflat.reserve(static_cast<std::size_t>(inst.n) * inst.n);
    for (int i = 0; i < inst.n; ++i)
        for (int k = 0; k < inst.n; ++k) qflat.push_back(inst.Q(i, k));
    j["Q"] = qflat;
    auto sets = nlohmann::ordered_json::array();
    for (const auto& s : inst.sets) sets.push_back(detail::varset_to_json(s));
    j["sets"] = sets;
    if (!inst.provenance.empty()) j["provenance"] = inst.provenance;
    return j.dump(2) + "\n";
}

inline Instance from_canonical_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(std::string("instance parse: ") + e.what());
    }
    Instance inst;
    inst.name = j.value("name", "");
    inst.n = j.at("n").get<int>();
    const auto qv = j.at("q").get<std::vector<double>>();
    const auto qm = j.at("Q").get<std::vector<double>>();
    if (static_cast<int>(qv.size()) != inst.n ||
        static_cast<long>(qm.size()) != static_cast<long>(inst.n) * inst.n)
        throw std::runtime_error("instance parse: q/Q size mismatch");
    inst.q = Eigen::Map<const Eigen::VectorXd>(qv.data(), inst.n);
    Eigen::MatrixXd qd(inst.n, inst.n);
    for (int i = 0; i < inst.n; ++i)
        for (int k = 0; k < inst.n; ++k) qd(i, k) = qm[static_cast<std::size_t>(i) * inst.n + k];
    inst.Q = SymMatrix::from_dense(qd);
    for (const auto& s : j.at("sets")) inst.sets.push_back(detail::varset_from_json(s));
    inst.provenance = j.value("provenance", "");
    inst.validate();
    return inst;
}

// ---------------------------------------------------------------------------
// spar text format (BoxQP benchmark style)
// ---------------------------------------------------------------------------

namespace detail {

/// Whitespace tokenizer tracking line/column for parse diagnostics.
class TokenReader {
public:
    explicit TokenReader(const std::string& text) : text_(text) {}

    double next(const char* what) {
        skip_ws();
        if (pos_ >= text_.size()) fail(std::string("expected ") + what + ", found end of input");
        const std::size_t start = pos_;
        while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        const std::string tok = text_.substr(start, pos_ - start);
        try {
            std::size_t used = 0;
            const double v = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            col_ += pos_ - start;
            return v;
        } catch (const std::exception&) {
            fail("invalid number '" + tok + "'");
        }
        return 0.0;  // unreachable
    }

    bool at_end() {
        skip_ws();
        return pos_ >= text_.size();
    }

private:
    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            if (text_[pos_] == '\n') {
                ++line_;
                col_ = 1;
            } else {
                ++col_;
            }
            ++pos_;
        }
    }

    [[noreturn]] void fail(const std::string& msg) const {
        std::ostringstream os;
        os << "spar parse error at line " << line_ << ", column " << col_ << ": " << msg;
        throw std::runtime_error(os.str());
    }

    const std::string& text_;
    std::size_t pos_ = 0;
    long line_ = 1, col_ = 1;
};

}  // namespace detail

/// Imports a spar-format BoxQP file: n, then n linear coefficients c', then
/// the n x n matrix Q', all whitespace-separated. The file encodes
/// "maximize 1/2 x^T Q' x + c'^T x over [0,1]^n"; converted to min-form as
/// Q = -Q'/2, q = -c'.
inline Instance import_spar(const std::string& text, const std::string& name = "") {
    detail::TokenReader tr(text);
    const double nv = tr.next("dimension n");
    const int n = static_cast<int>(nv);
    if (n < 1 || nv != static_cast<double>(n))
        throw std::runtime_error("spar parse error: invalid dimension");
    Eigen::VectorXd c(n);
    for (int i = 0; i < n; ++i) c(i) = tr.next("linear coefficient");
    Eigen::MatrixXd qp(n, n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) qp(i, k) = tr.next("matrix entry");

    Instance inst;
    inst.name = name;
    inst.n = n;
    inst.Q = SymMatrix::from_dense(-0.5 * qp);
    inst.q = -c;
    for (int i = 0; i < n; ++i) inst.sets.push_back(VarSet::interval(0.0, 1.0));
    inst.provenance = "spar import (max 1/2 x'Q'x + c'x over [0,1]^n, converted to min form)";
    return inst;
}

/// Writes the spar text form of a [0,1]-box instance (inverse of import_spar).
inline std::string to_spar(const Instance& inst) {
    inst.validate();
    for (const auto& s : inst.sets)
        if (s.kind() != SetKind::Interval || s.lower() != 0.0 || s.upper() != 1.0)
            throw std::invalid_argument("to_spar: requires S_i = [0,1] for all i");
    std::ostringstream os;
    os.precision(17);
    os << inst.n << "\n";
    for (int i = 0; i < inst.n; ++i) os << -inst.q(i) << (i + 1 < inst.n ? " " : "\n");
    for (int i = 0; i < inst.n; ++i)
        for (int k = 0; k < inst.n; ++k)
            os << -2.0 * inst.Q(i, k) << (k + 1 < inst.n ? " " : "\n");
    return os.str();
}

// ---------------------------------------------------------------------------
// Random generators
// ---------------------------------------------------------------------------

/// Random separation instance: Q from symmetrized i.i.d. N(0,1) entries,
/// normalized to unit 2-norm; alpha ~ U[0, 0.5]^n, beta ~ U[0.5, 1]^n.
inline SepProblem gen_sep_instance(int n, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("gen_sep_instance: n >= 2 required");
    Rng rng(seed);
    Eigen::MatrixXd g(n, n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) g(i, k) = rng.normal();
    Eigen::MatrixXd sym = 0.5 * (g + g.transpose());
    SymMatrix q = SymMatrix::from_dense(sym);
    q = q.scaled(1.0 / spectral_norm(q));
    Eigen::VectorXd alpha(n), beta(n);
    for (int i = 0; i < n; ++i) alpha(i) = rng.uniform(0.0, 0.5);
    for (int i = 0; i < n; ++i) beta(i) = rng.uniform(0.5, 1.0);
    return SepProblem(q, std::move(alpha), std::move(beta));
}

/// Random integer QP: Q = sum_i mu_i v_i v_i^T with the first floor(p*n)
/// weights from U[-1,0] and the rest from U[0,1]; v_i uniform on [-1,1]^n
/// normalized; q uniform on [-1,1]^n; S_i = {-3,...,3}.
inline Instance gen_integer_qp(int n, double p, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("gen_integer_qp: n >= 2 required");
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("gen_integer_qp: p must be in [0,1]");
    Rng rng(seed);
    const int neg = static_cast<int>(std::floor(p * n));
    Eigen::VectorXd mu(n);
    for (int i = 0; i < n; ++i)
        mu(i) = i < neg ? rng.uniform(-1.0, 0.0) : rng.uniform(0.0, 1.0);
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd v(n);
        for (int k = 0; k < n; ++k) v(k) = rng.uniform(-1.0, 1.0);
        v.normalize();
        q.noalias() += mu(i) * (v * v.transpose());
    }
    Instance inst;
    std::ostringstream nm;
    nm << "intqp-n" << n << "-p" << p << "-s" << seed;
    inst.name = nm.str();
    inst.n = n;
    inst.Q = SymMatrix::from_dense(0.5 * (q + q.transpose()));
    inst.q = Eigen::VectorXd(n);
    for (int i = 0; i < n; ++i) inst.q(i) = rng.uniform(-1.0, 1.0);
    for (int i = 0; i < n; ++i) inst.sets.push_back(VarSet::integer_range(-3, 3));
    inst.provenance = "random integer QP generator";
    return inst;
}

/// Random BoxQP instance of the spar family: integer Q' entries from
/// U{-50..50} kept with probability `density`, integer c' from U{-100..100},
/// stored in min-form (Q = -Q'/2, q = -c') over [0,1]^n.
inline Instance gen_boxqp(int n, double density, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("gen_boxqp: n >= 2 required");
    if (density <= 0.0 || density > 1.0)
        throw std::invalid_argument("gen_boxqp: density must be in (0,1]");
    Rng rng(seed);
    Eigen::MatrixXd qp = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int k = i; k < n; ++k) {
            if (rng.uniform() >= density) continue;
            const double v = static_cast<double>(rng.uniform_int(-50, 50));
            qp(i, k) = v;
            qp(k, i) = v;
        }
    Eigen::VectorXd c(n);
    for (int i = 0; i < n; ++i) c(i) = static_cast<double>(rng.uniform_int(-100, 100));
    Instance inst;
    std::ostringstream nm;
    nm << "boxqp-n" << n << "-d" << density << "-s" << seed;
    inst.name = nm.str();
    inst.n = n;
    inst.Q = SymMatrix::from_dense(-0.5 * qp);
    inst.q = -c;
    for (int i = 0; i < n; ++i) inst.sets.push_back(VarSet::interval(0.0, 1.0));
    inst.provenance = "random BoxQP generator (spar family)";
    return inst;
}

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

/// Exact global optimum by full enumeration. Requires every S_i finite and
/// the product of cardinalities within `budget`.
inline OracleResult oracle_enumerate(const Instance& inst, std::uint64_t budget = 1000000) {
    inst.validate();
    std::vector<std::vector<double>> values;
    double total = 1.0;
    for (const auto& s : inst.sets) {
        if (s.cardinality() == 0)
            throw std::invalid_argument("oracle_enumerate: all sets must be finite");
        values.push_back(s.enumerate());
        total *= static_cast<double>(values.back().size());
        if (total > static_cast<double>(budget))
            throw std::runtime_error("oracle_enumerate: enumeration budget exceeded");
    }
    const int n = inst.n;
    std::vector<std::size_t> idx(n, 0);
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = values[i][0];
    Eigen::VectorXd w = inst.Q.dense() * x;  // maintained as Q x
    double quad = x.dot(w);
    double lin = inst.q.dot(x);

    double best = quad + lin;
    Eigen::VectorXd best_x = x;
    for (;;) {
        // Odometer increment, rightmost digit fastest, objective updated in
        // O(n) per coordinate change.
        int k = n - 1;
        for (; k >= 0; --k) {
            const double old = x(k);
            if (idx[k] + 1 < values[k].size()) {
                ++idx[k];
            } else {
                idx[k] = 0;
            }
            const double nv = values[k][idx[k]];
            const double dlt = nv - old;
            if (dlt != 0.0) {
                quad += 2.0 * dlt * w(k) + dlt * dlt * inst.Q(k, k);
                w += dlt * inst.Q.dense().col(k);
                lin += inst.q(k) * dlt;
                x(k) = nv;
            }
            if (idx[k] != 0) break;  // no carry
        }
        if (k < 0) break;  // wrapped around completely
        const double f = quad + lin;
        if (f < best) {
            best = f;
            best_x = x;
        }
    }
    return {best, best_x, true};
}

/// Multistart cyclic coordinate descent over box constraints: each sweep
/// minimizes the one-variable quadratic exactly on [L_i, R_i]. Returns the
/// best local value found (an upper bound on the optimum).
inline OracleResult local_upper_bound(const Instance& inst, int restarts, std::uint64_t seed) {
    inst.validate();
    for (const auto& s : inst.sets)
        if (s.kind() != SetKind::Interval)
            throw std::invalid_argument("local_upper_bound: interval sets required");
    const int n = inst.n;
    Rng rng(seed);
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_x = Eigen::VectorXd::Zero(n);
    const Eigen::MatrixXd& qd = inst.Q.dense();

    for (int r = 0; r < std::max(restarts, 1); ++r) {
        Eigen::VectorXd x(n);
        for (int i = 0; i < n; ++i) x(i) = rng.uniform(inst.sets[i].lower(), inst.sets[i].upper());
        Eigen::VectorXd w = qd * x;
        for (int sweep = 0; sweep < 500; ++sweep) {
            bool moved = false;
            for (int i = 0; i < n; ++i) {
                const double lo = inst.sets[i].lower(), hi = inst.sets[i].upper();
                const double a = qd(i, i);
                const double b = inst.q(i) + 2.0 * (w(i) - a * x(i));
                // minimize a t^2 + b t on [lo, hi]
                double t;
                if (a > 1e-300) {
                    t = std::clamp(-b / (2.0 * a), lo, hi);
                } else {
                    const double flo = a * lo * lo + b * lo;
                    const double fhi = a * hi * hi + b * hi;
                    t = flo <= fhi ? lo : hi;
                }
                const double dlt = t - x(i);
                if (std::abs(dlt) > 1e-13 * (1.0 + std::abs(x(i)))) {
                    w += dlt * qd.col(i);
                    x(i) = t;
                    moved = true;
                }
            }
            if (!moved) break;
        }
        const double f = inst.objective(x);
        if (f < best) {
            best = f;
            best_x = x;
        }
    }
    return {best, best_x, false};
}

// ---------------------------------------------------------------------------
// Gap metrics
// ---------------------------------------------------------------------------

/// Gap = (UB - LB) / |UB| * 100%.
inline double gap_percent(double ub, double lb) {
    if (ub == 0.0) throw std::domain_error("gap_percent: UB must be nonzero");
    return (ub - lb) / std::abs(ub) * 100.0;
}

/// Fraction of the RLT-to-optimum gap recovered: (LB - RLT)/(OPT - RLT)*100%.
inline double gap_closed_percent(double rlt, double opt, double lb) {
    if (!(opt > rlt)) throw std::domain_error("gap_closed_percent: requires OPT > RLT");
    return (lb - rlt) / (opt - rlt) * 100.0;
}

// ---------------------------------------------------------------------------
// Bundled bound tables (CSV: instance,RLT,OPT,paper_gap_closed,paper_time)
// ---------------------------------------------------------------------------

struct BoundTableRow {
    std::string instance;
    double rlt = 0.0;
    double opt = 0.0;
    double paper_gap_closed = 0.0;  // percent
    double paper_time = 0.0;        // seconds
};

inline std::vector<BoundTableRow> parse_bound_table(std::istream& in) {
    std::vector<BoundTableRow> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (first) {  // header
            first = false;
            continue;
        }
        std::stringstream ss(line);
        std::string field;
        BoundTableRow row;
        if (!std::getline(ss, row.instance, ',')) continue;
        std::getline(ss, field, ',');
        row.rlt = std::stod(field);
        std::getline(ss, field, ',');
        row.opt = std::stod(field);
        std::getline(ss, field, ',');
        row.paper_gap_closed = std::stod(field);
        if (std::getline(ss, field, ',')) row.paper_time = std::stod(field);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::vector<BoundTableRow> load_bound_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open bound table: " + path);
    return parse_bound_table(in);
}

inline const BoundTableRow* find_bound_row(const std::vector<BoundTableRow>& rows,
                                           const std::string& name) {
    for (const auto& r : rows)
        if (r.instance == name) return &r;
    return nullptr;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
}

}  // namespace qpcut
