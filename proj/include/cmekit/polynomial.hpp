#pragma once
// Sparse multivariate polynomials in the species counts x_1..x_n with double
// coefficients, stored as a graded-lex ordered map from exponent multi-index
// to coefficient. Degrees stay tiny (propensities are at most quadratic, the
// generator expansion adds |alpha|-1), so an ordered map is both fast enough
// and canonical for printing and comparison.

#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cmekit/multi_index.hpp"

namespace cmekit {

class StatePolynomial {
  public:
    using TermMap = std::map<MultiIndex, double, GradedLexLess>;

    StatePolynomial() = default;
    explicit StatePolynomial(std::size_t nvars) : nvars_(nvars) {}

    static StatePolynomial constant(std::size_t nvars, double c) {
        StatePolynomial p(nvars);
        if (c != 0.0) p.terms_[MultiIndex(nvars, 0)] = c;
        return p;
    }
    static StatePolynomial variable(std::size_t nvars, std::size_t i, double coeff = 1.0) {
        StatePolynomial p(nvars);
        MultiIndex m(nvars, 0);
        m[i] = 1;
        if (coeff != 0.0) p.terms_[m] = coeff;
        return p;
    }
    static StatePolynomial monomial(MultiIndex m, double coeff) {
        StatePolynomial p(m.size());
        if (coeff != 0.0) p.terms_[std::move(m)] = coeff;
        return p;
    }

    std::size_t nvars() const { return nvars_; }
    const TermMap& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }

    int degree() const {
        int d = 0;
        for (const auto& [m, c] : terms_) d = std::max(d, order_of(m));
        return d;
    }

    void add_term(const MultiIndex& m, double coeff) {
        if (coeff == 0.0) return;
        auto it = terms_.find(m);
        if (it == terms_.end()) {
            terms_.emplace(m, coeff);
        } else {
            it->second += coeff;
            if (it->second == 0.0) terms_.erase(it);
        }
    }

    StatePolynomial& operator+=(const StatePolynomial& o) {
        for (const auto& [m, c] : o.terms_) add_term(m, c);
        return *this;
    }
    StatePolynomial& operator-=(const StatePolynomial& o) {
        for (const auto& [m, c] : o.terms_) add_term(m, -c);
        return *this;
    }
    StatePolynomial& operator*=(double s) {
        if (s == 0.0) {
            terms_.clear();
            return *this;
        }
        for (auto& [m, c] : terms_) c *= s;
        return *this;
    }

    friend StatePolynomial operator+(StatePolynomial a, const StatePolynomial& b) { return a += b; }
    friend StatePolynomial operator-(StatePolynomial a, const StatePolynomial& b) { return a -= b; }
    friend StatePolynomial operator*(StatePolynomial a, double s) { return a *= s; }

    friend StatePolynomial operator*(const StatePolynomial& a, const StatePolynomial& b) {
        StatePolynomial r(a.nvars_);
        MultiIndex m(a.nvars_, 0);
        for (const auto& [ma, ca] : a.terms_)
            for (const auto& [mb, cb] : b.terms_) {
                for (std::size_t i = 0; i < m.size(); ++i)
                    m[i] = static_cast<std::uint8_t>(ma[i] + mb[i]);
                r.add_term(m, ca * cb);
            }
        return r;
    }

    /// Evaluate at a (possibly fractional) point.
    double evaluate(const std::vector<double>& x) const {
        double sum = 0.0;
        for (const auto& [m, c] : terms_) {
            double t = c;
            for (std::size_t i = 0; i < m.size(); ++i)
                for (int k = 0; k < m[i]; ++k) t *= x[i];
            sum += t;
        }
        return sum;
    }

    double evaluate(const std::vector<std::int64_t>& x) const {
        return evaluate(std::vector<double>(x.begin(), x.end()));
    }

    /// Canonical rendering, e.g. "2*x0^2*x1 - 0.5*x2 + 3".
    std::string to_string(const std::vector<std::string>& names = {}) const {
        if (terms_.empty()) return "0";
        std::ostringstream os;
        os.precision(17);
        bool first = true;
        for (const auto& [m, c] : terms_) {
            double a = c;
            if (first) {
                if (a < 0) {
                    os << "-";
                    a = -a;
                }
            } else {
                os << (a < 0 ? " - " : " + ");
                a = std::fabs(a);
            }
            first = false;
            bool unit = (a == 1.0) && order_of(m) > 0;
            if (!unit) os << a;
            bool any = !unit;
            for (std::size_t i = 0; i < m.size(); ++i) {
                if (m[i] == 0) continue;
                if (any) os << "*";
                os << (names.empty() ? "x" + std::to_string(i) : names[i]);
                if (m[i] > 1) os << "^" << int(m[i]);
                any = true;
            }
        }
        return os.str();
    }

  private:
    std::size_t nvars_ = 0;
    TermMap terms_;
};

}  // namespace cmekit
