#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "rbsde/errors.hpp"

namespace rbsde {

enum class DriverFamily { Zero, Constant, Linear, Sine, Custom };

inline const char* to_string(DriverFamily f) {
    switch (f) {
        case DriverFamily::Zero: return "zero";
        case DriverFamily::Constant: return "constant";
        case DriverFamily::Linear: return "linear";
        case DriverFamily::Sine: return "sine";
        case DriverFamily::Custom: return "custom";
    }
    return "?";
}

/// Generator f(t, y) with a declared Lipschitz constant in y.
///
/// linear: a + b*y + c*t, sine: a + b*sin(y), constant: c.
class Driver {
public:
    using Fn = std::function<double(double, double)>;

    Driver() = default;

    static Driver zero() { return Driver(DriverFamily::Zero, 0, 0, 0, 0.0); }
    static Driver constant(double c) { return Driver(DriverFamily::Constant, c, 0, 0, 0.0); }
    static Driver linear(double a, double b, double c, double mu = -1.0) {
        return Driver(DriverFamily::Linear, a, b, c, mu < 0 ? std::abs(b) : mu);
    }
    static Driver sine(double a, double b, double mu = -1.0) {
        return Driver(DriverFamily::Sine, a, b, 0, mu < 0 ? std::abs(b) : mu);
    }
    static Driver custom(Fn fn, double mu, bool y_independent = false) {
        if (!fn) throw ContractError("Driver: empty custom function");
        Driver d(DriverFamily::Custom, 0, 0, 0, mu);
        d.fn_ = std::move(fn);
        d.y_independent_ = y_independent;
        return d;
    }

    double operator()(double t, double y) const {
        switch (family_) {
            case DriverFamily::Zero: return 0.0;
            case DriverFamily::Constant: return a_;
            case DriverFamily::Linear: return a_ + b_ * y + c_ * t;
            case DriverFamily::Sine: return a_ + b_ * std::sin(y);
            case DriverFamily::Custom: return fn_(t, y);
        }
        return 0.0;
    }

    DriverFamily family() const { return family_; }
    double mu() const { return mu_; }
    double a() const { return a_; }
    double b() const { return b_; }
    double c() const { return c_; }
    bool y_independent() const { return y_independent_; }

    /// y -> -f(t, -y). Closed families stay closed, so applying this twice
    /// gives back bit-identical evaluations.
    Driver negated() const {
        switch (family_) {
            case DriverFamily::Zero: return *this;
            case DriverFamily::Constant: return constant(-a_);
            case DriverFamily::Linear: return linear(-a_, b_, -c_, mu_);
            case DriverFamily::Sine: return sine(-a_, b_, mu_);
            case DriverFamily::Custom: {
                Fn inner = fn_;
                Driver d = custom([inner](double t, double y) { return -inner(t, -y); }, mu_, y_independent_);
                return d;
            }
        }
        return *this;
    }

    /// Parameter equality; custom drivers never compare equal.
    bool operator==(const Driver& o) const {
        return family_ != DriverFamily::Custom && family_ == o.family_ && a_ == o.a_ && b_ == o.b_ &&
               c_ == o.c_ && mu_ == o.mu_;
    }

private:
    Driver(DriverFamily fam, double a, double b, double c, double mu)
        : family_(fam), a_(a), b_(b), c_(c), mu_(mu) {
        if (!(mu >= 0.0) || !std::isfinite(mu)) throw ContractError("Driver: Lipschitz constant must be finite and >= 0");
        if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c))
            throw ContractError("Driver: parameters must be finite");
        double intrinsic = 0.0;
        if (fam == DriverFamily::Linear || fam == DriverFamily::Sine) intrinsic = std::abs(b);
        if (mu < intrinsic)
            throw ContractError("Driver: declared mu " + std::to_string(mu) +
                                " is below the family's Lipschitz constant " + std::to_string(intrinsic));
        y_independent_ = fam == DriverFamily::Zero || fam == DriverFamily::Constant ||
                         ((fam == DriverFamily::Linear || fam == DriverFamily::Sine) && b == 0.0);
    }

    DriverFamily family_ = DriverFamily::Zero;
    double a_ = 0.0, b_ = 0.0, c_ = 0.0;
    double mu_ = 0.0;
    bool y_independent_ = true;
    Fn fn_;
};

}  // namespace rbsde
