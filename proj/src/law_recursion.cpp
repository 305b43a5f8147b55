#include "sbrw/law_recursion.hpp"

#include "sbrw/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sbrw {

namespace {

// Rows below this abscissa use the linearised brood term; there lambda F <= e^x.
constexpr double kLinearBelow = -25.0;
// exp(-50) is below double resolution relative to 1.
constexpr double kSaturated = -50.0;

} // namespace

LawGrid default_law_grid(const StepLaw& law, std::size_t n_max, double dx)
{
    if (!(dx > 0.0)) throw DomainError("default_law_grid: dx must be positive");
    const double scale = std::pow(static_cast<double>(std::max<std::size_t>(n_max, 1)), 1.0 / law.alpha);
    const double span = std::min(5.0 * scale + 40.0, 690.0);
    LawGrid grid;
    grid.dx = dx;
    grid.x_lo = -dx * std::ceil(span / dx);
    grid.x_hi = dx * std::ceil(60.0 / dx);
    return grid;
}

LawRecursion::LawRecursion(const BroodLaw& law, LawGrid grid, LawTarget target) : law_(law), grid_(grid)
{
    if (!(grid.dx > 0.0 && grid.dx <= 1.0)) throw DomainError("law grid: dx must lie in (0, 1]");
    if (!(grid.x_lo <= -30.0 && grid.x_lo >= -700.0)) throw DomainError("law grid: x_lo must lie in [-700, -30]");
    if (!(grid.x_hi >= 10.0)) throw DomainError("law grid: x_hi must be >= 10");
    if (grid.dx > law.base.x_m) throw DomainError("law grid: dx must not exceed x_m");

    const auto size = static_cast<std::size_t>(std::floor((grid.x_hi - grid.x_lo) / grid.dx + 1e-9)) + 1;
    f_.resize(size);
    log_survivor_.resize(size);
    g_.resize(size);
    next_.resize(size);
    for (std::size_t i = 0; i < size; ++i) {
        const double xi = x(i);
        if (target == LawTarget::additive_laplace) {
            f_[i] = -std::expm1(-std::exp(xi));
        } else {
            // Unit step at 0; the node at 0 carries 1/2 so the interpolant is centred.
            f_[i] = std::abs(xi) < 1e-9 * grid.dx ? 0.5 : (xi > 0.0 ? 1.0 : 0.0);
        }
    }

    const StepLaw& b = law_.base;
    const double dx = grid.dx;
    // Each cell's mass sits at its centroid and is shared between the two
    // neighbouring nodes by linear interpolation, so clipped end cells keep
    // second-order accuracy.
    auto deposit = [dx](std::vector<double>& w, double centroid, double mass) {
        const double pos = centroid / dx;
        const double lo = std::floor(pos);
        const double t = pos - lo;
        const auto j = static_cast<std::size_t>(lo);
        if (w.size() < j + 2) w.resize(j + 2, 0.0);
        w[j] += mass * (1.0 - t);
        w[j + 1] += mass * t;
    };

    // Left offsets -j dx; the brood is a single child, weight p(y) e^y. The
    // mass of p is deposited in y and the factor e^y applied at the node,
    // which is linear interpolation of F e^{-x} rather than of F; this keeps
    // the linearised kernel's total mass exactly 1.
    const double left_density = (1.0 - b.p_r) / b.d;
    for (std::size_t cell = 0;; ++cell) {
        const double hi = -static_cast<double>(cell) * dx;
        const double lo = std::max(-b.d, hi - dx);
        if (hi <= -b.d) break;
        deposit(left_w_, -(hi + lo) / 2, left_density * (hi - lo));
    }
    for (std::size_t j = 0; j < left_w_.size(); ++j) left_w_[j] *= std::exp(-static_cast<double>(j) * dx);

    // Right offsets j dx with exact Pareto cell masses.
    auto pareto_above = [&b](double y) { return y <= b.x_m ? b.p_r : b.c * std::pow(y, -b.alpha); };
    const std::size_t j_max = size - 1;
    std::vector<double> node_w;
    const double y_end = (static_cast<double>(j_max) - 1.0) * dx;
    const auto first_cell = static_cast<std::size_t>(std::floor(b.x_m / dx + 0.5));
    for (std::size_t cell = first_cell;; ++cell) {
        const double lo = std::max(b.x_m, (static_cast<double>(cell) - 0.5) * dx);
        const double hi = std::min(y_end, (static_cast<double>(cell) + 0.5) * dx);
        if (lo >= y_end) break;
        if (hi <= lo) continue;
        const double mass = pareto_above(lo) - pareto_above(hi);
        // Pareto centroid on [lo, hi].
        const double a = b.alpha;
        const double centroid = a / (a - 1.0) * (std::pow(lo, 1.0 - a) - std::pow(hi, 1.0 - a)) /
                                (std::pow(lo, -a) - std::pow(hi, -a));
        deposit(node_w, centroid, mass);
    }
    for (std::size_t j = 1; j < node_w.size(); ++j) {
        if (node_w[j] <= 0.0) continue;
        const double y = static_cast<double>(j) * dx;
        right_j_.push_back(j);
        right_w_.push_back(node_w[j]);
        const double lambda = std::exp(std::min(y, 709.0));
        const double m = std::floor(lambda);
        right_m_.push_back(m);
        right_frac_.push_back(lambda - m);
    }
    tail_w_ = pareto_above(y_end);
    right_suffix_.assign(right_w_.size() + 1, 0.0);
    for (std::size_t k = right_w_.size(); k-- > 0;) right_suffix_[k] = right_suffix_[k + 1] + right_w_[k];
}

void LawRecursion::step()
{
    const std::size_t size = f_.size();
    for (std::size_t i = 0; i < size; ++i) {
        log_survivor_[i] = f_[i] >= 1.0 ? -std::numeric_limits<double>::infinity() : std::log1p(-f_[i]);
        g_[i] = f_[i] * std::exp(-x(i));
    }
    const double g_below = g_[0];

    for (std::size_t i = 0; i < size; ++i) {
        const double xi = x(i);
        double s = 0.0;
        for (std::size_t j = 0; j < left_w_.size(); ++j) s += left_w_[j] * f_[std::min(i + j, size - 1)];

        // Cells with j <= i land on the grid.
        const std::size_t on_grid =
            static_cast<std::size_t>(std::upper_bound(right_j_.begin(), right_j_.end(), i) - right_j_.begin());
        const double off_grid_w = right_suffix_[on_grid] + tail_w_;
        const double ex = std::exp(xi);
        if (xi < kLinearBelow) {
            double lin = 0.0;
            for (std::size_t k = 0; k < on_grid; ++k) lin += right_w_[k] * g_[i - right_j_[k]];
            s += ex * (lin + off_grid_w * g_below);
        } else {
            double r = 0.0;
            for (std::size_t k = 0; k < on_grid; ++k) {
                const std::size_t z = i - right_j_[k];
                const double ml = right_m_[k] * log_survivor_[z];
                if (ml < kSaturated) {
                    r += right_w_[k];
                } else {
                    r -= right_w_[k] * std::expm1(ml + std::log1p(-right_frac_[k] * f_[z]));
                }
            }
            s += r - off_grid_w * std::expm1(-g_below * ex);
        }
        next_[i] = std::min(s, 1.0);
    }
    f_.swap(next_);
    // F is a distribution function in x; remove rounding-level non-monotonicity.
    for (std::size_t i = 1; i < size; ++i) f_[i] = std::max(f_[i], f_[i - 1]);
    ++n_;
}

void LawRecursion::advance_to(std::size_t n)
{
    while (n_ < n) step();
}

double LawRecursion::value(double at) const noexcept
{
    if (at <= grid_.x_lo) return f_.front() * std::exp(at - grid_.x_lo);
    const double pos = (at - grid_.x_lo) / grid_.dx;
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= f_.size()) return f_.back();
    const double t = pos - static_cast<double>(i);
    return f_[i] + t * (f_[i + 1] - f_[i]);
}

double LawRecursion::conditional_quantile(double q) const
{
    if (!(q > 0.0 && q < 1.0)) throw DomainError("conditional_quantile: q must lie in (0,1)");
    const double target = q * limit();
    if (f_.front() >= target) throw NumericError("conditional_quantile: grid does not reach far enough left");
    const auto it = std::lower_bound(f_.begin(), f_.end(), target);
    const auto i = static_cast<std::size_t>(it - f_.begin());
    const double f0 = f_[i - 1];
    const double f1 = f_[i];
    const double t = f1 > f0 ? (target - f0) / (f1 - f0) : 0.0;
    return x(i - 1) + t * grid_.dx;
}

} // namespace sbrw
