#include "cr3bp/integrate.hpp"

#include <array>

#include <boost/numeric/odeint.hpp>

#include "cr3bp/errors.hpp"

namespace cr3bp {

namespace odeint = boost::numeric::odeint;

namespace {

using State = std::array<double, 6>;
using StmState = std::array<double, 42>;

StateVector to_vector(const State& x) {
    StateVector s;
    for (int i = 0; i < 6; ++i) s(i) = x[i];
    return s;
}

template <typename S>
auto stepper(const IntegrationOptions& o) {
    return odeint::make_controlled(o.abs_tol, o.rel_tol, odeint::runge_kutta_fehlberg78<S>());
}

}  // namespace

std::vector<TrajectorySample> propagate_to_times(const StateVector& s0, const std::vector<double>& times,
                                                 const MassRatio& mu, const IntegrationOptions& opts) {
    std::vector<TrajectorySample> out;
    if (times.empty()) return out;
    State x;
    for (int i = 0; i < 6; ++i) x[i] = s0(i);
    const double sigma = opts.sigma;
    auto rhs = [&](const State& y, State& dy, double) {
        const StateVector f = vector_field(to_vector(y), sigma, mu);
        for (int i = 0; i < 6; ++i) dy[i] = f(i);
    };
    std::vector<double> grid;
    grid.reserve(times.size() + 1);
    const bool prepend = times.front() != 0.0;
    if (prepend) grid.push_back(0.0);
    grid.insert(grid.end(), times.begin(), times.end());
    const double sign = (grid.back() < 0.0) ? -1.0 : 1.0;
    auto obs = [&](const State& y, double t) { out.push_back({t, to_vector(y)}); };
    odeint::integrate_times(stepper<State>(opts), rhs, x, grid.begin(), grid.end(), sign * opts.initial_step,
                            obs);
    if (prepend) out.erase(out.begin());
    for (const auto& s : out) {
        if (!s.state.allFinite()) throw NonFiniteError("integration produced non-finite state");
    }
    return out;
}

StateVector propagate(const StateVector& s0, double t_end, const MassRatio& mu, const IntegrationOptions& opts) {
    if (t_end == 0.0) return s0;
    const auto samples = propagate_to_times(s0, {t_end}, mu, opts);
    return samples.back().state;
}

std::pair<StateVector, StateMatrix> propagate_with_stm(const StateVector& s0, double t_end, const MassRatio& mu,
                                                       const IntegrationOptions& opts) {
    StmState x{};
    for (int i = 0; i < 6; ++i) {
        x[i] = s0(i);
        x[6 + i * 6 + i] = 1.0;
    }
    const double sigma = opts.sigma;
    auto rhs = [&](const StmState& y, StmState& dy, double) {
        StateVector s;
        for (int i = 0; i < 6; ++i) s(i) = y[i];
        const StateVector f = vector_field(s, sigma, mu);
        StateMatrix j = jacobian(s, mu);
        j.bottomRightCorner<3, 3>().diagonal().array() += sigma;
        Eigen::Map<const StateMatrix> phi(y.data() + 6);
        Eigen::Map<StateMatrix> dphi(dy.data() + 6);
        dphi = j * phi;
        for (int i = 0; i < 6; ++i) dy[i] = f(i);
    };
    if (t_end != 0.0) {
        odeint::integrate_adaptive(stepper<StmState>(opts), rhs, x, 0.0, t_end,
                                   (t_end < 0.0 ? -1.0 : 1.0) * opts.initial_step);
    }
    StateVector s;
    for (int i = 0; i < 6; ++i) s(i) = x[i];
    const StateMatrix phi = Eigen::Map<const StateMatrix>(x.data() + 6);
    return {s, phi};
}

}  // namespace cr3bp
