#pragma once

// Adaptive high-order initial value integration of the rotating-frame flow.

#include <vector>

#include "cr3bp/dynamics.hpp"

namespace cr3bp {

struct TrajectorySample {
    double t;
    StateVector state;
};

struct IntegrationOptions {
    double abs_tol = 1e-13;
    double rel_tol = 1e-13;
    double sigma = 0.0;
    double initial_step = 1e-3;
};

/// Integrate from s0 over [0, t_end] (t_end may be negative); returns the final state.
StateVector propagate(const StateVector& s0, double t_end, const MassRatio& mu,
                      const IntegrationOptions& opts = {});

/// States at the requested (monotone) times, starting from s0 at t = 0.
std::vector<TrajectorySample> propagate_to_times(const StateVector& s0, const std::vector<double>& times,
                                                 const MassRatio& mu, const IntegrationOptions& opts = {});

/// State and 6x6 state-transition matrix at t_end.
std::pair<StateVector, StateMatrix> propagate_with_stm(const StateVector& s0, double t_end, const MassRatio& mu,
                                                       const IntegrationOptions& opts = {});

}  // namespace cr3bp
