#pragma once

// Small, fast objects shared by the unit tests: a planar Lyapunov orbit about L1
// and its unstable eigenfunction packet, computed once per process.

#include "cr3bp/floquet.hpp"
#include "cr3bp/manifold.hpp"
#include "cr3bp/orbits.hpp"

namespace fixtures {

inline constexpr double kLyapunovEnergy = -1.58;

inline const cr3bp::MassRatio& mu() {
    static const cr3bp::MassRatio m(cr3bp::kEarthMoonMu);
    return m;
}

inline const cr3bp::FamilyResult& lyapunov_family() {
    using namespace cr3bp;
    static const FamilyResult fam = [] {
        const PeriodicOrbitProblem problem(mu());
        FamilySettings fs;
        fs.mesh_intervals = 40;
        fs.continuation.ds_max = 0.1;
        fs.continuation.max_steps = 60;
        fs.continuation.detect_branch_points = false;
        fs.target_energies = {kLyapunovEnergy};
        fs.stop_at_last_target = true;
        Continuation cont(problem, {PeriodicOrbitProblem::kT, PeriodicOrbitProblem::kSigma}, fs.continuation);
        const auto frame = start_from_equilibrium(cont, libration_points(mu())[0], EigenPair::Planar,
                                                  Mesh::uniform(fs.mesh_intervals, fs.degree));
        return compute_family(problem, frame, fs, "L1");
    }();
    return fam;
}

inline const cr3bp::PeriodicOrbit& lyapunov_orbit() { return lyapunov_family().targets.at(0); }

inline const cr3bp::GrowthReport& lyapunov_growth() {
    using namespace cr3bp;
    static const GrowthReport g = [] {
        const PeriodicOrbitProblem problem(mu());
        const auto& o = lyapunov_orbit();
        return grow_eigenfunction(problem, o, std::log(std::abs(o.multipliers(0))));
    }();
    return g;
}

/// Unstable manifold orbit from eps = 1e-6 to the first crossing of x = 0.9.
inline const cr3bp::ManifoldOrbit& lyapunov_manifold() {
    using namespace cr3bp;
    static const ManifoldOrbit o = [] {
        Section s;
        s.index = 0;
        s.value = 0.9;
        ManifoldSettings ms;
        ms.initial_intervals = 100;
        return grow_orbit(lyapunov_growth().packet, mu(), 1e-6, s, ms);
    }();
    return o;
}

}  // namespace fixtures
