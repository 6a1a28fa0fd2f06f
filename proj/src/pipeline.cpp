#include "cr3bp/pipeline.hpp"

#include <cmath>

#include "cr3bp/errors.hpp"

namespace cr3bp::io {

FamilyRun run_family(const RunConfig& c) {
    const MassRatio mu(c.mu);
    const auto points = libration_points(mu);
    const PeriodicOrbitProblem problem(mu);
    const EigenPair pair = c.pair == "vertical" ? EigenPair::Vertical : EigenPair::Planar;
    const std::string idx = std::to_string(c.libration);

    FamilyRun run;
    run.primary_tag = c.switch_at == 0 && !c.family.empty() ? c.family : (pair == EigenPair::Vertical ? "V" : "L") + idx;
    FamilySettings fs = family_settings(c);
    if (c.switch_at > 0) {
        fs.target_energies.clear();
        fs.target_periods.clear();
        fs.stop_at_last_target = false;
    }
    Continuation cont(problem, {PeriodicOrbitProblem::kT, PeriodicOrbitProblem::kSigma}, fs.continuation);
    const ContinuationFrame frame =
        start_from_equilibrium(cont, points.at(c.libration - 1), pair, Mesh::uniform(c.intervals, c.degree));
    run.primary = compute_family(problem, frame, fs, run.primary_tag);
    if (c.switch_at == 0) return run;

    int seen = 0;
    const BranchEvent* bp = nullptr;
    for (const auto& ev : run.primary.events) {
        if (ev.kind == EventKind::BranchPoint && ++seen == c.switch_at) bp = &ev;
    }
    if (!bp) {
        throw BranchSwitchFailure("family " + run.primary_tag + " has only " + std::to_string(seen) +
                                  " branch points, cannot switch at #" + std::to_string(c.switch_at));
    }
    run.secondary_tag = !c.family.empty() ? c.family : (c.switch_at == 1 ? "H" : "A") + idx;
    run.secondary = compute_family(problem, cont.branch_switch(*bp, c.ds0), family_settings(c), run.secondary_tag);
    return run;
}

PacketRun run_eigenfunction(const RunConfig& c, const PeriodicOrbit& orbit) {
    const MassRatio mu(c.mu);
    const PeriodicOrbitProblem problem(mu);
    double seed = c.lambda_seed;
    if (seed == 0.0) {
        const CVec mults = orbit.multipliers.size() == 6 ? orbit.multipliers : monodromy(problem, orbit.solution).multipliers;
        seed = std::log(std::abs(mults(0)));
    }
    GrowthSettings gs;
    gs.continuation.newton.tol = c.newton_tol;
    PacketRun run;
    run.growth = grow_eigenfunction(problem, orbit, seed, gs);
    run.packet = run.growth.packet;
    if (c.packet_energy == 0.0 && c.packet_period == 0.0) return run;

    PacketFamilySettings ps;
    ps.continuation = continuation_settings(c);
    ps.energy_min = c.energy_min;
    ps.energy_max = c.energy_max;
    if (c.packet_energy != 0.0) ps.target_energies = {c.packet_energy};
    if (c.packet_period != 0.0) ps.target_periods = {c.packet_period};
    ps.direction = c.direction;
    run.family = continue_eigenpacket(run.packet, mu, ps);
    if (run.family->targets.empty()) throw ConvergenceError("packet continuation did not reach the target");
    run.packet = run.family->targets.front();
    return run;
}

}  // namespace cr3bp::io
