#include "cr3bp/floquet.hpp"

#include <algorithm>
#include <cmath>

#include "cr3bp/errors.hpp"

namespace cr3bp {

namespace {

StateVector head6(const Vec& y, int offset = 0) { return StateVector(y.segment<6>(offset)); }

ScalarSet extended_scalars() { return ScalarSet(std::vector<std::string>{"T", "sigma", "lambda", "rho"}); }

double orbit_distance(const MeshedSolution& a, const MeshedSolution& target) {
    return (a.values().leftCols(6) - target.values().leftCols(6)).cwiseAbs().maxCoeff();
}

// Flip v so that v(0) has a nonnegative x component (largest component when x vanishes).
void orient(MeshedSolution& s) {
    const Vec v0 = s.at_start().segment(6, 6);
    int k = 0;
    if (std::abs(v0(0)) < 1e-12 * v0.cwiseAbs().maxCoeff()) v0.cwiseAbs().maxCoeff(&k);
    if (v0(k) < 0.0) s.values().rightCols(6) *= -1.0;
}

}  // namespace

ExtendedEigenProblem::ExtendedEigenProblem(MassRatio mu, int sign) : mu_(mu), sign_(sign) {
    if (sign != 1 && sign != -1) throw PreconditionError("boundary sign must be +1 or -1");
}

void ExtendedEigenProblem::rhs(double, const Vec& y, const Vec& par, Eigen::Ref<Vec> f, Mat* dfdy, Mat* dfdp) const {
    const StateVector u = head6(y), v = head6(y, 6);
    const double T = par(kT), sigma = par(kSigma), lambda = par(kLambda);
    const StateVector fh = vector_field(u, 0.0, mu_);
    StateVector d = StateVector::Zero();
    d.tail<3>() = u.tail<3>();
    const StateMatrix J = jacobian(u, mu_);
    const StateVector Jv = J * v;
    f.head<6>() = T * fh + sigma * d;
    f.tail<6>() = T * Jv - lambda * v;
    if (dfdy) {
        dfdy->setZero();
        dfdy->topLeftCorner<6, 6>() = T * J;
        dfdy->diagonal().segment<3>(3).array() += sigma;
        dfdy->bottomLeftCorner<6, 6>() = T * jacobian_derivative(u, v, mu_);
        dfdy->bottomRightCorner<6, 6>() = T * J - lambda * StateMatrix::Identity();
    }
    if (dfdp) {
        dfdp->setZero();
        dfdp->col(kT).head<6>() = fh;
        dfdp->col(kT).tail<6>() = Jv;
        dfdp->col(kSigma).head<6>() = d;
        dfdp->col(kLambda).tail<6>() = -v;
    }
}

void ExtendedEigenProblem::boundary(const Vec& y0, const Vec& y1, const Vec& par, Eigen::Ref<Vec> r, Mat* d0,
                                    Mat* d1, Mat* dp) const {
    r.head<6>() = y1.head<6>() - y0.head<6>();
    r.segment<6>(6) = y1.segment<6>(6) - sign_ * y0.segment<6>(6);
    r(12) = y0.segment<6>(6).squaredNorm() - par(kRho);
    if (d0) {
        d0->setZero();
        d0->topLeftCorner(6, 6) = -Mat::Identity(6, 6);
        d0->block(6, 6, 6, 6) = -sign_ * Mat::Identity(6, 6);
        d0->block(12, 6, 1, 6) = 2.0 * y0.segment<6>(6).transpose();
    }
    if (d1) {
        d1->setZero();
        d1->topLeftCorner(12, 12).setIdentity();
    }
    if (dp) {
        dp->setZero();
        (*dp)(12, kRho) = -1.0;
    }
}

void ExtendedEigenProblem::integrand(const IntegrandPoint& pt, const Vec&, Eigen::Ref<Vec> g, Mat* dgdy,
                                     Mat* dgdp) const {
    g(0) = pt.y.head<6>().dot(pt.reference_dot.head<6>());
    if (dgdy) {
        dgdy->setZero();
        dgdy->block(0, 0, 1, 6) = pt.reference_dot.head<6>().transpose();
    }
    if (dgdp) dgdp->setZero();
}

MeshedSolution trivial_extension(const MeshedSolution& orbit, double lambda) {
    if (orbit.dim() != 6) throw DimensionMismatch("trivial_extension expects a 6-dimensional orbit");
    ScalarSet sc = extended_scalars();
    sc.values(ExtendedEigenProblem::kT) = orbit.scalars().values(PeriodicOrbitProblem::kT);
    sc.values(ExtendedEigenProblem::kSigma) = orbit.scalars().values(PeriodicOrbitProblem::kSigma);
    sc.values(ExtendedEigenProblem::kLambda) = lambda;
    sc.values(ExtendedEigenProblem::kRho) = 0.0;
    MeshedSolution s(orbit.mesh(), 12, sc);
    s.values().setZero();
    s.values().leftCols(6) = orbit.values();
    return s;
}

double seed_exponent(const CVec& multipliers, double lambda_seed, int sign, double tol) {
    const std::complex<double> wanted = static_cast<double>(sign) * std::exp(lambda_seed);
    int best = -1;
    double best_dist = INFINITY;
    for (int i = 0; i < multipliers.size(); ++i) {
        const double d = std::abs(std::log(multipliers(i) / wanted));
        if (d < best_dist) {
            best_dist = d;
            best = i;
        }
    }
    const std::complex<double> m = multipliers(best);
    if (std::abs(m.imag()) > 1e-8 * std::abs(m) || m.real() * sign <= 0.0) {
        throw NotSimpleEigenvalue("multiplier nearest the seed is not real with the requested sign");
    }
    const double lambda = std::log(std::abs(m));
    if (std::abs(lambda) < 1e-6) throw NotSimpleEigenvalue("multiplier lies on the unit circle");
    if (std::abs(lambda - lambda_seed) > tol) throw NotSimpleEigenvalue("no multiplier within tolerance of the seed");
    for (int i = 0; i < multipliers.size(); ++i) {
        if (i != best && std::abs(multipliers(i) - m) < 1e-6 * std::abs(m)) {
            throw NotSimpleEigenvalue("multiplier is not simple");
        }
    }
    return lambda;
}

EigenPacket solve_packet(const ExtendedEigenProblem& problem, const MeshedSolution& guess, double rho,
                         const MeshedSolution& reference, const NewtonOptions& opts) {
    MeshedSolution start = guess;
    start.scalars().values(ExtendedEigenProblem::kRho) = rho;
    SystemSpec spec;
    spec.free = {ExtendedEigenProblem::kSigma, ExtendedEigenProblem::kLambda};
    spec.reference = &reference;
    DiscreteSystem sys(problem, spec);
    EigenPacket p;
    p.solution = newton_chord_solve(sys, start, opts).solution;
    p.sign = problem.sign();
    return p;
}

GrowthReport grow_eigenfunction(const PeriodicOrbitProblem& orbit_problem, const PeriodicOrbit& orbit,
                                double lambda_seed, const GrowthSettings& settings) {
    if (!(settings.rho_target > 0.0)) throw PreconditionError("target rho must be positive");
    const MassRatio mu = orbit_problem.mass_ratio();
    const CVec mults = orbit.multipliers.size() == 6 ? orbit.multipliers
                                                     : monodromy(orbit_problem, orbit.solution).multipliers;
    GrowthReport rep;
    rep.seed_lambda = seed_exponent(mults, lambda_seed, settings.sign, settings.seed_tolerance);

    const ExtendedEigenProblem problem(mu, settings.sign);
    const MeshedSolution target = trivial_extension(orbit.solution, rep.seed_lambda);
    {
        SystemSpec spec;
        spec.free = {ExtendedEigenProblem::kSigma, ExtendedEigenProblem::kLambda};
        spec.reference = &target;
        rep.seed_residual = DiscreteSystem(problem, spec).residual(target).cwiseAbs().maxCoeff();
    }

    const std::vector<int> free = {ExtendedEigenProblem::kSigma, ExtendedEigenProblem::kLambda,
                                   ExtendedEigenProblem::kRho};
    Continuation cont(problem, free, settings.continuation);
    BranchEvent bp;
    bp.kind = EventKind::BranchPoint;
    bp.label = "BP";
    bp.location = target;
    bp.reference = target;
    bp.tangent = cont.zero_like(target);
    bp.tangent.scalars().values(ExtendedEigenProblem::kLambda) = 1.0;
    ContinuationFrame frame = cont.branch_switch(bp, settings.continuation.ds0);

    std::vector<double> lambdas;
    RunHooks hooks;
    hooks.monitors.push_back(Monitor{"rho", EventKind::UserFunctionZero,
                                     [&settings](const MeshedSolution& x, const MeshedSolution&) {
                                         return x.scalars().values(ExtendedEigenProblem::kRho) - settings.rho_target;
                                     },
                                     true, 1});
    hooks.on_step = [&](const MeshedSolution& x, const StepRecord&) {
        rep.orbit_drift = std::max(rep.orbit_drift, orbit_distance(x, target));
        rep.sigma_max = std::max(rep.sigma_max, std::abs(x.scalars().values(ExtendedEigenProblem::kSigma)));
        lambdas.push_back(x.scalars().values(ExtendedEigenProblem::kLambda));
        ++rep.steps;
    };
    ContinuationResult res = cont.run(frame, hooks);
    if (!res.stopped) throw BranchSwitchFailure("eigenfunction norm did not reach the target");

    MeshedSolution guess = res.last.previous;
    const double rho_now = guess.scalars().values(ExtendedEigenProblem::kRho);
    if (rho_now <= 0.0) throw BranchSwitchFailure("bifurcating branch has nonpositive rho");
    guess.values().rightCols(6) *= std::sqrt(settings.rho_target / rho_now);
    rep.packet = solve_packet(problem, guess, settings.rho_target, target);
    orient(rep.packet.solution);

    const MeshedSolution& final_sol = rep.packet.solution;
    rep.orbit_drift = std::max(rep.orbit_drift, orbit_distance(final_sol, target));
    rep.sigma_max = std::max(rep.sigma_max, std::abs(rep.packet.sigma()));
    for (double l : lambdas) rep.lambda_drift = std::max(rep.lambda_drift, std::abs(l - rep.packet.lambda()));
    return rep;
}

PacketCheck check_packet(const EigenPacket& packet, const MassRatio& mu) {
    PacketCheck c;
    const MeshedSolution& s = packet.solution;
    const Mesh& mesh = s.mesh();
    const CollocationScheme& sch = CollocationScheme::get(mesh.degree);
    const double T = packet.period(), lambda = packet.lambda();
    for (int j = 0; j < mesh.intervals(); ++j) {
        for (int q = 0; q < sch.colloc_nodes.size(); ++q) {
            const double t = mesh.nodes[j] + mesh.width(j) * sch.colloc_nodes(q);
            const Vec y = s.evaluate(t);
            const Vec dy = s.derivative(t);
            const StateVector u = head6(y), v = head6(y, 6);
            const StateVector res = head6(dy, 6) - T * jacobian(u, mu) * v + lambda * v;
            c.ode_residual = std::max(c.ode_residual, res.cwiseAbs().maxCoeff());
        }
    }
    const Vec y0 = s.at_start(), y1 = s.at_end();
    c.boundary_defect = (y1.segment(6, 6) - packet.sign * y0.segment(6, 6)).cwiseAbs().maxCoeff();
    c.norm_defect = std::abs(y0.segment(6, 6).squaredNorm() - packet.rho());
    return c;
}

double packet_energy(const EigenPacket& packet, const MassRatio& mu) {
    return energy(head6(packet.solution.at_start()), mu);
}

PacketFamily continue_eigenpacket(const EigenPacket& packet, const MassRatio& mu,
                                  const PacketFamilySettings& settings) {
    if (!(packet.rho() > 0.0)) throw PreconditionError("packet continuation needs rho > 0");
    const ExtendedEigenProblem problem(mu, packet.sign);
    Continuation cont(problem, {ExtendedEigenProblem::kT, ExtendedEigenProblem::kSigma, ExtendedEigenProblem::kLambda},
                      settings.continuation);
    MeshedSolution direction = cont.zero_like(packet.solution);
    direction.scalars().values(ExtendedEigenProblem::kT) = settings.direction >= 0 ? 1.0 : -1.0;
    ContinuationFrame frame = cont.start(packet.solution, direction, settings.continuation.ds0);

    RunHooks hooks;
    auto e_of = [mu](const MeshedSolution& x) { return energy(head6(x.at_start()), mu); };
    for (double target : settings.target_energies) {
        hooks.monitors.push_back(Monitor{"E=" + std::to_string(target), EventKind::UserFunctionZero,
                                         [e_of, target](const MeshedSolution& x, const MeshedSolution&) {
                                             return e_of(x) - target;
                                         },
                                         true, 0});
    }
    for (double target : settings.target_periods) {
        hooks.monitors.push_back(Monitor{"T=" + std::to_string(target), EventKind::UserFunctionZero,
                                         [target](const MeshedSolution& x, const MeshedSolution&) {
                                             return x.scalars().values(ExtendedEigenProblem::kT) - target;
                                         },
                                         true, 0});
    }
    hooks.stop = [&](const MeshedSolution& x) {
        const double e = e_of(x);
        return e < settings.energy_min || e > settings.energy_max ||
               x.scalars().values(ExtendedEigenProblem::kLambda) < settings.lambda_min;
    };
    PacketFamily out;
    hooks.on_step = [&](const MeshedSolution& x, const StepRecord&) {
        EigenPacket p;
        p.solution = x;
        p.sign = packet.sign;
        out.packets.push_back(std::move(p));
    };
    ContinuationResult res = cont.run(frame, hooks);
    out.events = std::move(res.events);
    out.last = std::move(res.last);
    out.underflow = res.underflow;
    for (const auto& ev : out.events) {
        if (ev.kind == EventKind::UserFunctionZero) {
            EigenPacket p;
            p.solution = ev.location;
            p.sign = packet.sign;
            out.targets.push_back(std::move(p));
        }
    }
    return out;
}

}  // namespace cr3bp
