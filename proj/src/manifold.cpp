#include "cr3bp/manifold.hpp"

#include <algorithm>
#include <cmath>

#include "cr3bp/errors.hpp"

namespace cr3bp {

namespace {

StateVector head6(const Vec& y) { return StateVector(y.head<6>()); }

ScalarSet manifold_scalars() { return ScalarSet(std::vector<std::string>{"T_r", "eps", "x_sigma"}); }

ManifoldOrbit wrap(const MeshedSolution& r, const ManifoldOrbit& like) {
    ManifoldOrbit o = like;
    o.r = r;
    return o;
}

// Each interval split in two.
Mesh bisected(const Mesh& m) {
    Mesh out;
    out.degree = m.degree;
    for (int j = 0; j < m.intervals(); ++j) {
        out.nodes.push_back(m.nodes[j]);
        out.nodes.push_back(0.5 * (m.nodes[j] + m.nodes[j + 1]));
    }
    out.nodes.push_back(1.0);
    return out;
}

}  // namespace

void Section::validate() const {
    if (index < 0 || index > 5) throw PreconditionError("section coordinate index must be in 0..5");
    if (crossing < 1) throw PreconditionError("section crossing count must be at least 1");
}

ManifoldProblem::ManifoldProblem(MassRatio mu, StateVector u0, StateVector v0, Section section, bool pinned,
                                 int time_sign)
    : mu_(mu), u0_(u0), v0_(v0), section_(section), pinned_(pinned), time_sign_(time_sign) {
    section_.validate();
    if (time_sign != 1 && time_sign != -1) throw PreconditionError("time sign must be +1 or -1");
}

void ManifoldProblem::rhs(double, const Vec& y, const Vec& par, Eigen::Ref<Vec> f, Mat* dfdy, Mat* dfdp) const {
    const StateVector r = head6(y);
    const StateVector fh = vector_field(r, 0.0, mu_);
    const double scale = time_sign_ * par(kTr);
    f = scale * fh;
    if (dfdy) *dfdy = scale * jacobian(r, mu_);
    if (dfdp) {
        dfdp->setZero();
        dfdp->col(kTr) = time_sign_ * fh;
    }
}

void ManifoldProblem::boundary(const Vec& y0, const Vec& y1, const Vec& par, Eigen::Ref<Vec> r, Mat* d0, Mat* d1,
                               Mat* dp) const {
    r.head<6>() = y0.head<6>() - u0_ - par(kEps) * v0_;
    if (pinned_) r(6) = y1(section_.index) - par(kSection);
    if (d0) {
        d0->setZero();
        d0->topLeftCorner(6, 6).setIdentity();
    }
    if (d1) {
        d1->setZero();
        if (pinned_) (*d1)(6, section_.index) = 1.0;
    }
    if (dp) {
        dp->setZero();
        dp->col(kEps).head<6>() = -v0_;
        if (pinned_) (*dp)(6, kSection) = -1.0;
    }
}

double ManifoldOrbit::start_defect() const {
    return (head6(r.at_start()) - u0 - eps() * v0).cwiseAbs().maxCoeff();
}

double ManifoldOrbit::section_defect() const {
    return std::abs(r.at_end()(section.index) - section.value);
}

FundamentalDomain fundamental_domain(double eps1, double lambda) {
    if (!(lambda > 0.0)) throw NonPositiveExponent("fundamental domain needs a positive exponent");
    if (eps1 == 0.0) throw PreconditionError("offset eps1 must be nonzero");
    return {eps1, std::exp(lambda) * eps1};
}

double energy_spread(const MeshedSolution& r, const MassRatio& mu, int samples) {
    double lo = INFINITY, hi = -INFINITY;
    for (int k = 0; k < samples; ++k) {
        const double e = energy(head6(r.evaluate(static_cast<double>(k) / (samples - 1))), mu);
        lo = std::min(lo, e);
        hi = std::max(hi, e);
    }
    return hi - lo;
}

MeshedSolution doubled_mesh(const MeshedSolution& r, int max_intervals) {
    const int N = r.mesh().intervals();
    if (N >= max_intervals) return r;
    const int target = std::min(2 * N, max_intervals);
    Mesh next = equidistributed_mesh(r, target);
    if (next.intervals() != target) next = target == 2 * N ? bisected(r.mesh()) : Mesh::uniform(target, r.mesh().degree);
    return r.interpolate_to(next);
}

MeshedSolution refine_manifold_mesh(const MeshedSolution& r, const MassRatio& mu, const ManifoldSettings& settings) {
    if (energy_spread(r, mu) > settings.spread_target && r.mesh().intervals() < settings.max_intervals) {
        return doubled_mesh(r, settings.max_intervals);
    }
    return adapt_mesh(r);
}

ManifoldOrbit grow_orbit(const EigenPacket& base, const MassRatio& mu, double eps1, const Section& section,
                         const ManifoldSettings& settings) {
    if (eps1 == 0.0) throw PreconditionError("offset eps1 must be nonzero");
    section.validate();
    ManifoldOrbit proto;
    proto.section = section;
    proto.u0 = head6(base.solution.at_start());
    proto.v0 = StateVector(base.solution.at_start().segment<6>(6));
    proto.lambda = base.lambda();
    proto.base_energy = energy(proto.u0, mu);
    proto.time_sign = settings.time_sign;

    const ManifoldProblem free_end(mu, proto.u0, proto.v0, section, false, settings.time_sign);
    ScalarSet sc = manifold_scalars();
    sc.values << 0.0, eps1, section.value;
    const StateVector r0 = proto.u0 + eps1 * proto.v0;
    MeshedSolution s = MeshedSolution::sample(Mesh::uniform(settings.initial_intervals, settings.degree), 6,
                                              [&](double) { return Vec(r0); }, sc);

    Continuation cont(free_end, {ManifoldProblem::kTr}, settings.continuation);
    MeshedSolution direction = cont.zero_like(s);
    direction.scalars().values(ManifoldProblem::kTr) = 1.0;
    ContinuationFrame frame = cont.start(s, direction, settings.continuation.ds0);

    RunHooks hooks;
    hooks.monitors.push_back(Monitor{"section", EventKind::UserFunctionZero,
                                     [section](const MeshedSolution& x, const MeshedSolution&) {
                                         return x.at_end()(section.index) - section.value;
                                     },
                                     true, section.crossing});
    hooks.stop = [&](const MeshedSolution& x) { return x.scalars().values(ManifoldProblem::kTr) > settings.max_time; };
    hooks.remesh = [&](const MeshedSolution& x) { return refine_manifold_mesh(x, mu, settings); };
    ContinuationResult res = cont.run(frame, hooks);

    int crossings = 0;
    const BranchEvent* hit = nullptr;
    for (const auto& ev : res.events) {
        if (ev.label == "section" && ++crossings == section.crossing) hit = &ev;
    }
    if (!hit) {
        if (res.underflow) {
            // Falling into a primary shows up as repeated collision failures near the last solution.
            const MeshedSolution& last = res.last.previous;
            double r1min = INFINITY, r2min = INFINITY;
            for (int k = 0; k < last.values().rows(); ++k) {
                const Vec p = last.values().row(k).transpose();
                r1min = std::min(r1min, std::hypot(p(0) + mu.value(), p(1), p(2)));
                r2min = std::min(r2min, std::hypot(p(0) - 1.0 + mu.value(), p(1), p(2)));
            }
            if (std::min(r1min, r2min) < 1e-2) throw CollisionError(r1min, r2min);
        }
        throw SectionNotReached(settings.max_time);
    }

    const ManifoldProblem pinned(mu, proto.u0, proto.v0, section, true, settings.time_sign);
    SystemSpec spec;
    spec.free = {ManifoldProblem::kTr};
    DiscreteSystem sys(pinned, spec);
    MeshedSolution guess = hit->location;
    guess.scalars().values(ManifoldProblem::kSection) = section.value;
    return wrap(newton_chord_solve(sys, guess, settings.continuation.newton).solution, proto);
}

const char* termination_name(SweepTermination t) {
    switch (t) {
        case SweepTermination::DomainCovered: return "domain-covered";
        case SweepTermination::Obstacle: return "obstacle";
        case SweepTermination::StepLimit: return "step-limit";
        case SweepTermination::StopCriterion: return "stopped";
    }
    return "unknown";
}

SweepResult sweep_manifold(const ManifoldOrbit& start, const MassRatio& mu, const FundamentalDomain& domain,
                           const ManifoldSettings& settings, std::function<bool(const ManifoldOrbit&)> stop) {
    const ManifoldProblem problem(mu, start.u0, start.v0, start.section, true, start.time_sign);
    Continuation cont(problem, {ManifoldProblem::kTr, ManifoldProblem::kEps}, settings.continuation);
    const double dir = domain.eps2 > start.eps() ? 1.0 : -1.0;
    MeshedSolution direction = cont.zero_like(start.r);
    direction.scalars().values(ManifoldProblem::kEps) = dir;
    ContinuationFrame frame = cont.start(start.r, direction, settings.continuation.ds0);

    SweepResult out;
    bool time_cap = false;
    bool user_stop = false;
    double prev_eps = start.eps();
    RunHooks hooks;
    const double eps2 = domain.eps2;
    hooks.monitors.push_back(Monitor{"eps2", EventKind::UserFunctionZero,
                                     [eps2](const MeshedSolution& x, const MeshedSolution&) {
                                         return x.scalars().values(ManifoldProblem::kEps) - eps2;
                                     },
                                     true, 1});
    hooks.remesh = [&](const MeshedSolution& x) { return refine_manifold_mesh(x, mu, settings); };
    hooks.resolved = [&](const MeshedSolution& x) { return energy_spread(x, mu) <= settings.spread_limit; };
    hooks.refine = [&](const MeshedSolution& x) { return doubled_mesh(x, settings.max_intervals); };
    hooks.on_step = [&](const MeshedSolution& x, const StepRecord& rec) {
        out.orbits.push_back(wrap(x, start));
        out.records.push_back(rec);
    };
    hooks.stop = [&](const MeshedSolution& x) {
        const double eps = x.scalars().values(ManifoldProblem::kEps);
        const double tr = x.scalars().values(ManifoldProblem::kTr);
        const bool stalled = std::abs(eps - prev_eps) < settings.eps_stall;
        prev_eps = eps;
        if (tr > settings.max_time && stalled) time_cap = true;
        if (stop && stop(wrap(x, start))) user_stop = true;
        return time_cap || user_stop;
    };
    const ContinuationResult res = cont.run(frame, hooks);
    bool covered = false;
    for (const auto& ev : res.events) covered = covered || ev.label == "eps2";
    if (res.underflow) {
        out.termination = SweepTermination::Obstacle;
        out.obstacle_reason = "step-underflow";
    } else if (covered) {
        out.termination = SweepTermination::DomainCovered;
    } else if (time_cap) {
        out.termination = SweepTermination::Obstacle;
        out.obstacle_reason = "time-cap";
    } else if (user_stop) {
        out.termination = SweepTermination::StopCriterion;
    }
    return out;
}

ObstacleFit obstacle_log_fit(const std::vector<ManifoldOrbit>& orbits, int count, double floor) {
    ObstacleFit fit;
    if (orbits.size() < 3) return fit;
    const double eps_star = orbits.back().eps();
    // Once eps has stalled, consecutive steps differ only by solver noise, so the points are picked evenly in
    // log|eps - eps*| over the whole approach instead of taking the trailing steps.
    std::vector<std::pair<double, double>> pool;  // (log|eps - eps*|, T_r)
    for (std::size_t i = 0; i + 1 < orbits.size(); ++i) {
        const double d = std::abs(orbits[i].eps() - eps_star);
        if (d > floor * std::abs(eps_star)) pool.emplace_back(std::log(d), orbits[i].integration_time());
    }
    if (static_cast<int>(pool.size()) < 3) return fit;
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& p : pool) {
        lo = std::min(lo, p.first);
        hi = std::max(hi, p.first);
    }
    std::vector<std::size_t> picked;
    for (int k = 0; k < count; ++k) {
        const double target = count > 1 ? hi + (lo - hi) * k / (count - 1) : lo;
        std::size_t best = 0;
        for (std::size_t i = 1; i < pool.size(); ++i) {
            if (std::abs(pool[i].first - target) < std::abs(pool[best].first - target)) best = i;
        }
        if (std::find(picked.begin(), picked.end(), best) == picked.end()) picked.push_back(best);
    }
    fit.points = static_cast<int>(picked.size());
    if (fit.points < 3) return fit;
    Vec x(fit.points), y(fit.points);
    for (int i = 0; i < fit.points; ++i) {
        x(i) = pool[picked[i]].first;
        y(i) = pool[picked[i]].second;
    }
    const double mx = x.mean(), my = y.mean();
    const double sxx = (x.array() - mx).square().sum();
    const double sxy = ((x.array() - mx) * (y.array() - my)).sum();
    const double syy = (y.array() - my).square().sum();
    fit.slope = sxy / sxx;
    fit.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
    return fit;
}

ShootingComparison shooting_compare(const ManifoldOrbit& orbit, const MassRatio& mu, int samples, double threshold,
                                    const IntegrationOptions& opts) {
    ShootingComparison cmp;
    const double Tr = orbit.integration_time();
    std::vector<double> times(samples + 1);
    for (int k = 0; k <= samples; ++k) times[k] = orbit.time_sign * Tr * k / samples;
    const auto traj = propagate_to_times(head6(orbit.r.at_start()), times, mu, opts);
    cmp.horizon = Tr;
    bool diverged = false;
    for (int k = 0; k <= samples; ++k) {
        const double t = static_cast<double>(k) / samples;
        const double d = (traj[k].state - head6(orbit.r.evaluate(t))).cwiseAbs().maxCoeff();
        cmp.times.push_back(Tr * t);
        cmp.defects.push_back(d);
        if (Tr * t <= 0.25 * Tr) cmp.max_defect_quarter = std::max(cmp.max_defect_quarter, d);
        if (!diverged && d > threshold) {
            diverged = true;
            cmp.horizon = Tr * t;
        }
    }
    return cmp;
}

}  // namespace cr3bp
