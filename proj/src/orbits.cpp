#include "cr3bp/orbits.hpp"

#include <algorithm>
#include <cmath>

#include "cr3bp/errors.hpp"

namespace cr3bp {

namespace {

StateVector as_state(const Vec& y) { return StateVector(y.head<6>()); }

double energy_spread_of(const MeshedSolution& s, const MassRatio& mu) {
    double lo = INFINITY, hi = -INFINITY;
    for (int k = 0; k < 16; ++k) {
        const double e = energy(as_state(s.evaluate(k / 16.0)), mu);
        lo = std::min(lo, e);
        hi = std::max(hi, e);
    }
    return hi - lo;
}

}  // namespace

void PeriodicOrbitProblem::rhs(double, const Vec& y, const Vec& par, Eigen::Ref<Vec> f, Mat* dfdy, Mat* dfdp) const {
    const StateVector s = as_state(y);
    const double T = par(kT), sigma = par(kSigma);
    const StateVector fh = vector_field(s, 0.0, mu_);
    StateVector d = StateVector::Zero();
    d.tail<3>() = s.tail<3>();
    f = T * fh + sigma * d;
    if (dfdy) {
        *dfdy = T * jacobian(s, mu_);
        dfdy->diagonal().tail<3>().array() += sigma;
    }
    if (dfdp) {
        dfdp->col(kT) = fh;
        dfdp->col(kSigma) = d;
    }
}

void PeriodicOrbitProblem::boundary(const Vec& y0, const Vec& y1, const Vec&, Eigen::Ref<Vec> r, Mat* d0, Mat* d1,
                                    Mat* dp) const {
    r = y1 - y0;
    if (d0) *d0 = -Mat::Identity(6, 6);
    if (d1) *d1 = Mat::Identity(6, 6);
    if (dp) dp->setZero();
}

void PeriodicOrbitProblem::integrand(const IntegrandPoint& pt, const Vec&, Eigen::Ref<Vec> g, Mat* dgdy,
                                     Mat* dgdp) const {
    g(0) = pt.y.head<6>().dot(pt.reference_dot.head<6>());
    if (dgdy) dgdy->row(0) = pt.reference_dot.head<6>().transpose();
    if (dgdp) dgdp->setZero();
}

PeriodicOrbit describe_orbit(const PeriodicOrbitProblem& problem, const MeshedSolution& s, const std::string& family) {
    PeriodicOrbit o;
    o.solution = s;
    o.family = family;
    o.period = s.scalars().values(PeriodicOrbitProblem::kT);
    o.sigma = s.scalars().values(PeriodicOrbitProblem::kSigma);
    const MassRatio& mu = problem.mass_ratio();
    o.energy = energy(as_state(s.at_start()), mu);
    o.energy_spread = energy_spread_of(s, mu);
    o.periodicity_defect = (s.at_end() - s.at_start()).cwiseAbs().maxCoeff();
    const MonodromyResult mono = monodromy(problem, s);
    o.multipliers = mono.multipliers;
    o.ill_conditioned = mono.ill_conditioned;
    return o;
}

namespace {

// Indices of the two multipliers closest to 1.
std::pair<int, int> trivial_pair(const CVec& mults) {
    std::vector<int> idx(mults.size());
    for (int i = 0; i < mults.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return std::abs(mults(a) - 1.0) < std::abs(mults(b) - 1.0); });
    return {idx[0], idx[1]};
}

}  // namespace

std::vector<std::complex<double>> nontrivial_exponents(const CVec& multipliers) {
    const auto [a, b] = trivial_pair(multipliers);
    std::vector<std::complex<double>> out;
    for (int i = 0; i < multipliers.size(); ++i) {
        if (i == a || i == b) continue;
        out.push_back(std::log(multipliers(i)));
    }
    return out;
}

double trivial_multiplier_defect(const CVec& multipliers) {
    const auto [a, b] = trivial_pair(multipliers);
    return std::max(std::abs(multipliers(a) - 1.0), std::abs(multipliers(b) - 1.0));
}

double reciprocity_defect(const CVec& multipliers) {
    const int n = static_cast<int>(multipliers.size());
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
        const std::complex<double> inv = 1.0 / multipliers(i);
        double best = INFINITY;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            best = std::min(best, std::abs(multipliers(j) - inv) / std::max(std::abs(inv), 1e-300));
        }
        worst = std::max(worst, best);
    }
    return worst;
}

ContinuationFrame start_from_equilibrium(const Continuation& cont, const LibrationPoint& point, EigenPair pair,
                                         const Mesh& mesh, double amplitude) {
    // Purely imaginary eigenvalues with positive imaginary part, classified by out-of-plane content.
    int chosen = -1;
    double best_score = -1.0;
    for (int i = 0; i < 6; ++i) {
        const auto e = point.eigenvalues[i];
        if (!(e.imag() > 1e-9) || std::abs(e.real()) > 1e-9 * std::max(1.0, std::abs(e))) continue;
        const auto v = point.eigenvectors.col(i);
        const double out = std::abs(v(2)) + std::abs(v(5));
        const double in = std::abs(v(0)) + std::abs(v(1)) + std::abs(v(3)) + std::abs(v(4));
        const double score = pair == EigenPair::Vertical ? out / (in + out) : in / (in + out);
        if (score > best_score) {
            best_score = score;
            chosen = i;
        }
    }
    if (chosen < 0 || best_score < 0.5) throw NotOscillatory("no purely imaginary eigenvalue pair of the requested kind");
    const double omega = point.eigenvalues[chosen].imag();
    Eigen::Matrix<std::complex<double>, 6, 1> phi = point.eigenvectors.col(chosen);
    phi /= phi.head<3>().norm();
    // Rotate so the largest position component is real at t = 0.
    int k = 0;
    phi.head<3>().cwiseAbs().maxCoeff(&k);
    phi *= std::abs(phi(k)) / phi(k);

    ScalarSet sc(std::vector<std::string>{"T", "sigma"});
    sc.values(PeriodicOrbitProblem::kT) = 2.0 * M_PI / omega;
    auto base = MeshedSolution::sample(mesh, 6, [&](double) { return Vec(point.state); }, sc);
    auto shape = MeshedSolution::sample(mesh, 6, [&](double t) {
        const std::complex<double> rot = std::exp(std::complex<double>(0.0, 2.0 * M_PI * t));
        return Vec((phi * rot).real());
    }, sc);
    shape.scalars().values.setZero();
    const double norm = std::sqrt(integral_inner(shape, shape));
    MeshedSolution predictor = base;
    predictor.values() += amplitude * shape.values();

    ContinuationFrame frame;
    frame.previous = base;
    frame.tangent = shape;
    cont.normalize(frame.tangent);
    frame.step = amplitude * norm;
    frame.phase_reference = predictor;
    return frame;
}

NewtonResult reconverge_orbit(const PeriodicOrbitProblem& problem, const MeshedSolution& s, const NewtonOptions& opts) {
    SystemSpec spec;
    spec.free = {PeriodicOrbitProblem::kSigma};
    spec.reference = &s;
    DiscreteSystem sys(problem, spec);
    return newton_chord_solve(sys, s, opts);
}

FamilyResult compute_family(const PeriodicOrbitProblem& problem, const ContinuationFrame& start,
                            const FamilySettings& settings, const std::string& family) {
    const MassRatio mu = problem.mass_ratio();
    RunHooks hooks;
    // Energy extrema along the family: derivative of E(u(0)) along the tangent.
    hooks.monitors.push_back(Monitor{"fold", EventKind::Fold,
                                     [mu](const MeshedSolution& x, const MeshedSolution& t) {
                                         return energy_gradient(as_state(x.at_start()), mu).dot(as_state(t.at_start()));
                                     },
                                     false, 0});
    for (double target : settings.target_energies) {
        hooks.monitors.push_back(Monitor{"E=" + std::to_string(target), EventKind::UserFunctionZero,
                                         [mu, target](const MeshedSolution& x, const MeshedSolution&) {
                                             return energy(as_state(x.at_start()), mu) - target;
                                         },
                                         true, 0});
    }
    for (double target : settings.target_periods) {
        hooks.monitors.push_back(Monitor{"T=" + std::to_string(target), EventKind::UserFunctionZero,
                                         [target](const MeshedSolution& x, const MeshedSolution&) {
                                             return x.scalars().values(PeriodicOrbitProblem::kT) - target;
                                         },
                                         true, 0});
    }
    std::vector<std::string> labels;
    for (double t : settings.target_energies) labels.push_back("E=" + std::to_string(t));
    for (double t : settings.target_periods) labels.push_back("T=" + std::to_string(t));
    std::vector<bool> crossed(labels.size(), false);
    hooks.stop = [&](const MeshedSolution& x) {
        const double e = energy(as_state(x.at_start()), mu);
        const double T = x.scalars().values(PeriodicOrbitProblem::kT);
        if (e < settings.energy_min || e > settings.energy_max || T > settings.period_max) return true;
        if (settings.stop_at_last_target && !labels.empty()) {
            return std::all_of(crossed.begin(), crossed.end(), [](bool b) { return b; });
        }
        return false;
    };
    // Orbits passing close to a primary outgrow the initial mesh: double it while the energy drifts.
    auto doubled = [&](const MeshedSolution& x) {
        const int N = x.mesh().intervals();
        if (N >= settings.max_intervals) return x;
        const int target = std::min(2 * N, settings.max_intervals);
        Mesh next = equidistributed_mesh(x, target);
        if (next.intervals() != target) next = Mesh::uniform(target, x.mesh().degree);
        return x.interpolate_to(next);
    };
    hooks.remesh = [&](const MeshedSolution& x) {
        return energy_spread_of(x, mu) > settings.spread_target ? doubled(x) : adapt_mesh(x);
    };
    hooks.resolved = [&](const MeshedSolution& x) { return energy_spread_of(x, mu) <= 10.0 * settings.spread_target; };
    hooks.refine = doubled;
    FamilyResult out;
    hooks.on_step = [&](const MeshedSolution& x, const StepRecord& rec) {
        for (const auto& name : rec.events) {
            for (std::size_t i = 0; i < labels.size(); ++i) {
                if (name == labels[i]) crossed[i] = true;
            }
        }
        if (settings.compute_multipliers) {
            out.orbits.push_back(describe_orbit(problem, x, family));
        } else {
            PeriodicOrbit o;
            o.solution = x;
            o.family = family;
            o.period = x.scalars().values(PeriodicOrbitProblem::kT);
            o.sigma = x.scalars().values(PeriodicOrbitProblem::kSigma);
            o.energy = energy(as_state(x.at_start()), mu);
            out.orbits.push_back(std::move(o));
        }
    };
    ContinuationSettings cs = settings.continuation;
    cs.store_every = 0;
    Continuation runner(problem, {PeriodicOrbitProblem::kT, PeriodicOrbitProblem::kSigma}, cs);
    ContinuationResult res = runner.run(start, hooks);
    out.events = std::move(res.events);
    out.records = std::move(res.records);
    out.last = std::move(res.last);
    out.underflow = res.underflow;
    for (const auto& ev : out.events) {
        if (ev.kind == EventKind::UserFunctionZero && (ev.label.rfind("E=", 0) == 0 || ev.label.rfind("T=", 0) == 0)) {
            out.targets.push_back(describe_orbit(problem, ev.location, family));
        }
    }
    return out;
}

std::optional<PeriodicOrbit> member_near(const FamilyResult& family, double energy_value, double period_hint,
                                         double energy_tol) {
    std::optional<PeriodicOrbit> best;
    for (const auto& o : family.targets) {
        if (std::abs(o.energy - energy_value) > energy_tol) continue;
        if (!best || std::abs(o.period - period_hint) < std::abs(best->period - period_hint)) best = o;
    }
    return best;
}

}  // namespace cr3bp
