#include "cr3bp/continuation.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cr3bp/errors.hpp"

namespace cr3bp {

double adapt_step(double ds, int newton_iterations, const ContinuationSettings& settings) {
    double factor = 0.5;
    if (newton_iterations <= 3) {
        factor = 1.3;
    } else if (newton_iterations <= 5) {
        factor = 1.0;
    }
    const double mag = std::clamp(std::abs(ds) * factor, settings.ds_min, settings.ds_max);
    return std::copysign(mag, ds);
}

double reduce_step(double ds, const ContinuationSettings& settings) {
    const double next = 0.5 * ds;
    if (std::abs(next) < settings.ds_min) {
        throw StepSizeUnderflow("continuation step size fell below the minimum");
    }
    return next;
}

const char* event_name(EventKind kind) {
    switch (kind) {
        case EventKind::Fold: return "fold";
        case EventKind::BranchPoint: return "branch-point";
        case EventKind::UserFunctionZero: return "user-zero";
        case EventKind::NoConvergenceStop: return "no-convergence-stop";
    }
    return "unknown";
}

Continuation::Continuation(const BoundaryValueProblem& problem, std::vector<int> free, ContinuationSettings settings)
    : problem_(&problem), free_(std::move(free)), settings_(settings) {
    problem_->check_well_posed(static_cast<int>(free_.size()), true);
}

SystemSpec Continuation::make_spec(const MeshedSolution* reference, const MeshedSolution* previous,
                                   const MeshedSolution* tangent, double ds) const {
    SystemSpec spec;
    spec.free = free_;
    spec.reference = reference;
    if (previous && tangent) spec.arclength = ArclengthRow{previous, tangent, ds};
    return spec;
}

MeshedSolution Continuation::zero_like(const MeshedSolution& s) const {
    MeshedSolution t = s;
    t.values().setZero();
    t.scalars().values.setZero();
    return t;
}

void Continuation::normalize(MeshedSolution& t) const {
    const double norm = std::sqrt(combined_inner(t, t, free_));
    if (!(norm > 0.0) || !std::isfinite(norm)) throw RankDeficient("tangent has zero norm");
    t.values() /= norm;
    t.scalars().values /= norm;
}

MeshedSolution Continuation::vector_to_tangent(const MeshedSolution& like, const Vec& x) const {
    MeshedSolution t = zero_like(like);
    const int n = like.dim();
    const int pts = like.mesh().points();
    for (int k = 0; k < pts; ++k) t.values().row(k) = x.segment(k * n, n).transpose();
    for (std::size_t i = 0; i < free_.size(); ++i) t.scalars().values(free_[i]) = x(pts * n + static_cast<int>(i));
    return t;
}

MeshedSolution Continuation::compute_tangent(const MeshedSolution& s, const MeshedSolution& previous,
                                             const MeshedSolution* reference, int* det_sign,
                                             double* log_abs_det) const {
    const SystemSpec spec = make_spec(reference ? reference : &s, &s, &previous, 0.0);
    DiscreteSystem sys(*problem_, spec);
    BlockFactorization fact;
    const Vec r = sys.linearize(s, fact);
    Vec e = Vec::Zero(r.size());
    e(r.size() - 1) = 1.0;
    const Vec x = fact.solve(e);
    if (!x.allFinite()) throw RankDeficient("tangent system is singular");
    MeshedSolution t = vector_to_tangent(s, x);
    normalize(t);
    if (combined_inner(t, previous, free_) < 0.0) {
        t.values() *= -1.0;
        t.scalars().values *= -1.0;
    }
    if (det_sign) *det_sign = fact.det_sign;
    if (log_abs_det) *log_abs_det = fact.log_abs_det;
    return t;
}

ContinuationFrame Continuation::start(const MeshedSolution& s, const MeshedSolution& direction, double step) const {
    ContinuationFrame frame;
    frame.previous = s;
    frame.tangent = compute_tangent(s, direction);
    frame.step = step;
    return frame;
}

MeshedSolution Continuation::predictor(const ContinuationFrame& frame, double ds) const {
    MeshedSolution x = frame.previous;
    x.values() += ds * frame.tangent.values();
    for (int i : free_) x.scalars().values(i) += ds * frame.tangent.scalars().values(i);
    return x;
}

NewtonResult Continuation::step(const ContinuationFrame& frame, double ds) const {
    const MeshedSolution* ref = frame.phase_reference ? &*frame.phase_reference : &frame.previous;
    const SystemSpec spec = make_spec(ref, &frame.previous, &frame.tangent, ds);
    DiscreteSystem sys(*problem_, spec);
    try {
        return newton_chord_solve(sys, predictor(frame, ds), settings_.newton);
    } catch (const NoConvergence& e) {
        throw StepFailure(e.what());
    } catch (const CollisionError& e) {
        throw StepFailure(e.what());
    } catch (const NonFiniteError& e) {
        throw StepFailure(e.what());
    }
}

namespace {

struct Trial {
    MeshedSolution x;
    MeshedSolution t;
    double value = 0.0;
};

}  // namespace

ContinuationResult Continuation::run(ContinuationFrame frame, const RunHooks& hooks) const {
    ContinuationResult result;
    double ds = frame.step == 0.0 ? settings_.ds0 : frame.step;
    double arclength = 0.0;
    const auto remesh = hooks.remesh ? hooks.remesh : [](const MeshedSolution& s) { return adapt_mesh(s); };

    int prev_sign = 0;
    if (!frame.phase_reference && settings_.detect_branch_points) {
        try {
            compute_tangent(frame.previous, frame.tangent, nullptr, &prev_sign);
        } catch (const Error&) {
            prev_sign = 0;
        }
    }
    std::vector<double> prev_values(hooks.monitors.size());
    std::vector<int> zero_counts(hooks.monitors.size(), 0);
    for (std::size_t i = 0; i < hooks.monitors.size(); ++i) {
        prev_values[i] = frame.phase_reference ? 0.0 : hooks.monitors[i].fn(frame.previous, frame.tangent);
    }

    // Move the frame onto a new mesh; the tangent is recomputed there.
    auto rebase = [&](MeshedSolution adapted) {
        MeshedSolution tang = frame.tangent.interpolate_to(adapted.mesh());
        frame.previous = std::move(adapted);
        try {
            frame.tangent = compute_tangent(frame.previous, tang, nullptr, &prev_sign);
        } catch (const Error&) {
            frame.tangent = std::move(tang);
            normalize(frame.tangent);
            prev_sign = 0;
        }
    };

    for (int index = 1; index <= settings_.max_steps; ++index) {
        NewtonResult res;
        bool ok = false;
        int refinements = 0;
        while (!ok) {
            try {
                res = step(frame, ds);
                ok = true;
                if (hooks.resolved && hooks.refine && refinements < 3 && !hooks.resolved(res.solution)) {
                    MeshedSolution finer = hooks.refine(frame.previous);
                    if (finer.mesh().nodes != frame.previous.mesh().nodes) {
                        rebase(std::move(finer));
                        ++refinements;
                        ok = false;
                    }
                }
            } catch (const StepFailure&) {
                try {
                    ds = reduce_step(ds, settings_);
                } catch (const StepSizeUnderflow&) {
                    BranchEvent ev;
                    ev.kind = EventKind::NoConvergenceStop;
                    ev.label = "step-underflow";
                    ev.step = index;
                    ev.location = frame.previous;
                    ev.tangent = frame.tangent;
                    ev.reference = frame.phase_reference ? *frame.phase_reference : frame.previous;
                    result.events.push_back(std::move(ev));
                    result.underflow = true;
                    result.last = frame;
                    return result;
                }
            }
        }
        const MeshedSolution ref_used = frame.phase_reference ? *frame.phase_reference : frame.previous;
        MeshedSolution x = std::move(res.solution);
        int sign = 0;
        MeshedSolution t;
        try {
            t = compute_tangent(x, frame.tangent, &ref_used, &sign);
        } catch (const RankDeficient&) {
            t = frame.tangent;
            sign = 0;
        }
        StepRecord rec;
        rec.index = index;
        rec.ds = ds;
        rec.iterations = res.iterations;
        rec.det_sign = sign;

        // Solve-and-evaluate at a trial step inside the current bracket.
        auto trial = [&](double s, auto&& eval) {
            Trial out;
            NewtonResult r = step(frame, s);
            out.x = std::move(r.solution);
            out.t = compute_tangent(out.x, frame.tangent, &ref_used);
            out.value = eval(out);
            return out;
        };
        // Determinant brackets stop at the step fraction; smooth monitors are driven to (near) zero.
        auto locate = [&](double g0, double g1, auto&& eval, bool smooth) {
            double a = 0.0, b = ds, ga = g0, gb = g1;
            Trial best;
            bool have = false;
            int side = 0;
            const double width = smooth ? 1e-12 : settings_.locate_fraction;
            const double value_tol = smooth ? 1e-12 * std::max(std::abs(g0), std::abs(g1)) : 0.0;
            for (int it = 0; it < 40 && std::abs(b - a) > width * std::abs(ds); ++it) {
                double c = (std::abs(gb - ga) > 0.0) ? b - gb * (b - a) / (gb - ga) : 0.5 * (a + b);
                const double lo = std::min(a, b), hi = std::max(a, b);
                const double margin = 0.05 * (hi - lo);
                if (!(c > lo + margin && c < hi - margin)) c = 0.5 * (a + b);
                Trial tr;
                try {
                    tr = trial(c, eval);
                } catch (const Error&) {
                    break;
                }
                best = tr;
                have = true;
                if ((tr.value < 0.0) == (ga < 0.0)) {
                    a = c;
                    ga = tr.value;
                    if (side == -1) gb *= 0.5;
                    side = -1;
                } else {
                    b = c;
                    gb = tr.value;
                    if (side == 1) ga *= 0.5;
                    side = 1;
                }
                if (std::abs(tr.value) <= value_tol || tr.value == 0.0) break;
            }
            return std::make_pair(have, best);
        };

        std::optional<BranchEvent> stop_event;
        if (settings_.detect_branch_points && prev_sign != 0 && sign != 0 && sign != prev_sign) {
            // Fresh signs with a common bordering row and reference, for a consistent bracket.
            int s0 = 0, s1 = 0;
            double l0 = 0.0, l1 = 0.0;
            try {
                compute_tangent(frame.previous, frame.tangent, &ref_used, &s0, &l0);
                compute_tangent(x, frame.tangent, &ref_used, &s1, &l1);
            } catch (const Error&) {
                s0 = s1 = 0;
            }
            if (s0 != 0 && s1 != 0 && s0 != s1) {
                auto eval = [&](Trial& tr) {
                    int sg = 0;
                    double la = 0.0;
                    compute_tangent(tr.x, frame.tangent, &ref_used, &sg, &la);
                    return sg * std::exp(std::clamp(la - l0, -300.0, 300.0));
                };
                const double g0 = s0 * 1.0;
                const double g1 = s1 * std::exp(std::clamp(l1 - l0, -300.0, 300.0));
                auto [have, best] = locate(g0, g1, eval, false);
                BranchEvent ev;
                ev.kind = EventKind::BranchPoint;
                ev.label = "BP";
                ev.step = index;
                ev.location = have ? best.x : x;
                ev.tangent = have ? best.t : t;
                ev.reference = ref_used;
                ev.monitor_before = g0;
                ev.monitor_after = g1;
                ev.monitor_at = have ? best.value : g1;
                rec.events.push_back("BP");
                result.events.push_back(std::move(ev));
            }
        }
        for (std::size_t i = 0; i < hooks.monitors.size(); ++i) {
            const Monitor& mon = hooks.monitors[i];
            const double value = mon.fn(x, t);
            const double before = prev_values[i];
            prev_values[i] = value;
            if (!(before != 0.0 && (value < 0.0) != (before < 0.0))) continue;
            BranchEvent ev;
            ev.kind = mon.kind;
            ev.label = mon.name;
            ev.step = index;
            ev.location = x;
            ev.tangent = t;
            ev.reference = ref_used;
            ev.monitor_before = before;
            ev.monitor_after = value;
            ev.monitor_at = value;
            if (mon.refine) {
                auto eval = [&](Trial& tr) { return mon.fn(tr.x, tr.t); };
                auto [have, best] = locate(before, value, eval, true);
                if (have) {
                    ev.location = best.x;
                    ev.tangent = best.t;
                    ev.monitor_at = best.value;
                }
            }
            rec.events.push_back(mon.name);
            ++zero_counts[i];
            if (mon.stop_at > 0 && zero_counts[i] >= mon.stop_at && !stop_event) stop_event = ev;
            result.events.push_back(std::move(ev));
        }

        if (stop_event) {
            x = stop_event->location;
            t = stop_event->tangent;
        }
        arclength += std::abs(ds);
        rec.arclength = arclength;
        frame.previous = std::move(x);
        frame.tangent = std::move(t);
        frame.phase_reference.reset();
        prev_sign = sign;
        if (settings_.store_every > 0 && (index % settings_.store_every == 0 || stop_event)) {
            result.solutions.push_back(frame.previous);
        }
        result.records.push_back(rec);
        if (hooks.on_step) hooks.on_step(frame.previous, rec);
        if (stop_event || (hooks.stop && hooks.stop(frame.previous))) {
            result.stopped = true;
            break;
        }

        ds = adapt_step(ds, res.iterations, settings_);
        frame.step = ds;

        if (settings_.adapt_every > 0 && index % settings_.adapt_every == 0) {
            MeshedSolution adapted = remesh(frame.previous);
            if (adapted.mesh().nodes != frame.previous.mesh().nodes) rebase(std::move(adapted));
        }
    }
    frame.step = ds;
    result.last = frame;
    return result;
}

ContinuationFrame Continuation::branch_switch(const BranchEvent& event, double step) const {
    if (event.kind != EventKind::BranchPoint) throw PreconditionError("branch switching needs a branch point event");
    const SystemSpec spec = make_spec(&event.reference, &event.location, &event.tangent, 0.0);
    DiscreteSystem sys(*problem_, spec);
    BlockFactorization fact;
    const Vec r = sys.linearize(event.location, fact);
    std::mt19937_64 rng(20240601);
    std::normal_distribution<double> normal;
    Vec x(r.size());
    for (int i = 0; i < x.size(); ++i) x(i) = normal(rng);
    x.normalize();
    for (int it = 0; it < 6; ++it) {
        x = fact.solve(x);
        if (!x.allFinite()) throw BranchSwitchFailure("inverse iteration produced non-finite vector");
        x.normalize();
    }
    MeshedSolution phi = vector_to_tangent(event.location, x);
    const double before = std::sqrt(combined_inner(phi, phi, free_));
    const double along = combined_inner(phi, event.tangent, free_);
    phi.values() -= along * event.tangent.values();
    phi.scalars().values -= along * event.tangent.scalars().values;
    const double norm = std::sqrt(combined_inner(phi, phi, free_));
    if (!(norm > 1e-6 * before)) throw BranchSwitchFailure("second null direction is degenerate");
    normalize(phi);
    ContinuationFrame frame;
    frame.previous = event.location;
    frame.tangent = std::move(phi);
    frame.step = step;
    frame.phase_reference = event.reference;
    return frame;
}

}  // namespace cr3bp
