#include "cr3bp/connections.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cr3bp/errors.hpp"

namespace cr3bp {

namespace {

StateVector head6(const Vec& y, int offset = 0) { return StateVector(y.segment<6>(offset)); }

ScalarSet coupled_scalars() {
    return ScalarSet(std::vector<std::string>{"T", "sigma", "lambda", "eps", "T_r", "rho", "x_sigma"});
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<Position> sample_positions(const MeshedSolution& s, int count, bool mirror = false) {
    std::vector<Position> out;
    out.reserve(count);
    for (int k = 0; k < count; ++k) {
        Position p = s.evaluate(static_cast<double>(k) / count).head<3>();
        if (mirror) p(2) = -p(2);
        out.push_back(p);
    }
    return out;
}

double nearest(const Position& p, const std::vector<Position>& cloud, int* index = nullptr) {
    double best = INFINITY;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const double d = (p - cloud[i]).norm();
        if (d < best) {
            best = d;
            if (index) *index = static_cast<int>(i);
        }
    }
    return best;
}

MeshedSolution remesh_coupled(const MeshedSolution& s, const MassRatio& mu, const ManifoldSettings& settings) {
    const int N = s.mesh().intervals();
    if (energy_spread(s.slice(12, 6), mu) > settings.spread_target && N < settings.max_intervals) {
        return doubled_mesh(s, settings.max_intervals);
    }
    return adapt_mesh(s);
}

}  // namespace

// ---------------------------------------------------------------------------

CoupledProblem::CoupledProblem(MassRatio mu, Section section, int time_sign, int sign)
    : mu_(mu), section_(section), time_sign_(time_sign), sign_(sign) {
    section_.validate();
    if (time_sign != 1 && time_sign != -1) throw PreconditionError("time sign must be +1 or -1");
    if (sign != 1 && sign != -1) throw PreconditionError("boundary sign must be +1 or -1");
}

const std::vector<int>& CoupledProblem::continuation_free() {
    static const std::vector<int> free = {kT, kSigma, kLambda, kEps};
    return free;
}

void CoupledProblem::rhs(double, const Vec& y, const Vec& par, Eigen::Ref<Vec> f, Mat* dfdy, Mat* dfdp) const {
    const StateVector u = head6(y), v = head6(y, 6), r = head6(y, 12);
    const double T = par(kT), sigma = par(kSigma), lambda = par(kLambda), scale = time_sign_ * par(kTr);
    const StateVector fu = vector_field(u, 0.0, mu_);
    const StateVector fr = vector_field(r, 0.0, mu_);
    StateVector d = StateVector::Zero();
    d.tail<3>() = u.tail<3>();
    const StateMatrix J = jacobian(u, mu_);
    const StateVector Jv = J * v;
    f.head<6>() = T * fu + sigma * d;
    f.segment<6>(6) = T * Jv - lambda * v;
    f.tail<6>() = scale * fr;
    if (dfdy) {
        dfdy->setZero();
        dfdy->block<6, 6>(0, 0) = T * J;
        dfdy->diagonal().segment<3>(3).array() += sigma;
        dfdy->block<6, 6>(6, 0) = T * jacobian_derivative(u, v, mu_);
        dfdy->block<6, 6>(6, 6) = T * J - lambda * StateMatrix::Identity();
        dfdy->block<6, 6>(12, 12) = scale * jacobian(r, mu_);
    }
    if (dfdp) {
        dfdp->setZero();
        dfdp->col(kT).head<6>() = fu;
        dfdp->col(kT).segment<6>(6) = Jv;
        dfdp->col(kSigma).head<6>() = d;
        dfdp->col(kLambda).segment<6>(6) = -v;
        dfdp->col(kTr).tail<6>() = time_sign_ * fr;
    }
}

void CoupledProblem::boundary(const Vec& y0, const Vec& y1, const Vec& par, Eigen::Ref<Vec> r, Mat* d0, Mat* d1,
                              Mat* dp) const {
    const double eps = par(kEps);
    r.head<6>() = y1.head<6>() - y0.head<6>();
    r.segment<6>(6) = y1.segment<6>(6) - sign_ * y0.segment<6>(6);
    r(12) = y0.segment<6>(6).squaredNorm() - par(kRho);
    r.segment<6>(13) = y0.segment<6>(12) - y0.head<6>() - eps * y0.segment<6>(6);
    r(19) = y1(12 + section_.index) - par(kSection);
    if (d0) {
        d0->setZero();
        d0->block(0, 0, 6, 6) = -Mat::Identity(6, 6);
        d0->block(6, 6, 6, 6) = -sign_ * Mat::Identity(6, 6);
        d0->block(12, 6, 1, 6) = 2.0 * y0.segment<6>(6).transpose();
        d0->block(13, 0, 6, 6) = -Mat::Identity(6, 6);
        d0->block(13, 6, 6, 6) = -eps * Mat::Identity(6, 6);
        d0->block(13, 12, 6, 6) = Mat::Identity(6, 6);
    }
    if (d1) {
        d1->setZero();
        d1->block(0, 0, 12, 12).setIdentity();
        (*d1)(19, 12 + section_.index) = 1.0;
    }
    if (dp) {
        dp->setZero();
        (*dp)(12, kRho) = -1.0;
        dp->col(kEps).segment<6>(13) = -y0.segment<6>(6);
        (*dp)(19, kSection) = -1.0;
    }
}

void CoupledProblem::integrand(const IntegrandPoint& pt, const Vec&, Eigen::Ref<Vec> g, Mat* dgdy, Mat* dgdp) const {
    g(0) = pt.y.head<6>().dot(pt.reference_dot.head<6>());
    if (dgdy) {
        dgdy->setZero();
        dgdy->block(0, 0, 1, 6) = pt.reference_dot.head<6>().transpose();
    }
    if (dgdp) dgdp->setZero();
}

ConstraintCensus census(const CoupledProblem& problem) {
    return {problem.dim(), problem.num_boundary() + problem.num_integral(),
            static_cast<int>(CoupledProblem::continuation_free().size())};
}

double CoupledConnection::energy(const MassRatio& mu) const { return cr3bp::energy(head6(s.at_start()), mu); }

CoupledConnection assemble_coupled(const EigenPacket& packet, const ManifoldOrbit& orbit, const MassRatio& mu) {
    (void)mu;
    const Vec p0 = packet.solution.at_start();
    const double base_gap = std::max((head6(p0) - orbit.u0).cwiseAbs().maxCoeff(),
                                     (head6(p0, 6) - orbit.v0).cwiseAbs().maxCoeff());
    if (base_gap > 1e-6) throw InconsistentParts("manifold orbit was started from a different packet");
    const double start_gap = (head6(orbit.r.at_start()) - head6(p0) - orbit.eps() * head6(p0, 6)).cwiseAbs().maxCoeff();
    if (start_gap > 1e-6) throw InconsistentParts("r(0) = u(0) + eps v(0) fails by " + std::to_string(start_gap));
    if (orbit.section_defect() > 1e-6) throw InconsistentParts("manifold orbit does not end on its section");

    const Mesh& mesh = orbit.r.mesh();
    const MeshedSolution uv = packet.solution.interpolate_to(mesh);
    ScalarSet sc = coupled_scalars();
    sc.values(CoupledProblem::kT) = packet.period();
    sc.values(CoupledProblem::kSigma) = packet.sigma();
    sc.values(CoupledProblem::kLambda) = packet.lambda();
    sc.values(CoupledProblem::kEps) = orbit.eps();
    sc.values(CoupledProblem::kTr) = orbit.integration_time();
    sc.values(CoupledProblem::kRho) = packet.rho();
    sc.values(CoupledProblem::kSection) = orbit.section.value;
    CoupledConnection c;
    c.s = MeshedSolution(mesh, 18, sc);
    c.s.values().leftCols(12) = uv.values();
    c.s.values().rightCols(6) = orbit.r.values();
    c.section = orbit.section;
    c.time_sign = orbit.time_sign;
    c.sign = packet.sign;
    return c;
}

double coupled_residual(const CoupledConnection& c, const MassRatio& mu) {
    const CoupledProblem problem(mu, c.section, c.time_sign, c.sign);
    SystemSpec spec;
    spec.free = {CoupledProblem::kSigma, CoupledProblem::kLambda, CoupledProblem::kEps};
    spec.reference = &c.s;
    return DiscreteSystem(problem, spec).residual(c.s).cwiseAbs().maxCoeff();
}

CoupledConnection refine_coupled(const CoupledConnection& c, const MassRatio& mu, const NewtonOptions& opts) {
    const CoupledProblem problem(mu, c.section, c.time_sign, c.sign);
    SystemSpec spec;
    spec.free = {CoupledProblem::kSigma, CoupledProblem::kLambda, CoupledProblem::kEps};
    spec.reference = &c.s;
    CoupledConnection out = c;
    out.s = newton_chord_solve(DiscreteSystem(problem, spec), c.s, opts).solution;
    return out;
}

// ---------------------------------------------------------------------------

SectionTrace section_trace(const MeshedSolution& r, double time_scale, int index, double value,
                           int samples_per_interval) {
    if (index < 0 || index >= r.dim()) throw OutOfRange("section coordinate out of range");
    SectionTrace out;
    const Mesh& mesh = r.mesh();
    std::vector<double> ts;
    for (int j = 0; j < mesh.intervals(); ++j) {
        for (int q = 0; q < samples_per_interval; ++q) {
            ts.push_back(mesh.nodes[j] + mesh.width(j) * q / samples_per_interval);
        }
    }
    ts.push_back(1.0);
    std::vector<double> g(ts.size());
    double scale = 0.0, gmax = 0.0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        const Vec y = r.evaluate(ts[k]);
        g[k] = y(index) - value;
        gmax = std::max(gmax, std::abs(g[k]));
        scale = std::max(scale, y.head(std::min(3, r.dim())).cwiseAbs().maxCoeff());
    }
    if (gmax < 1e-10 * std::max(1.0, scale)) {
        out.degenerate = true;
        for (double t : ts) out.samples.push_back(head6(r.evaluate(t)));
        return out;
    }
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        if (g[k] == 0.0 && k > 0) continue;
        if (!((g[k] < 0.0) != (g[k + 1] < 0.0)) && g[k] != 0.0) continue;
        double a = ts[k], b = ts[k + 1], ga = g[k];
        double t = a - ga * (b - a) / (g[k + 1] - ga);
        for (int it = 0; it < 30; ++it) {
            const double gt = r.evaluate(t)(index) - value;
            if (std::abs(gt) < 1e-13) break;
            if ((gt < 0.0) == (ga < 0.0)) {
                a = t;
                ga = gt;
            } else {
                b = t;
            }
            const double dg = r.derivative(t)(index);
            double next = dg != 0.0 ? t - gt / dg : 0.5 * (a + b);
            if (!(next > std::min(a, b) && next < std::max(a, b))) next = 0.5 * (a + b);
            t = next;
        }
        PlaneCrossing c;
        c.t = t;
        c.time = time_scale * t;
        c.state = head6(r.evaluate(t));
        const double rate = r.derivative(t)(index) * (time_scale < 0.0 ? -1.0 : 1.0);
        c.direction = rate > 0.0 ? 1 : (rate < 0.0 ? -1 : 0);
        out.crossings.push_back(c);
    }
    return out;
}

WindingStats winding_stats(const MeshedSolution& r, double integration_time, const MeshedSolution& base,
                           const MassRatio& mu, const ClassifySettings& settings) {
    WindingStats st;
    const SectionTrace trace = section_trace(r, integration_time, 1, 0.0);
    const auto lp = libration_points(mu);
    const double xl[2] = {lp[0].state(0), lp[1].state(0)};

    // Upward crossings labelled by the collinear point they pass near.
    std::vector<PlaneCrossing> up;
    std::vector<int> label;
    for (const auto& c : trace.crossings) {
        if (c.state(4) <= 0.0) continue;
        int l = 0;
        for (int i = 0; i < 2; ++i) {
            if (std::abs(c.state(0) - xl[i]) < settings.region_radius) l = i + 1;
        }
        up.push_back(c);
        label.push_back(l);
    }
    int last = static_cast<int>(up.size()) - 1;
    while (last >= 0 && label[last] == 0) --last;
    if (last < 0) return st;
    int first = last;
    while (first > 0 && label[first - 1] == label[last]) --first;
    std::vector<PlaneCrossing> group(up.begin() + first, up.begin() + last + 1);
    st.libration_index = label[last];
    st.windings = static_cast<int>(group.size());

    std::vector<double> gaps;
    for (std::size_t i = 1; i < group.size(); ++i) gaps.push_back(std::abs(group[i].time - group[i - 1].time));
    st.return_time = median(gaps);

    if (group.size() >= 3) {
        // Turning of the crossing points per return, measured about the fixed point of the return map when the
        // base orbit (or its z-mirror) supplies one inside the cloud, otherwise about the centroid.
        auto section_coords = [](const StateVector& s) {
            Eigen::Vector4d c;
            c << s(0), s(2), s(3), s(5);
            return c;
        };
        Mat P(group.size(), 4);
        for (std::size_t i = 0; i < group.size(); ++i) P.row(i) = section_coords(group[i].state).transpose();
        Eigen::Vector4d centre = P.colwise().mean().transpose();
        double radius = 0.0;
        for (int i = 0; i < P.rows(); ++i) radius = std::max(radius, (P.row(i).transpose() - centre).norm());
        const double period = base.scalars().size() > 0 ? base.scalars().values(0) : 1.0;
        double best = radius;
        for (const auto& c : section_trace(base, period, 1, 0.0).crossings) {
            if (c.state(4) <= 0.0 || std::abs(c.state(0) - xl[st.libration_index - 1]) > settings.region_radius) continue;
            for (const StateVector& s : {c.state, z_reflection(c.state)}) {
                const Eigen::Vector4d q = section_coords(s);
                if ((q - centre).norm() < best) {
                    best = (q - centre).norm();
                    centre = q;
                }
            }
        }
        P.rowwise() -= centre.transpose();
        Eigen::SelfAdjointEigenSolver<Mat> es(P.transpose() * P);
        const Mat Q = P * es.eigenvectors().rightCols(2);
        double sum = 0.0;
        for (int i = 1; i < Q.rows(); ++i) {
            const double d = std::atan2(Q(i, 0), Q(i, 1)) - std::atan2(Q(i - 1, 0), Q(i - 1, 1));
            sum += std::abs(std::remainder(d, 2.0 * M_PI));
        }
        st.rotation_number = sum / (Q.rows() - 1) / (2.0 * M_PI);
    }

    // Per-winding z extent between consecutive crossings; the last winding runs to the end when alone.
    auto zscan = [&](double ta, double tb, double& zmax, int& zsign, std::vector<Position>* pts) {
        zmax = 0.0;
        zsign = 0;
        const int n = 200;
        for (int k = 0; k <= n; ++k) {
            const Vec y = r.evaluate(ta + (tb - ta) * k / n);
            if (std::abs(y(2)) > zmax) {
                zmax = std::abs(y(2));
                zsign = y(2) > 0.0 ? 1 : -1;
            }
            if (pts) pts->push_back(y.head<3>());
        }
    };
    std::vector<Position> tail_points;
    const int tail_start = std::max(0, static_cast<int>(group.size()) - 4);
    for (std::size_t i = 1; i < group.size(); ++i) {
        double zmax;
        int zsign;
        zscan(group[i - 1].t, group[i].t, zmax, zsign,
              static_cast<int>(i) > tail_start ? &tail_points : nullptr);
        st.winding_max_z.push_back(zmax);
        st.winding_z_sign.push_back(zmax < settings.planar_threshold ? 0 : zsign);
    }
    if (group.size() == 1) {
        double zmax;
        int zsign;
        zscan(group[0].t, 1.0, zmax, zsign, &tail_points);
        st.winding_max_z.push_back(zmax);
        st.winding_z_sign.push_back(zsign);
    }
    st.final_max_z = st.winding_max_z.back();

    const auto base_pts = sample_positions(base, 1000);
    const auto mirror_pts = sample_positions(base, 1000, true);
    st.base_distance = 0.0;
    st.mirror_distance = 0.0;
    for (const auto& p : tail_points) {
        st.base_distance = std::max(st.base_distance, nearest(p, base_pts));
        st.mirror_distance = std::max(st.mirror_distance, nearest(p, mirror_pts));
    }
    double bz = 0.0;
    for (const auto& p : base_pts) {
        if (std::abs(p(2)) > std::abs(bz)) bz = p(2);
    }
    st.base_z_sign = std::abs(bz) < settings.planar_threshold ? 0 : (bz > 0.0 ? 1 : -1);
    return st;
}

std::vector<std::string> hints_from(const WindingStats& st, const ClassifySettings& settings) {
    std::vector<std::string> h;
    if (st.windings < settings.min_windings) return h;
    const bool planar = st.final_max_z < settings.planar_threshold;
    if (planar) h.push_back("planar-L" + std::to_string(st.libration_index));
    if (st.base_distance < settings.orbit_distance) h.push_back("near-homoclinic");
    if (st.base_z_sign != 0 && st.mirror_distance < settings.orbit_distance) {
        h.push_back(st.base_z_sign > 0 ? "southern-counterpart" : "northern-counterpart");
    }
    for (int p = 2; p <= 12; ++p) {
        if (std::abs(st.rotation_number - 1.0 / p) < settings.rotation_tolerance) {
            h.push_back("resonant-" + std::to_string(p) + ":1");
            break;
        }
    }
    int flips = 0, signed_windings = 0;
    for (std::size_t i = 0; i < st.winding_z_sign.size(); ++i) {
        if (st.winding_z_sign[i] != 0) ++signed_windings;
        if (i > 0 && st.winding_z_sign[i] * st.winding_z_sign[i - 1] < 0) ++flips;
    }
    if (!planar && signed_windings >= 2 && flips >= signed_windings - 1) h.push_back("north-south-alternation");
    if (!planar && st.base_distance >= settings.orbit_distance && st.mirror_distance >= settings.orbit_distance) {
        h.push_back("quasi-torus");
    }
    return h;
}

bool ConnectionRecord::has_hint(const std::string& name) const {
    return std::find(hints.begin(), hints.end(), name) != hints.end();
}

ConnectionRecord classify_connection(const CoupledConnection& c, const MassRatio& mu,
                                     const ClassifySettings& settings) {
    ConnectionRecord rec;
    rec.energy = c.energy(mu);
    rec.lambda = c.scalar(CoupledProblem::kLambda);
    rec.eps = c.scalar(CoupledProblem::kEps);
    rec.integration_time = c.scalar(CoupledProblem::kTr);
    rec.base_period = c.scalar(CoupledProblem::kT);
    rec.stats = winding_stats(c.manifold_orbit(), c.time_sign * rec.integration_time, c.orbit(), mu, settings);
    rec.period = rec.stats.return_time;
    rec.insufficient_windings = rec.stats.windings < settings.min_windings;
    rec.hints = hints_from(rec.stats, settings);
    return rec;
}

double revolutions_near(const MeshedSolution& r, const MeshedSolution& ref, double radius, int samples) {
    const int nref = 1000;
    const auto ref_pts = sample_positions(ref, nref);
    double best = 0.0, run = 0.0;
    int prev = -1;
    for (int k = 0; k <= samples; ++k) {
        const Position p = r.evaluate(static_cast<double>(k) / samples).head<3>();
        int idx = 0;
        const double d = nearest(p, ref_pts, &idx);
        if (d > radius) {
            prev = -1;
            run = 0.0;
            continue;
        }
        if (prev >= 0) {
            double step = static_cast<double>(idx - prev) / nref;
            step -= std::round(step);
            run += step;
            best = std::max(best, std::abs(run));
        }
        prev = idx;
    }
    return best;
}

// ---------------------------------------------------------------------------

double closure_distance(const MeshedSolution& a, const MeshedSolution& b) {
    const MeshedSolution ai = a.mesh().nodes == b.mesh().nodes ? a : a.interpolate_to(b.mesh());
    double d = (ai.values() - b.values()).cwiseAbs().maxCoeff();
    for (int k : {CoupledProblem::kT, CoupledProblem::kSigma, CoupledProblem::kLambda}) {
        d = std::max(d, std::abs(ai.scalars().values(k) - b.scalars().values(k)));
    }
    const double eb = b.scalars().values(CoupledProblem::kEps);
    const double ea = ai.scalars().values(CoupledProblem::kEps);
    return std::max(d, std::abs(ea - eb) / std::max(std::abs(eb), 1e-300));
}

ConnectionFamily continue_connection(const CoupledConnection& start, const MassRatio& mu,
                                     const ConnectionSettings& settings, int direction) {
    const CoupledProblem problem(mu, start.section, start.time_sign, start.sign);
    const std::vector<int>& free = CoupledProblem::continuation_free();
    Continuation cont(problem, free, settings.continuation);
    const CoupledConnection refined = refine_coupled(start, mu, settings.continuation.newton);
    MeshedSolution seed = cont.zero_like(refined.s);
    seed.scalars().values(CoupledProblem::kT) = direction >= 0 ? 1.0 : -1.0;
    ContinuationFrame frame = cont.start(refined.s, seed, settings.continuation.ds0);
    const MeshedSolution x0 = frame.previous;
    const MeshedSolution t0 = frame.tangent;

    ConnectionFamily out;
    auto make = [&](const MeshedSolution& x) {
        CoupledConnection c = start;
        c.s = x;
        return c;
    };
    auto e_of = [mu](const MeshedSolution& x) { return energy(head6(x.at_start()), mu); };

    RunHooks hooks;
    hooks.monitors.push_back(Monitor{"fold", EventKind::Fold,
                                     [mu](const MeshedSolution& x, const MeshedSolution& t) {
                                         return energy_gradient(head6(x.at_start()), mu).dot(head6(t.at_start()));
                                     },
                                     true, 0});
    hooks.remesh = [&](const MeshedSolution& x) { return remesh_coupled(x, mu, settings.mesh); };
    hooks.resolved = [&](const MeshedSolution& x) {
        return energy_spread(x.slice(12, 6), mu) <= settings.mesh.spread_limit;
    };
    hooks.refine = [&](const MeshedSolution& x) { return doubled_mesh(x, settings.mesh.max_intervals); };

    bool closed = false, unit_circle = false, out_of_range = false;
    double prev_g = 0.0;
    hooks.on_step = [&](const MeshedSolution& x, const StepRecord& rec) {
        if (settings.classify_every_step || (settings.store_every > 0 && rec.index % settings.store_every == 0)) {
            ConnectionRecord r;
            try {
                r = classify_connection(make(x), mu, settings.classify);
            } catch (const Error&) {
                r.energy = e_of(x);
                r.lambda = x.scalars().values(CoupledProblem::kLambda);
                r.eps = x.scalars().values(CoupledProblem::kEps);
                r.base_period = x.scalars().values(CoupledProblem::kT);
                r.integration_time = x.scalars().values(CoupledProblem::kTr);
                r.insufficient_windings = true;
            }
            r.step = rec.index;
            out.records.push_back(std::move(r));
        }
        if (settings.store_every > 0 && rec.index % settings.store_every == 0) out.stored.push_back(make(x));

        // Loop closure: the family recrosses the hyperplane through the start, normal to the start tangent.
        const MeshedSolution xi = x.mesh().nodes == x0.mesh().nodes ? x : x.interpolate_to(x0.mesh());
        MeshedSolution diff = xi;
        diff.values() -= x0.values();
        diff.scalars().values -= x0.scalars().values;
        const double g = combined_inner(diff, t0, free);
        if (rec.arclength > settings.closure_min_arclength && prev_g < 0.0 && g >= 0.0) {
            SystemSpec spec;
            spec.free = free;
            spec.reference = &x0;
            spec.arclength = ArclengthRow{&x0, &t0, 0.0};
            try {
                DiscreteSystem sys(problem, spec);
                const NewtonResult nr = newton_chord_solve(sys, xi, settings.continuation.newton);
                out.closure_metric = std::min(out.closure_metric, closure_distance(nr.solution, x0));
                closed = out.closure_metric < settings.closure_tol;
            } catch (const Error&) {
            }
        }
        prev_g = g;
    };
    hooks.stop = [&](const MeshedSolution& x) {
        const double e = e_of(x);
        unit_circle = x.scalars().values(CoupledProblem::kLambda) < settings.lambda_min;
        out_of_range = e < settings.energy_min || e > settings.energy_max;
        return closed || unit_circle || out_of_range;
    };

    ContinuationResult res = cont.run(frame, hooks);
    for (const auto& ev : res.events) {
        if (ev.kind == EventKind::Fold) ++out.folds;
    }
    out.events = std::move(res.events);
    out.last = make(res.last.previous);
    if (res.underflow) out.termination = "step-underflow";
    else if (closed) out.termination = "loop-closed";
    else if (unit_circle) out.termination = "unit-circle";
    else if (out_of_range) out.termination = "energy-bound";
    else out.termination = "step-limit";
    return out;
}

}  // namespace cr3bp
