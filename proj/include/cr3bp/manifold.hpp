#pragma once

// Orbits in the two-dimensional unstable manifold of a periodic orbit:
// growth in integration time from r(0) = u(0) + eps v(0), then sweeps with r(1) pinned to a section.

#include <string>
#include <vector>

#include "cr3bp/continuation.hpp"
#include "cr3bp/floquet.hpp"
#include "cr3bp/integrate.hpp"

namespace cr3bp {

struct Section {
    int index = 0;        // state coordinate fixed on the section
    double value = 0.0;
    int crossing = 1;     // which intersection terminates the orbit

    void validate() const;
};

/// r' = s T_r fhat(r), r(0) = u0 + eps v0 and, when pinned, r(1)[idx] = x_sigma. Scalars (T_r, eps, x_sigma).
/// s = +1 for unstable manifolds, -1 for stable ones.
class ManifoldProblem : public BoundaryValueProblem {
public:
    ManifoldProblem(MassRatio mu, StateVector u0, StateVector v0, Section section, bool pinned, int time_sign = 1);

    int dim() const override { return 6; }
    int num_boundary() const override { return pinned_ ? 7 : 6; }
    std::vector<std::string> parameter_names() const override { return {"T_r", "eps", "x_sigma"}; }
    void rhs(double t, const Vec& y, const Vec& par, Eigen::Ref<Vec> f, Mat* dfdy, Mat* dfdp) const override;
    void boundary(const Vec& y0, const Vec& y1, const Vec& par, Eigen::Ref<Vec> r, Mat* d0, Mat* d1,
                  Mat* dp) const override;

    static constexpr int kTr = 0;
    static constexpr int kEps = 1;
    static constexpr int kSection = 2;

private:
    MassRatio mu_;
    StateVector u0_, v0_;
    Section section_;
    bool pinned_;
    int time_sign_;
};

struct ManifoldOrbit {
    MeshedSolution r;          // scalars (T_r, eps, x_sigma)
    Section section;
    StateVector u0 = StateVector::Zero();
    StateVector v0 = StateVector::Zero();
    double lambda = 0.0;
    double base_energy = 0.0;
    int time_sign = 1;

    double eps() const { return r.scalars().values(ManifoldProblem::kEps); }
    double integration_time() const { return r.scalars().values(ManifoldProblem::kTr); }
    /// Max-norm defect of r(0) = u0 + eps v0.
    double start_defect() const;
    double section_defect() const;
};

struct FundamentalDomain {
    double eps1 = 0.0;
    double eps2 = 0.0;
};

/// (eps1, e^lambda eps1); throws NonPositiveExponent for lambda <= 0.
FundamentalDomain fundamental_domain(double eps1, double lambda);

struct ManifoldSettings {
    ContinuationSettings continuation = default_continuation();
    int initial_intervals = 200;
    int max_intervals = 1500;
    int degree = 4;
    double max_time = 50.0;          // growth gives up, sweeps call it an obstacle when eps stalls
    double eps_stall = 1e-10;
    double spread_target = 1e-8;     // energy spread that triggers doubling of the mesh
    double spread_limit = 5e-8;      // a step beyond this is redone on a doubled mesh
    int time_sign = 1;

    static ContinuationSettings default_continuation() {
        ContinuationSettings c;
        c.ds0 = 1e-2;
        c.ds_max = 0.5;
        c.max_steps = 2000;
        c.adapt_every = 10;
        c.detect_branch_points = false;
        return c;
    }
};

/// Max minus min of the energy over `samples` equally spaced times.
double energy_spread(const MeshedSolution& r, const MassRatio& mu, int samples = 64);

/// Equidistributed mesh with twice the intervals (up to the cap); unchanged at the cap.
MeshedSolution doubled_mesh(const MeshedSolution& r, int max_intervals);

/// Remesh: equidistribute, doubling the interval count (up to the cap) while the energy spread exceeds the target.
MeshedSolution refine_manifold_mesh(const MeshedSolution& r, const MassRatio& mu, const ManifoldSettings& settings);

/// Continue in T_r from the constant solution at T_r = 0 until r(1) meets the section for the k-th time,
/// then pin r(1) to the section. Throws SectionNotReached or CollisionError.
ManifoldOrbit grow_orbit(const EigenPacket& base, const MassRatio& mu, double eps1, const Section& section,
                         const ManifoldSettings& settings = {});

enum class SweepTermination { DomainCovered, Obstacle, StepLimit, StopCriterion };
const char* termination_name(SweepTermination t);

struct SweepResult {
    std::vector<ManifoldOrbit> orbits;
    SweepTermination termination = SweepTermination::StepLimit;
    std::string obstacle_reason;     // "step-underflow" or "time-cap" for obstacles
    std::vector<StepRecord> records;
};

/// Pseudo-arclength sweep in (eps, T_r) with r(1) on the section, from start toward domain.eps2.
SweepResult sweep_manifold(const ManifoldOrbit& start, const MassRatio& mu, const FundamentalDomain& domain,
                           const ManifoldSettings& settings = {},
                           std::function<bool(const ManifoldOrbit&)> stop = {});

/// Least-squares fit T_r = a + b log|eps - eps*|, eps* the final eps, on `count` orbits spread evenly in
/// log|eps - eps*|; orbits closer to eps* than floor * |eps*| are noise and skipped.
struct ObstacleFit {
    double slope = 0.0;
    double r_squared = 0.0;
    int points = 0;
};
ObstacleFit obstacle_log_fit(const std::vector<ManifoldOrbit>& orbits, int count = 10, double floor = 1e-8);

struct ShootingComparison {
    std::vector<double> times;
    std::vector<double> defects;     // max-norm |IVP - BVP| at each time
    double horizon = 0.0;            // first time the defect exceeds the threshold (T_r if never)
    double max_defect_quarter = 0.0; // max defect over [0, T_r/4]
};

/// Integrate the initial value problem from r(0) and compare with the BVP orbit at `samples` times.
ShootingComparison shooting_compare(const ManifoldOrbit& orbit, const MassRatio& mu, int samples = 2000,
                                    double threshold = 1e-6, const IntegrationOptions& opts = {});

}  // namespace cr3bp
