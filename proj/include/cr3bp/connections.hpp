#pragma once

// Periodic-orbit-to-torus connections: the coupled (orbit, eigenfunction, manifold orbit) BVP
// continued in energy, plus monitors that classify what the end of the connecting orbit approaches.

#include <cmath>
#include <string>
#include <vector>

#include "cr3bp/continuation.hpp"
#include "cr3bp/floquet.hpp"
#include "cr3bp/manifold.hpp"

namespace cr3bp {

/// u (periodic orbit), v (eigenfunction), r (manifold orbit), 18 components;
/// scalars (T, sigma, lambda, eps, T_r, rho, x_sigma).
class CoupledProblem : public BoundaryValueProblem {
public:
    CoupledProblem(MassRatio mu, Section section, int time_sign = 1, int sign = 1);
    const MassRatio& mass_ratio() const { return mu_; }

    int dim() const override { return 18; }
    int num_boundary() const override { return 20; }
    int num_integral() const override { return 1; }
    std::vector<std::string> parameter_names() const override {
        return {"T", "sigma", "lambda", "eps", "T_r", "rho", "x_sigma"};
    }
    void rhs(double t, const Vec& y, const Vec& par, Eigen::Ref<Vec> f, Mat* dfdy, Mat* dfdp) const override;
    void boundary(const Vec& y0, const Vec& y1, const Vec& par, Eigen::Ref<Vec> r, Mat* d0, Mat* d1,
                  Mat* dp) const override;
    void integrand(const IntegrandPoint& pt, const Vec& par, Eigen::Ref<Vec> g, Mat* dgdy,
                   Mat* dgdp) const override;

    static constexpr int kT = 0;
    static constexpr int kSigma = 1;
    static constexpr int kLambda = 2;
    static constexpr int kEps = 3;
    static constexpr int kTr = 4;
    static constexpr int kRho = 5;
    static constexpr int kSection = 6;
    static const std::vector<int>& continuation_free();

private:
    MassRatio mu_;
    Section section_;
    int time_sign_;
    int sign_;
};

struct ConstraintCensus {
    int odes = 0;
    int constraints = 0;   // boundary plus integral, without the arclength row
    int free = 0;
};
ConstraintCensus census(const CoupledProblem& problem);

struct CoupledConnection {
    MeshedSolution s;
    Section section;
    int time_sign = 1;
    int sign = 1;

    MeshedSolution orbit() const { return s.slice(0, 6); }
    MeshedSolution eigenfunction() const { return s.slice(6, 6); }
    MeshedSolution manifold_orbit() const { return s.slice(12, 6); }
    double scalar(int k) const { return s.scalars().values(k); }
    double energy(const MassRatio& mu) const;
};

/// Merge converged parts onto the manifold orbit's mesh; throws InconsistentParts when
/// r(0) = u(0) + eps v(0) fails by more than 1e-6 or the parts disagree on the base orbit.
CoupledConnection assemble_coupled(const EigenPacket& packet, const ManifoldOrbit& orbit, const MassRatio& mu);

/// Max-norm residual of the discrete coupled system (phase reference = the solution itself).
double coupled_residual(const CoupledConnection& c, const MassRatio& mu);
/// Newton solve at fixed T with (sigma, lambda, eps) free; removes interpolation error after assembly.
CoupledConnection refine_coupled(const CoupledConnection& c, const MassRatio& mu, const NewtonOptions& opts = {});

// ---------------------------------------------------------------------------
// Monitors and classification

struct PlaneCrossing {
    double t = 0.0;          // scaled time in [0, 1]
    double time = 0.0;       // physical time
    StateVector state = StateVector::Zero();
    int direction = 0;       // sign of the crossing coordinate's rate
};

struct SectionTrace {
    std::vector<PlaneCrossing> crossings;
    bool degenerate = false;            // orbit lies in the plane; `samples` holds orbit samples
    std::vector<StateVector> samples;
};

/// Crossings of coordinate `index` through `value`, polished by Newton on the interpolant.
SectionTrace section_trace(const MeshedSolution& r, double time_scale, int index = 2, double value = 0.0,
                           int samples_per_interval = 4);

struct ClassifySettings {
    double planar_threshold = 1e-2;     // max |z| over the final winding
    double rotation_tolerance = 0.01;   // |rho - 1/p| for a p:1 resonance hint
    double region_radius = 0.2;         // distance from a collinear point counting as "near"
    double orbit_distance = 2e-2;       // final windings within this of a reference orbit
    int min_windings = 3;
};

struct WindingStats {
    int windings = 0;                   // upward y = 0 crossings in the final group near a collinear point
    int libration_index = 0;            // 1 or 2; 0 when no group was found
    double return_time = 0.0;           // median time between consecutive crossings of the group
    double rotation_number = 0.0;       // in [0, 1/2], from the turning of crossing points about their centroid
    double final_max_z = 0.0;
    std::vector<double> winding_max_z;  // max |z| per winding of the group
    std::vector<int> winding_z_sign;    // sign of z at the largest |z| per winding
    double base_distance = INFINITY;    // final windings to the base orbit
    double mirror_distance = INFINITY;  // final windings to its z-reflection
    int base_z_sign = 0;
};

struct ConnectionRecord {
    int step = 0;
    double energy = 0.0;
    double lambda = 0.0;
    double eps = 0.0;
    double period = 0.0;               // winding return time of the approached object
    double base_period = 0.0;
    double integration_time = 0.0;
    WindingStats stats;
    std::vector<std::string> hints;
    bool insufficient_windings = false;

    bool has_hint(const std::string& h) const;
};

/// Monitors on the end of r and the hints they back. Fewer than `min_windings` windings
/// gives a record with empty hints and `insufficient_windings` set.
ConnectionRecord classify_connection(const CoupledConnection& c, const MassRatio& mu,
                                     const ClassifySettings& settings = {});
/// Same monitors for a manifold orbit r with base orbit u (both 6-dimensional, scalars ignored).
WindingStats winding_stats(const MeshedSolution& r, double integration_time, const MeshedSolution& base,
                           const MassRatio& mu, const ClassifySettings& settings = {});
std::vector<std::string> hints_from(const WindingStats& stats, const ClassifySettings& settings);

/// Revolutions of r alongside the periodic orbit `ref` while within `radius` (longest stretch).
double revolutions_near(const MeshedSolution& r, const MeshedSolution& ref, double radius, int samples = 4000);

// ---------------------------------------------------------------------------
// Continuation

struct ConnectionSettings {
    ContinuationSettings continuation = default_continuation();
    double lambda_min = 1e-2;          // unit-circle stop
    double energy_min = -1.7;
    double energy_max = -1.45;
    double closure_tol = 1e-6;
    double closure_min_arclength = 1.0;
    int store_every = 10;
    bool classify_every_step = true;
    ClassifySettings classify{};
    ManifoldSettings mesh{};           // spread target and interval cap for remeshing

    static ContinuationSettings default_continuation() {
        ContinuationSettings c;
        c.ds0 = 1e-2;
        c.ds_max = 0.2;
        c.max_steps = 400;
        c.adapt_every = 10;
        c.detect_branch_points = false;
        return c;
    }
};

struct ConnectionFamily {
    std::vector<ConnectionRecord> records;
    std::vector<CoupledConnection> stored;
    std::vector<BranchEvent> events;
    std::string termination;           // "step-underflow", "unit-circle", "loop-closed", "energy-bound", "step-limit"
    double closure_metric = INFINITY;
    int folds = 0;
    CoupledConnection last;
};

/// Continue in (T, sigma, lambda, eps) with T_r, rho and x_sigma fixed. `direction` orients the initial tangent
/// by the sign of dT.
ConnectionFamily continue_connection(const CoupledConnection& start, const MassRatio& mu,
                                     const ConnectionSettings& settings = {}, int direction = 1);

/// Distance used for loop closure: max of value, T, sigma, lambda differences and the relative eps difference,
/// with `a` interpolated onto the mesh of `b`.
double closure_distance(const MeshedSolution& a, const MeshedSolution& b);

}  // namespace cr3bp
