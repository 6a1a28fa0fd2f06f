#pragma once

// Periodic orbits: the periodic BVP with unfolding term, starts at libration
// points, and family continuation.

#include <optional>
#include <string>
#include <vector>

#include "cr3bp/collocation.hpp"
#include "cr3bp/continuation.hpp"
#include "cr3bp/dynamics.hpp"

namespace cr3bp {

/// u' = T fhat(u) + sigma d(u), u(1) = u(0), int <u, u0'> = 0; scalars (T, sigma).
class PeriodicOrbitProblem : public BoundaryValueProblem {
public:
    explicit PeriodicOrbitProblem(MassRatio mu) : mu_(mu) {}
    const MassRatio& mass_ratio() const { return mu_; }

    int dim() const override { return 6; }
    int num_boundary() const override { return 6; }
    int num_integral() const override { return 1; }
    std::vector<std::string> parameter_names() const override { return {"T", "sigma"}; }
    void rhs(double t, const Vec& y, const Vec& par, Eigen::Ref<Vec> f, Mat* dfdy, Mat* dfdp) const override;
    void boundary(const Vec& y0, const Vec& y1, const Vec& par, Eigen::Ref<Vec> r, Mat* d0, Mat* d1,
                  Mat* dp) const override;
    void integrand(const IntegrandPoint& pt, const Vec& par, Eigen::Ref<Vec> g, Mat* dgdy,
                   Mat* dgdp) const override;

    static constexpr int kT = 0;
    static constexpr int kSigma = 1;

private:
    MassRatio mu_;
};

struct PeriodicOrbit {
    MeshedSolution solution;
    std::string family;
    double period = 0.0;
    double sigma = 0.0;
    double energy = 0.0;
    double energy_spread = 0.0;        // max - min over 16 samples
    double periodicity_defect = 0.0;
    CVec multipliers;                  // sorted by decreasing modulus
    bool ill_conditioned = false;
};

/// Energy, multipliers and integrity measures of a converged orbit.
PeriodicOrbit describe_orbit(const PeriodicOrbitProblem& problem, const MeshedSolution& s, const std::string& family);

/// Nontrivial Floquet exponents log(mu) of the multipliers, trivial pair removed (closest to 1).
std::vector<std::complex<double>> nontrivial_exponents(const CVec& multipliers);

/// Modulus of |mu| off the unit circle for the two multipliers closest to 1.
double trivial_multiplier_defect(const CVec& multipliers);
/// Largest relative mismatch of the (a, 1/a) pairing.
double reciprocity_defect(const CVec& multipliers);

enum class EigenPair { Planar, Vertical };

/// Frame at the equilibrium with the small-amplitude harmonic predictor as direction and phase reference.
ContinuationFrame start_from_equilibrium(const Continuation& cont, const LibrationPoint& point, EigenPair pair,
                                         const Mesh& mesh, double amplitude = 1e-4);

struct FamilySettings {
    ContinuationSettings continuation{};
    int mesh_intervals = 100;
    int degree = 4;
    double energy_min = -2.0;
    double energy_max = -1.4;
    double period_max = 10.0;
    double spread_target = 1e-10;          // energy spread that doubles the mesh at the next adaptation
    int max_intervals = 800;
    bool compute_multipliers = true;
    std::vector<double> target_energies;   // report (and refine) every crossing of these energies
    std::vector<double> target_periods;    // likewise for periods
    bool stop_at_last_target = false;      // stop once every energy and period target has been crossed
};

struct FamilyResult {
    std::vector<PeriodicOrbit> orbits;
    std::vector<BranchEvent> events;
    std::vector<StepRecord> records;
    std::vector<PeriodicOrbit> targets;    // refined members at target energies, in crossing order
    ContinuationFrame last;
    bool underflow = false;
};

/// Continue a family of periodic orbits in (T, sigma) from a frame.
FamilyResult compute_family(const PeriodicOrbitProblem& problem, const ContinuationFrame& start,
                            const FamilySettings& settings, const std::string& family);

/// Re-solve an orbit at fixed period with sigma free; returns the Newton result.
NewtonResult reconverge_orbit(const PeriodicOrbitProblem& problem, const MeshedSolution& s,
                              const NewtonOptions& opts = {});

/// Among the family targets at energy E, the one whose period is closest to `period_hint`.
std::optional<PeriodicOrbit> member_near(const FamilyResult& family, double energy, double period_hint,
                                         double energy_tol = 1e-6);

}  // namespace cr3bp
