#pragma once

// Floquet eigenfunctions of periodic orbits from the extended (orbit, eigenfunction) BVP.

#include <cmath>
#include <vector>

#include "cr3bp/continuation.hpp"
#include "cr3bp/orbits.hpp"

namespace cr3bp {

/// u' = T fhat(u) + sigma d(u), u(1) = u(0), int <u, u_ref'> = 0,
/// v' = T f_u(u, 0) v - lambda v, v(1) = sign v(0), <v(0), v(0)> = rho.
///
/// With this sign the monodromy matrix maps v(0) to sign * e^lambda v(0), so
/// lambda > 0 selects the unstable eigenfunction.
class ExtendedEigenProblem : public BoundaryValueProblem {
public:
    explicit ExtendedEigenProblem(MassRatio mu, int sign = 1);
    const MassRatio& mass_ratio() const { return mu_; }
    int sign() const { return sign_; }

    int dim() const override { return 12; }
    int num_boundary() const override { return 13; }
    int num_integral() const override { return 1; }
    std::vector<std::string> parameter_names() const override { return {"T", "sigma", "lambda", "rho"}; }
    void rhs(double t, const Vec& y, const Vec& par, Eigen::Ref<Vec> f, Mat* dfdy, Mat* dfdp) const override;
    void boundary(const Vec& y0, const Vec& y1, const Vec& par, Eigen::Ref<Vec> r, Mat* d0, Mat* d1,
                  Mat* dp) const override;
    void integrand(const IntegrandPoint& pt, const Vec& par, Eigen::Ref<Vec> g, Mat* dgdy,
                   Mat* dgdp) const override;

    static constexpr int kT = 0;
    static constexpr int kSigma = 1;
    static constexpr int kLambda = 2;
    static constexpr int kRho = 3;

private:
    MassRatio mu_;
    int sign_;
};

struct EigenPacket {
    MeshedSolution solution;   // (u, v), 12 components, scalars (T, sigma, lambda, rho)
    int sign = 1;

    MeshedSolution orbit() const { return solution.slice(0, 6); }
    MeshedSolution eigenfunction() const { return solution.slice(6, 6); }
    double period() const { return solution.scalars().values(ExtendedEigenProblem::kT); }
    double sigma() const { return solution.scalars().values(ExtendedEigenProblem::kSigma); }
    double lambda() const { return solution.scalars().values(ExtendedEigenProblem::kLambda); }
    double rho() const { return solution.scalars().values(ExtendedEigenProblem::kRho); }
    double multiplier() const { return sign * std::exp(lambda()); }
};

/// Orbit with v = 0, rho = 0 and the given exponent: a solution of the extended system for any lambda.
MeshedSolution trivial_extension(const MeshedSolution& orbit, double lambda);

/// Exponent log|mu| of the simple real multiplier of the given sign nearest e^lambda_seed;
/// throws NotSimpleEigenvalue unless it is real, simple, off the unit circle and within `tol` of the seed.
double seed_exponent(const CVec& multipliers, double lambda_seed, int sign = 1, double tol = 1e-2);

struct GrowthSettings {
    double rho_target = 1.0;
    ContinuationSettings continuation = default_continuation();
    int sign = 1;
    double seed_tolerance = 1e-2;

    static ContinuationSettings default_continuation() {
        ContinuationSettings c;
        c.ds0 = 0.05;
        c.ds_max = 1e3;
        c.max_steps = 200;
        c.detect_branch_points = false;
        return c;
    }
};

struct GrowthReport {
    EigenPacket packet;
    double seed_lambda = 0.0;
    double seed_residual = 0.0;   // residual max-norm at the seeded branch point
    double orbit_drift = 0.0;     // max |u - u_target| over the growth steps and final solve
    double lambda_drift = 0.0;    // max |lambda_k - lambda_final|
    double sigma_max = 0.0;
    int steps = 0;
};

/// Branch switch off the v = 0 family at the seeded exponent, continue until rho crosses the target,
/// then solve with rho fixed. v(0) is oriented so that its x component is nonnegative.
GrowthReport grow_eigenfunction(const PeriodicOrbitProblem& problem, const PeriodicOrbit& orbit, double lambda_seed,
                                const GrowthSettings& settings = {});

/// Newton solve of the extended system with rho fixed and (sigma, lambda) free.
EigenPacket solve_packet(const ExtendedEigenProblem& problem, const MeshedSolution& guess, double rho,
                         const MeshedSolution& reference, const NewtonOptions& opts = {});

/// Integrity measures of a packet.
struct PacketCheck {
    double ode_residual = 0.0;       // max |v' - T f_u v + lambda v| over Gauss points
    double boundary_defect = 0.0;    // max |v(1) - sign v(0)|
    double norm_defect = 0.0;        // |<v(0), v(0)> - rho|
};
PacketCheck check_packet(const EigenPacket& packet, const MassRatio& mu);

struct PacketFamilySettings {
    ContinuationSettings continuation{};
    double energy_min = -2.0;
    double energy_max = -1.4;
    double lambda_min = 1e-3;            // stop when the multiplier approaches the unit circle
    std::vector<double> target_energies;
    std::vector<double> target_periods;
    int direction = 1;                   // initial sign of dT
};

struct PacketFamily {
    std::vector<EigenPacket> packets;
    std::vector<EigenPacket> targets;
    std::vector<BranchEvent> events;
    ContinuationFrame last;
    bool underflow = false;
};

/// Continue a packet with rho fixed and (sigma, lambda, T) free along the orbit family.
PacketFamily continue_eigenpacket(const EigenPacket& packet, const MassRatio& mu, const PacketFamilySettings& settings);

/// Energy of the u part at t = 0.
double packet_energy(const EigenPacket& packet, const MassRatio& mu);

}  // namespace cr3bp
