#pragma once

// Rotating-frame dynamics of the circular restricted three-body problem.

#include <array>
#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace cr3bp {

using StateVector = Eigen::Matrix<double, 6, 1>;
using StateMatrix = Eigen::Matrix<double, 6, 6>;
using Position = Eigen::Vector3d;

/// Mass ratio of the smaller primary, 0 < mu <= 1/2.
class MassRatio {
public:
    explicit MassRatio(double mu);
    double value() const { return mu_; }
    double earth_x() const { return -mu_; }
    double moon_x() const { return 1.0 - mu_; }

private:
    double mu_;
};

inline constexpr double kCollisionTolerance = 1e-12;
inline constexpr double kEarthMoonMu = 0.01215;

/// Distances to the larger and smaller primaries; throws CollisionError below tolerance.
std::pair<double, double> primary_distances(const StateVector& s, const MassRatio& mu);

/// Effective potential including the constant -mu(1-mu)/2 shift.
double effective_potential(const Position& p, const MassRatio& mu);

/// Vector field without the period factor: (v, a + sigma * v).
StateVector vector_field(const StateVector& s, double sigma, const MassRatio& mu);

/// Analytic derivative of vector_field at sigma = 0.
StateMatrix jacobian(const StateVector& s, const MassRatio& mu);

/// Directional derivative d/ds [J(s) w] applied to w, i.e. sum_k dJ/ds_k w_k.
/// Only the lower-left block is nonzero (Hessian of the potential differentiated once more).
StateMatrix jacobian_derivative(const StateVector& s, const StateVector& w, const MassRatio& mu);

double energy(const StateVector& s, const MassRatio& mu);
inline double jacobi_constant(const StateVector& s, const MassRatio& mu) { return -2.0 * energy(s, mu); }
StateVector energy_gradient(const StateVector& s, const MassRatio& mu);

/// (x, y, z, vx, vy, vz) -> (x, -y, z, -vx, vy, -vz); maps solutions to time-reversed solutions.
StateVector time_reversal(const StateVector& s);
/// (z, vz) -> (-z, -vz); maps solutions to solutions.
StateVector z_reflection(const StateVector& s);

struct LibrationPoint {
    int index = 0;  // 1..5
    StateVector state = StateVector::Zero();
    std::array<std::complex<double>, 6> eigenvalues{};
    /// Eigenvectors matching `eigenvalues`, columns of a complex 6x6 matrix.
    Eigen::Matrix<std::complex<double>, 6, 6> eigenvectors;
};

/// Root of the collinear equilibrium equation dU/dx = 0 on y = z = 0, by bisection then Newton.
double collinear_root(double lo, double hi, const MassRatio& mu);

/// The five equilibria: L1 between the primaries, L2 beyond the smaller one,
/// L3 beyond the larger one, L4/L5 equilateral.
std::vector<LibrationPoint> libration_points(const MassRatio& mu);

}  // namespace cr3bp
