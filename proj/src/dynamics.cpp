#include "cr3bp/dynamics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "cr3bp/errors.hpp"

namespace cr3bp {

CollisionError::CollisionError(double r1_, double r2_)
    : Error([&] {
          std::ostringstream os;
          os << "state within collision tolerance of a primary (r1=" << r1_ << ", r2=" << r2_ << ")";
          return os.str();
      }()),
      r1(r1_),
      r2(r2_) {}

MassRatio::MassRatio(double mu) : mu_(mu) {
    if (!(mu > 0.0 && mu <= 0.5)) {
        throw PreconditionError("mass ratio must lie in (0, 1/2]");
    }
}

namespace {

struct Primaries {
    Position d1;  // offset from the larger primary
    Position d2;  // offset from the smaller primary
    double r1;
    double r2;
    double m1;
    double m2;
};

Primaries primaries(const StateVector& s, const MassRatio& mu) {
    Primaries p;
    p.m2 = mu.value();
    p.m1 = 1.0 - p.m2;
    p.d1 = Position(s(0) + p.m2, s(1), s(2));
    p.d2 = Position(s(0) - p.m1, s(1), s(2));
    p.r1 = p.d1.norm();
    p.r2 = p.d2.norm();
    if (!(p.r1 > kCollisionTolerance) || !(p.r2 > kCollisionTolerance)) {
        throw CollisionError(p.r1, p.r2);
    }
    return p;
}

// Second derivatives of the pseudo-potential (x^2+y^2)/2 + (1-mu)/r1 + mu/r2.
Eigen::Matrix3d potential_hessian(const Primaries& p) {
    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    h(0, 0) = 1.0;
    h(1, 1) = 1.0;
    const auto add = [&h](const Position& d, double r, double m) {
        const double r3 = r * r * r;
        const double r5 = r3 * r * r;
        h += m * (3.0 * d * d.transpose() / r5 - Eigen::Matrix3d::Identity() / r3);
    };
    add(p.d1, p.r1, p.m1);
    add(p.d2, p.r2, p.m2);
    return h;
}

}  // namespace

std::pair<double, double> primary_distances(const StateVector& s, const MassRatio& mu) {
    const auto p = primaries(s, mu);
    return {p.r1, p.r2};
}

double effective_potential(const Position& pos, const MassRatio& mu) {
    StateVector s = StateVector::Zero();
    s.head<3>() = pos;
    const auto p = primaries(s, mu);
    return -0.5 * (pos(0) * pos(0) + pos(1) * pos(1)) - p.m1 / p.r1 - p.m2 / p.r2 -
           0.5 * p.m2 * p.m1;
}

StateVector vector_field(const StateVector& s, double sigma, const MassRatio& mu) {
    const auto p = primaries(s, mu);
    const double c1 = p.m1 / (p.r1 * p.r1 * p.r1);
    const double c2 = p.m2 / (p.r2 * p.r2 * p.r2);
    StateVector f;
    f(0) = s(3);
    f(1) = s(4);
    f(2) = s(5);
    f(3) = 2.0 * s(4) + s(0) - c1 * p.d1(0) - c2 * p.d2(0) + sigma * s(3);
    f(4) = -2.0 * s(3) + s(1) - c1 * s(1) - c2 * s(1) + sigma * s(4);
    f(5) = -c1 * s(2) - c2 * s(2) + sigma * s(5);
    if (!f.allFinite()) {
        throw NonFiniteError("vector field evaluation overflowed");
    }
    return f;
}

StateMatrix jacobian(const StateVector& s, const MassRatio& mu) {
    const auto p = primaries(s, mu);
    StateMatrix j = StateMatrix::Zero();
    j.topRightCorner<3, 3>().setIdentity();
    j.bottomLeftCorner<3, 3>() = potential_hessian(p);
    j(3, 4) = 2.0;
    j(4, 3) = -2.0;
    return j;
}

StateMatrix jacobian_derivative(const StateVector& s, const StateVector& w, const MassRatio& mu) {
    const auto p = primaries(s, mu);
    const Position dw = w.head<3>();
    Eigen::Matrix3d block = Eigen::Matrix3d::Zero();
    // d/dx_k of (3 d_i d_j / r^5 - delta_ij / r^3), contracted with w_k.
    const auto add = [&](const Position& d, double r, double m) {
        const double r2 = r * r;
        const double r5 = r2 * r2 * r;
        const double r7 = r5 * r2;
        const double dot = d.dot(dw);
        block += m * (3.0 * (dot * Eigen::Matrix3d::Identity() + dw * d.transpose() + d * dw.transpose()) / r5 -
                      15.0 * dot * d * d.transpose() / r7);
    };
    add(p.d1, p.r1, p.m1);
    add(p.d2, p.r2, p.m2);
    StateMatrix out = StateMatrix::Zero();
    out.bottomLeftCorner<3, 3>() = block;
    return out;
}

double energy(const StateVector& s, const MassRatio& mu) {
    return 0.5 * s.tail<3>().squaredNorm() + effective_potential(s.head<3>(), mu);
}

StateVector energy_gradient(const StateVector& s, const MassRatio& mu) {
    const auto p = primaries(s, mu);
    const double c1 = p.m1 / (p.r1 * p.r1 * p.r1);
    const double c2 = p.m2 / (p.r2 * p.r2 * p.r2);
    StateVector g;
    g.head<3>() = -Position(s(0), s(1), 0.0) + c1 * p.d1 + c2 * p.d2;
    g.tail<3>() = s.tail<3>();
    return g;
}

StateVector time_reversal(const StateVector& s) {
    StateVector r;
    r << s(0), -s(1), s(2), -s(3), s(4), -s(5);
    return r;
}

StateVector z_reflection(const StateVector& s) {
    StateVector r = s;
    r(2) = -s(2);
    r(5) = -s(5);
    return r;
}

namespace {

double collinear_equation(double x, const MassRatio& mu) {
    const double m2 = mu.value();
    const double m1 = 1.0 - m2;
    const double a = x + m2;
    const double b = x - m1;
    return x - m1 * a / std::pow(std::abs(a), 3) - m2 * b / std::pow(std::abs(b), 3);
}

double collinear_slope(double x, const MassRatio& mu) {
    const double m2 = mu.value();
    const double m1 = 1.0 - m2;
    return 1.0 + 2.0 * m1 / std::pow(std::abs(x + m2), 3) + 2.0 * m2 / std::pow(std::abs(x - m1), 3);
}

LibrationPoint make_point(int index, double x, double y, const MassRatio& mu) {
    LibrationPoint lp;
    lp.index = index;
    lp.state = StateVector::Zero();
    lp.state(0) = x;
    lp.state(1) = y;
    Eigen::EigenSolver<StateMatrix> es(jacobian(lp.state, mu));
    for (int i = 0; i < 6; ++i) {
        lp.eigenvalues[i] = es.eigenvalues()(i);
    }
    lp.eigenvectors = es.eigenvectors();
    return lp;
}

}  // namespace

double collinear_root(double lo, double hi, const MassRatio& mu) {
    double flo = collinear_equation(lo, mu);
    const double fhi = collinear_equation(hi, mu);
    if (flo * fhi > 0.0) {
        throw ConvergenceError("collinear equilibrium not bracketed");
    }
    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = collinear_equation(mid, mu);
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 5; ++it) {
        const double dx = collinear_equation(x, mu) / collinear_slope(x, mu);
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
    }
    if (!std::isfinite(x)) {
        throw ConvergenceError("collinear equilibrium Newton polish diverged");
    }
    return x;
}

std::vector<LibrationPoint> libration_points(const MassRatio& mu) {
    const double m2 = mu.value();
    const double m1 = 1.0 - m2;
    const double gap = 1e-9;
    std::vector<LibrationPoint> pts;
    pts.push_back(make_point(1, collinear_root(-m2 + gap, m1 - gap, mu), 0.0, mu));
    pts.push_back(make_point(2, collinear_root(m1 + gap, 2.5, mu), 0.0, mu));
    pts.push_back(make_point(3, collinear_root(-2.5, -m2 - gap, mu), 0.0, mu));
    const double h = std::sqrt(3.0) / 2.0;
    pts.push_back(make_point(4, 0.5 - m2, h, mu));
    pts.push_back(make_point(5, 0.5 - m2, -h, mu));
    return pts;
}

}  // namespace cr3bp
