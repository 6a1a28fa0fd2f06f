#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"

#include "cr3bp/errors.hpp"
#include "cr3bp/integrate.hpp"

using namespace cr3bp;

namespace {

// Eigenvalues of the RK state-transition matrix over one period, sorted by decreasing modulus.
CVec oracle_multipliers(const PeriodicOrbit& o) {
    const StateVector u0 = o.solution.at_start();
    const auto [end, stm] = propagate_with_stm(u0, o.period, fixtures::mu());
    (void)end;
    Eigen::EigenSolver<Mat> es(Mat(stm), false);
    CVec ev = es.eigenvalues();
    std::sort(ev.data(), ev.data() + ev.size(), [](auto a, auto b) { return std::abs(a) > std::abs(b); });
    return ev;
}

}  // namespace

TEST_CASE("lyapunov family reaches the target energy with conserved structure") {
    const auto& fam = fixtures::lyapunov_family();
    REQUIRE(fam.targets.size() == 1);
    const PeriodicOrbit& o = fam.targets[0];
    CHECK(o.energy == doctest::Approx(fixtures::kLyapunovEnergy).epsilon(1e-9));
    for (const auto& m : fam.orbits) {
        CHECK(m.energy_spread < 1e-8);
        CHECK(std::abs(m.sigma) < 1e-6);
        CHECK(trivial_multiplier_defect(m.multipliers) < 1e-4);
        CHECK(reciprocity_defect(m.multipliers) < 1e-6);
    }
    // planar: z and vz identically zero
    CHECK(o.solution.values().col(2).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(o.solution.values().col(5).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("collocation orbit is periodic under independent integration") {
    const PeriodicOrbit& o = fixtures::lyapunov_orbit();
    const StateVector u0 = o.solution.at_start();
    const StateVector u1 = propagate(u0, o.period, fixtures::mu());
    CHECK((u1 - u0).cwiseAbs().maxCoeff() < 1e-6);
    // energy along the RK trajectory equals the recorded energy
    CHECK(energy(u1, fixtures::mu()) == doctest::Approx(o.energy).epsilon(1e-10));
}

TEST_CASE("monodromy multipliers match the RK state-transition matrix") {
    const PeriodicOrbit& o = fixtures::lyapunov_orbit();
    const CVec oracle = oracle_multipliers(o);
    REQUIRE(o.multipliers.size() == 6);
    // largest real pair
    CHECK(std::abs(o.multipliers(0) - oracle(0)) / std::abs(oracle(0)) < 1e-5);
    CHECK(std::abs(o.multipliers(5) - oracle(5)) < 1e-5);
    // exponents come in +- pairs once the trivial pair is removed; past the halo bifurcation
    // the vertical pair is real as well
    const auto ex = nontrivial_exponents(o.multipliers);
    REQUIRE(ex.size() == 4);
    CHECK(std::abs(ex[0].real() + ex[3].real()) < 1e-6);
    CHECK(std::abs(ex[1].real() + ex[2].real()) < 1e-6);
    CHECK(ex[1].real() > 0.0);
}

TEST_CASE("planar lyapunov orbit is symmetric under time reversal") {
    const PeriodicOrbit& o = fixtures::lyapunov_orbit();
    const MeshedSolution& s = o.solution;
    // the reflected orbit passes through each reflected point; compare against the nearest sample
    double worst = 0.0;
    for (double t = 0.05; t < 1.0; t += 0.1) {
        const StateVector p = time_reversal(StateVector(s.evaluate(t)));
        double best = INFINITY;
        for (int k = 0; k < 2000; ++k) {
            best = std::min(best, (StateVector(s.evaluate(k / 2000.0)) - p).head<3>().norm());
        }
        worst = std::max(worst, best);
    }
    CHECK(worst < 5e-3);
}

TEST_CASE("stored member re-solves immediately") {
    const PeriodicOrbitProblem problem(fixtures::mu());
    const PeriodicOrbit& o = fixtures::lyapunov_orbit();
    const NewtonResult r = reconverge_orbit(problem, o.solution);
    CHECK(r.iterations <= 2);
    CHECK(r.solution.scalars().values(PeriodicOrbitProblem::kT) == doctest::Approx(o.period).epsilon(1e-10));
}

TEST_CASE("member lookup by energy and period hint") {
    const auto& fam = fixtures::lyapunov_family();
    const auto m = member_near(fam, fixtures::kLyapunovEnergy, 2.7);
    REQUIRE(m.has_value());
    CHECK(m->energy == doctest::Approx(fixtures::kLyapunovEnergy).epsilon(1e-9));
    CHECK_FALSE(member_near(fam, -1.40, 2.7).has_value());
}

TEST_CASE("multiplier diagnostics on synthetic spectra") {
    CVec m(6);
    m << 100.0, std::complex<double>(0.6, 0.8), 1.0 + 1e-7, 1.0 - 1e-7, std::complex<double>(0.6, -0.8), 0.01;
    CHECK(trivial_multiplier_defect(m) < 1e-6);
    CHECK(reciprocity_defect(m) < 1e-12);
    m(5) = 0.0102;
    CHECK(reciprocity_defect(m) == doctest::Approx(0.02).epsilon(0.05));
    const auto ex = nontrivial_exponents(m);
    REQUIRE(ex.size() == 4);
    CHECK(ex[0].real() == doctest::Approx(std::log(100.0)));
}
