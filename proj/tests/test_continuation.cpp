#include <cmath>

#include "doctest.h"

#include "cr3bp/continuation.hpp"
#include "cr3bp/errors.hpp"

using namespace cr3bp;

namespace {

// y'' = -lambda g(y), y(0) = y(1) = 0; g = exp (Bratu) or sin (pendulum).
class Dirichlet : public BoundaryValueProblem {
public:
    explicit Dirichlet(bool bratu) : bratu_(bratu) {}
    int dim() const override { return 2; }
    int num_boundary() const override { return 2; }
    std::vector<std::string> parameter_names() const override { return {"lambda"}; }
    void rhs(double, const Vec& y, const Vec& p, Eigen::Ref<Vec> f, Mat* dfdy, Mat* dfdp) const override {
        const double g = bratu_ ? std::exp(y(0)) : std::sin(y(0));
        const double dg = bratu_ ? std::exp(y(0)) : std::cos(y(0));
        f << y(1), -p(0) * g;
        if (dfdy) *dfdy << 0, 1, -p(0) * dg, 0;
        if (dfdp) *dfdp << 0, -g;
    }
    void boundary(const Vec& y0, const Vec& y1, const Vec&, Eigen::Ref<Vec> r, Mat* d0, Mat* d1,
                  Mat* dp) const override {
        r << y0(0), y1(0);
        if (d0) *d0 << 1, 0, 0, 0;
        if (d1) *d1 << 0, 0, 1, 0;
        if (dp) dp->setZero();
    }

private:
    bool bratu_;
};

MeshedSolution zero_solution(double lambda) {
    ScalarSet sc({"lambda"});
    sc.values << lambda;
    MeshedSolution s(Mesh::uniform(20, 4), 2, sc);
    s.values().setZero();
    return s;
}

}  // namespace

TEST_CASE("step size rule") {
    ContinuationSettings cs;
    cs.ds_min = 1e-4;
    cs.ds_max = 0.1;
    CHECK(adapt_step(0.01, 2, cs) == doctest::Approx(0.013));
    CHECK(adapt_step(-0.01, 3, cs) == doctest::Approx(-0.013));
    CHECK(adapt_step(0.01, 5, cs) == doctest::Approx(0.01));
    CHECK(adapt_step(0.01, 8, cs) == doctest::Approx(0.005));
    CHECK(adapt_step(0.09, 1, cs) == doctest::Approx(0.1));
    CHECK(reduce_step(0.01, cs) == doctest::Approx(0.005));
    CHECK_THROWS_AS(reduce_step(1.5e-4, cs), StepSizeUnderflow);
}

TEST_CASE("bratu fold is located") {
    const Dirichlet problem(true);
    ContinuationSettings cs;
    cs.ds0 = 0.1;
    cs.ds_max = 0.5;
    cs.max_steps = 40;
    cs.detect_branch_points = false;
    Continuation cont(problem, {0}, cs);
    MeshedSolution dir = cont.zero_like(zero_solution(0.0));
    dir.scalars().values(0) = 1.0;
    RunHooks hooks;
    hooks.monitors.push_back(Monitor{"fold", EventKind::Fold,
                                     [](const MeshedSolution&, const MeshedSolution& t) { return t.scalars().values(0); },
                                     true, 1});
    const ContinuationResult res = cont.run(cont.start(zero_solution(0.0), dir, cs.ds0), hooks);
    REQUIRE(res.events.size() == 1);
    const BranchEvent& ev = res.events[0];
    CHECK(ev.kind == EventKind::Fold);
    CHECK(ev.location.scalars().values(0) == doctest::Approx(3.513830719125162).epsilon(1e-8));
    // the fold solution has y'(0) = 4 (oracle: closed form y = -2 log(cosh(theta (x - 1/2)) / cosh(theta / 4)))
    CHECK(ev.location.at_start()(1) == doctest::Approx(4.0).epsilon(1e-4));
    CHECK(res.stopped);
}

TEST_CASE("pendulum branch points at (k pi)^2 and branch switching") {
    const Dirichlet problem(false);
    ContinuationSettings cs;
    cs.ds0 = 0.5;
    cs.ds_max = 2.0;
    cs.max_steps = 30;
    Continuation cont(problem, {0}, cs);
    MeshedSolution dir = cont.zero_like(zero_solution(1.0));
    dir.scalars().values(0) = 1.0;
    const ContinuationResult res = cont.run(cont.start(zero_solution(1.0), dir, cs.ds0));
    std::vector<const BranchEvent*> bps;
    for (const auto& e : res.events)
        if (e.kind == EventKind::BranchPoint) bps.push_back(&e);
    REQUIRE(bps.size() >= 2);
    // determinant brackets are localized to ds * locate_fraction
    const double tol = cs.ds_max * cs.locate_fraction;
    CHECK(std::abs(bps[0]->location.scalars().values(0) - M_PI * M_PI) < tol);
    CHECK(std::abs(bps[1]->location.scalars().values(0) - 4 * M_PI * M_PI) < tol);
    for (const auto& s : res.solutions) CHECK(s.values().cwiseAbs().maxCoeff() < 1e-10);

    // the bifurcating branch has nonzero amplitude and lambda increasing with amplitude
    ContinuationSettings c2 = cs;
    c2.max_steps = 8;
    c2.detect_branch_points = false;
    Continuation cont2(problem, {0}, c2);
    const ContinuationResult side = cont2.run(cont.branch_switch(*bps[0], 0.1));
    REQUIRE(!side.solutions.empty());
    const MeshedSolution& s = side.solutions.back();
    CHECK(s.values().col(0).cwiseAbs().maxCoeff() > 0.1);
    CHECK(s.scalars().values(0) > M_PI * M_PI);
    // first mode: no interior sign change
    const double mid = s.evaluate(0.5)(0);
    for (double t = 0.05; t < 1.0; t += 0.05) CHECK(s.evaluate(t)(0) * mid > 0.0);
}
