#pragma once

// Gauss-Legendre collocation of first-order boundary value problems on [0, 1].
//
// A solution is a continuous piecewise polynomial of degree m on each mesh
// interval, stored by its values at m+1 equally spaced points per interval
// (interval endpoints shared). The ODE is collocated at the m Gauss points of
// each interval; integrals use the (m+1)-point Gauss rule, which is exact for
// products of two solution components.

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cr3bp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;

struct Mesh {
    std::vector<double> nodes;  // 0 = t_0 < ... < t_N = 1
    int degree = 4;             // collocation points per interval

    static Mesh uniform(int intervals, int degree);
    int intervals() const { return static_cast<int>(nodes.size()) - 1; }
    int points() const { return intervals() * degree + 1; }
    double width(int j) const { return nodes[j + 1] - nodes[j]; }
    /// Time of storage point k (interval k / m, sub-point k % m).
    double point_time(int k) const;
    /// Interval containing t (the last interval for t = 1).
    int locate(double t) const;
    /// Throws PreconditionError unless strictly increasing from 0 to 1, N >= 4, 2 <= m <= 7.
    void validate() const;
};

/// Named scalar parameters attached to a solution.
struct ScalarSet {
    std::vector<std::string> names;
    Vec values;

    ScalarSet() = default;
    explicit ScalarSet(std::vector<std::string> n);
    int index(const std::string& name) const;  // throws OutOfRange
    double& operator[](const std::string& name) { return values(index(name)); }
    double operator[](const std::string& name) const { return values(index(name)); }
    int size() const { return static_cast<int>(names.size()); }
};

class MeshedSolution {
public:
    MeshedSolution() = default;
    MeshedSolution(Mesh mesh, int dim, ScalarSet scalars = {});

    const Mesh& mesh() const { return mesh_; }
    int dim() const { return dim_; }
    /// Storage values, one row per point.
    Mat& values() { return values_; }
    const Mat& values() const { return values_; }
    ScalarSet& scalars() { return scalars_; }
    const ScalarSet& scalars() const { return scalars_; }

    Vec evaluate(double t) const;
    Vec derivative(double t) const;
    Vec node_value(int j) const { return values_.row(j * mesh_.degree).transpose(); }
    Vec at_start() const { return values_.row(0).transpose(); }
    Vec at_end() const { return values_.row(values_.rows() - 1).transpose(); }

    /// Re-sample onto another mesh by piecewise-polynomial interpolation.
    MeshedSolution interpolate_to(const Mesh& target) const;
    /// Components [first, first+count) as a new solution (scalars copied).
    MeshedSolution slice(int first, int count) const;

    /// Build from a callable t -> Vec of size dim sampled at the storage points.
    template <typename F>
    static MeshedSolution sample(const Mesh& mesh, int dim, F&& fn, ScalarSet scalars = {}) {
        MeshedSolution s(mesh, dim, std::move(scalars));
        for (int k = 0; k < mesh.points(); ++k) {
            s.values_.row(k) = fn(mesh.point_time(k)).transpose();
        }
        return s;
    }

private:
    Mesh mesh_;
    int dim_ = 0;
    Mat values_;
    ScalarSet scalars_;
};

/// Gauss nodes/weights on (0,1) and Lagrange basis tables for the equally spaced points.
struct CollocationScheme {
    int degree = 0;
    Vec colloc_nodes;  // m Gauss points
    Mat colloc_basis;  // m x (m+1): L_l(z_q)
    Mat colloc_dbasis; // m x (m+1): L_l'(z_q)
    Vec quad_nodes;    // m+1 Gauss points
    Vec quad_weights;
    Mat quad_basis;    // (m+1) x (m+1)
    Mat quad_dbasis;

    static const CollocationScheme& get(int degree);
};

/// Lagrange basis values (and derivatives) at z for m+1 equally spaced points on [0,1].
void lagrange_basis(int degree, double z, Eigen::Ref<Vec> value, Eigen::Ref<Vec> deriv);

/// Gauss-Legendre nodes and weights on (0,1).
void gauss_legendre(int count, Vec& nodes, Vec& weights);

/// Integral over [0,1] of <a(t), b(t)> using the (m+1)-point rule; a, b on the same mesh.
double integral_inner(const MeshedSolution& a, const MeshedSolution& b);
/// Integral inner product plus the scalar parts restricted to `free` indices.
double combined_inner(const MeshedSolution& a, const MeshedSolution& b, const std::vector<int>& free);

/// Point of evaluation passed to integral constraints.
struct IntegrandPoint {
    double t;
    Eigen::Ref<const Vec> y;
    Eigen::Ref<const Vec> reference;      // reference solution value (e.g. previous family member)
    Eigen::Ref<const Vec> reference_dot;  // its derivative in scaled time
};

/// First-order BVP y' = g(t, y, p) on [0,1] with boundary and integral constraints.
class BoundaryValueProblem {
public:
    virtual ~BoundaryValueProblem() = default;

    virtual int dim() const = 0;
    virtual int num_boundary() const = 0;
    virtual int num_integral() const { return 0; }
    virtual std::vector<std::string> parameter_names() const = 0;

    /// f = g(t, y, p); Jacobians optional (null when not requested). dfdp is dim x all parameters.
    virtual void rhs(double t, const Vec& y, const Vec& par, Eigen::Ref<Vec> f, Mat* dfdy,
                     Mat* dfdp) const = 0;
    virtual void boundary(const Vec& y0, const Vec& y1, const Vec& par, Eigen::Ref<Vec> r, Mat* d0,
                          Mat* d1, Mat* dp) const = 0;
    virtual void integrand(const IntegrandPoint& pt, const Vec& par, Eigen::Ref<Vec> g, Mat* dgdy,
                           Mat* dgdp) const;

    /// Throws DimensionMismatch unless #bc + #int + (arclength ? 1 : 0) = dim + #free.
    void check_well_posed(int num_free, bool with_arclength) const;
};

/// Pseudo-arclength row data: previous point, tangent and step, all on the solution mesh.
struct ArclengthRow {
    const MeshedSolution* previous = nullptr;
    const MeshedSolution* tangent = nullptr;
    double step = 0.0;
};

/// Which unknowns and extra rows define one discrete nonlinear system.
struct SystemSpec {
    std::vector<int> free;                          // indices of free scalars
    const MeshedSolution* reference = nullptr;      // integrand reference (defaults to the unknown itself)
    std::optional<ArclengthRow> arclength;
    bool collocation_only = false;                  // drop boundary/integral rows (monodromy)
};

/// Structured LU of the bordered almost-block-diagonal collocation Jacobian.
///
/// Interior storage points are condensed per interval, then mesh nodes 1..N-1
/// are eliminated sequentially with row pivoting across interval pairs. The
/// remaining system in (y(0), y(1), free scalars) is solved densely.
class BlockFactorization {
public:
    struct IntervalBlock {
        Mat lu;                 // m*n x ((m+1)*n + np) after elimination of the interior columns
        std::vector<int> piv;
        Mat z;                  // integral-row multipliers, nI x (m-1)*n
    };
    struct ReductionBlock {
        Mat lu;                 // 2n x (3n + np)
        std::vector<int> piv;
        Mat z;                  // nI x n
    };

    int n = 0, m = 0, intervals = 0, np = 0, nbc = 0, nint = 0;
    std::vector<IntervalBlock> interval_blocks;
    std::vector<ReductionBlock> reduction_blocks;
    Mat boundary_relation;      // n x (2n + np): rows coupling y(0), y(1), scalars after reduction
    Mat final_matrix;           // (2n+np) square, when the system is square
    Eigen::FullPivLU<Mat> final_lu;
    bool square = false;
    int det_sign = 1;
    double log_abs_det = 0.0;

    /// Solve J dx = b; b ordered as (collocation rows, boundary rows, integral rows).
    Vec solve(const Vec& b) const;
};

/// The discretized nonlinear system for one problem and specification.
class DiscreteSystem {
public:
    DiscreteSystem(const BoundaryValueProblem& problem, SystemSpec spec);

    const BoundaryValueProblem& problem() const { return *problem_; }
    const SystemSpec& spec() const { return spec_; }
    int num_rows(const MeshedSolution& s) const;

    Vec residual(const MeshedSolution& s) const;
    /// Residual plus factorized Jacobian.
    Vec linearize(const MeshedSolution& s, BlockFactorization& fact) const;
    /// Apply an update dx (ordered: storage values row-major, then free scalars).
    void apply_update(MeshedSolution& s, const Vec& dx, double scale = 1.0) const;

private:
    void assemble(const MeshedSolution& s, Vec& res, BlockFactorization* fact) const;

    const BoundaryValueProblem* problem_;
    SystemSpec spec_;
};

struct NewtonOptions {
    double tol = 1e-8;
    int max_iter = 10;
    int newton_iterations = 3;  // full Newton steps before chord steps become eligible
    double divergence_factor = 1e6;
};

struct NewtonResult {
    MeshedSolution solution;
    int iterations = 0;
    double correction_norm = 0.0;
    double residual_norm = 0.0;
    int det_sign = 1;           // of the last factorized Jacobian
    double log_abs_det = 0.0;
};

/// Scaled max-norm of a correction: values relative to 1 + max|y|, scalars to 1 + |p|.
double correction_norm(const MeshedSolution& s, const Vec& dx, const std::vector<int>& free);

/// Newton iterations, switching to chord steps once convergence is fast; throws NoConvergence.
NewtonResult newton_chord_solve(const DiscreteSystem& system, MeshedSolution initial,
                                const NewtonOptions& opts = {});

/// Per-interval error monitor h_j * |y^(m+1)|^(1/(m+1)) (piecewise-constant density times width).
Vec mesh_error_monitor(const MeshedSolution& s);
/// Estimated local error per interval, h_j^(m+1) |y^(m+1)|.
Vec local_error_estimate(const MeshedSolution& s);
/// Equidistribute the monitor over `intervals` intervals (0 keeps the count); returns the new mesh.
Mesh equidistributed_mesh(const MeshedSolution& s, int intervals = 0);
/// New mesh plus interpolated solution; keeps the old mesh when the monitor is degenerate.
MeshedSolution adapt_mesh(const MeshedSolution& s);

/// Floquet multipliers from the collocation Jacobian of y' = g(t, y, p) over one period.
struct MonodromyResult {
    Mat matrix;        // maps y(0) perturbations to y(1)
    CVec multipliers;  // sorted by decreasing modulus
    bool ill_conditioned = false;
};
MonodromyResult monodromy(const BoundaryValueProblem& problem, const MeshedSolution& s);

}  // namespace cr3bp
