#include "cr3bp/collocation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "cr3bp/errors.hpp"

namespace cr3bp {

// ---------------------------------------------------------------------------
// Mesh and scalars

Mesh Mesh::uniform(int intervals, int degree) {
    Mesh mesh;
    mesh.degree = degree;
    mesh.nodes.resize(intervals + 1);
    for (int j = 0; j <= intervals; ++j) {
        mesh.nodes[j] = static_cast<double>(j) / intervals;
    }
    mesh.nodes.back() = 1.0;
    mesh.validate();
    return mesh;
}

double Mesh::point_time(int k) const {
    const int j = std::min(k / degree, intervals() - 1);
    const int l = k - j * degree;
    if (l == 0) return nodes[j];
    if (l == degree) return nodes[j + 1];
    return nodes[j] + width(j) * static_cast<double>(l) / degree;
}

int Mesh::locate(double t) const {
    const auto it = std::upper_bound(nodes.begin(), nodes.end(), t);
    int j = static_cast<int>(it - nodes.begin()) - 1;
    return std::clamp(j, 0, intervals() - 1);
}

void Mesh::validate() const {
    if (nodes.size() < 5) throw PreconditionError("mesh needs at least four intervals");
    if (degree < 2 || degree > 7) throw PreconditionError("collocation degree must be in [2, 7]");
    if (nodes.front() != 0.0 || nodes.back() != 1.0) throw PreconditionError("mesh must span [0, 1]");
    for (std::size_t j = 1; j < nodes.size(); ++j) {
        if (!(nodes[j] > nodes[j - 1])) throw PreconditionError("mesh nodes must be strictly increasing");
    }
}

ScalarSet::ScalarSet(std::vector<std::string> n) : names(std::move(n)), values(Vec::Zero(names.size())) {}

int ScalarSet::index(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw OutOfRange("unknown scalar parameter '" + name + "'");
    return static_cast<int>(it - names.begin());
}

// ---------------------------------------------------------------------------
// Quadrature and basis tables

void gauss_legendre(int count, Vec& nodes, Vec& weights) {
    nodes.resize(count);
    weights.resize(count);
    for (int i = 0; i < count; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (count + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= count; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (count == 1) p0 = 1.0;
            dp = count * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        // map [-1,1] -> [0,1], ascending order
        nodes(count - 1 - i) = 0.5 * (x + 1.0);
        weights(count - 1 - i) = 1.0 / ((1.0 - x * x) * dp * dp);
    }
}

void lagrange_basis(int degree, double z, Eigen::Ref<Vec> value, Eigen::Ref<Vec> deriv) {
    const int np = degree + 1;
    for (int l = 0; l < np; ++l) {
        const double pl = static_cast<double>(l) / degree;
        double v = 1.0;
        double d = 0.0;
        for (int i = 0; i < np; ++i) {
            if (i == l) continue;
            const double pi = static_cast<double>(i) / degree;
            const double factor = (z - pi) / (pl - pi);
            d = d * factor + v / (pl - pi);
            v *= factor;
        }
        value(l) = v;
        deriv(l) = d;
    }
}

const CollocationScheme& CollocationScheme::get(int degree) {
    static std::map<int, CollocationScheme> cache;
    static std::mutex lock;
    std::lock_guard<std::mutex> guard(lock);
    auto it = cache.find(degree);
    if (it != cache.end()) return it->second;
    CollocationScheme s;
    s.degree = degree;
    Vec w;
    gauss_legendre(degree, s.colloc_nodes, w);
    gauss_legendre(degree + 1, s.quad_nodes, s.quad_weights);
    s.colloc_basis.resize(degree, degree + 1);
    s.colloc_dbasis.resize(degree, degree + 1);
    Vec v(degree + 1), d(degree + 1);
    for (int q = 0; q < degree; ++q) {
        lagrange_basis(degree, s.colloc_nodes(q), v, d);
        s.colloc_basis.row(q) = v.transpose();
        s.colloc_dbasis.row(q) = d.transpose();
    }
    s.quad_basis.resize(degree + 1, degree + 1);
    s.quad_dbasis.resize(degree + 1, degree + 1);
    for (int q = 0; q <= degree; ++q) {
        lagrange_basis(degree, s.quad_nodes(q), v, d);
        s.quad_basis.row(q) = v.transpose();
        s.quad_dbasis.row(q) = d.transpose();
    }
    return cache.emplace(degree, std::move(s)).first->second;
}

// ---------------------------------------------------------------------------
// MeshedSolution

MeshedSolution::MeshedSolution(Mesh mesh, int dim, ScalarSet scalars)
    : mesh_(std::move(mesh)), dim_(dim), values_(Mat::Zero(mesh_.points(), dim)), scalars_(std::move(scalars)) {
    mesh_.validate();
}

Vec MeshedSolution::evaluate(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) throw OutOfRange("evaluation time outside [0, 1]");
    const int j = mesh_.locate(t);
    const int m = mesh_.degree;
    if (t == mesh_.nodes[j]) return values_.row(j * m).transpose();
    if (t == mesh_.nodes[j + 1]) return values_.row((j + 1) * m).transpose();
    const double z = (t - mesh_.nodes[j]) / mesh_.width(j);
    Vec v(m + 1), d(m + 1);
    lagrange_basis(m, z, v, d);
    return values_.middleRows(j * m, m + 1).transpose() * v;
}

Vec MeshedSolution::derivative(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) throw OutOfRange("evaluation time outside [0, 1]");
    const int j = mesh_.locate(t);
    const int m = mesh_.degree;
    const double h = mesh_.width(j);
    const double z = (t - mesh_.nodes[j]) / h;
    Vec v(m + 1), d(m + 1);
    lagrange_basis(m, z, v, d);
    return values_.middleRows(j * m, m + 1).transpose() * d / h;
}

MeshedSolution MeshedSolution::interpolate_to(const Mesh& target) const {
    MeshedSolution out(target, dim_, scalars_);
    for (int k = 0; k < target.points(); ++k) {
        out.values_.row(k) = evaluate(target.point_time(k)).transpose();
    }
    return out;
}

MeshedSolution MeshedSolution::slice(int first, int count) const {
    if (first < 0 || first + count > dim_) throw DimensionMismatch("slice outside solution dimension");
    MeshedSolution out(mesh_, count, scalars_);
    out.values_ = values_.middleCols(first, count);
    return out;
}

double integral_inner(const MeshedSolution& a, const MeshedSolution& b) {
    if (a.mesh().nodes != b.mesh().nodes || a.mesh().degree != b.mesh().degree || a.dim() != b.dim()) {
        throw DimensionMismatch("inner product of solutions on different meshes");
    }
    const auto& sc = CollocationScheme::get(a.mesh().degree);
    const int m = a.mesh().degree;
    double sum = 0.0;
    for (int j = 0; j < a.mesh().intervals(); ++j) {
        const double h = a.mesh().width(j);
        const Mat ya = sc.quad_basis * a.values().middleRows(j * m, m + 1);
        const Mat yb = sc.quad_basis * b.values().middleRows(j * m, m + 1);
        sum += h * (sc.quad_weights.transpose() * (ya.cwiseProduct(yb)).rowwise().sum())(0);
    }
    return sum;
}

double combined_inner(const MeshedSolution& a, const MeshedSolution& b, const std::vector<int>& free) {
    double sum = integral_inner(a, b);
    for (int i : free) sum += a.scalars().values(i) * b.scalars().values(i);
    return sum;
}

// ---------------------------------------------------------------------------
// Problem

void BoundaryValueProblem::integrand(const IntegrandPoint&, const Vec&, Eigen::Ref<Vec>, Mat*, Mat*) const {}

void BoundaryValueProblem::check_well_posed(int num_free, bool with_arclength) const {
    const int rows = num_boundary() + num_integral() + (with_arclength ? 1 : 0);
    if (rows != dim() + num_free) {
        throw DimensionMismatch("ill-posed BVP: " + std::to_string(num_boundary()) + " boundary + " +
                                std::to_string(num_integral()) + " integral constraints" +
                                (with_arclength ? " + arclength" : "") + " != dim " +
                                std::to_string(dim()) + " + " + std::to_string(num_free) + " free scalars");
    }
}

// ---------------------------------------------------------------------------
// Dense partial-pivot elimination of the leading k columns.

namespace {

void eliminate_leading(Mat& a, int k, std::vector<int>& piv, int& sign, double& log_abs) {
    const int rows = static_cast<int>(a.rows());
    const int cols = static_cast<int>(a.cols());
    piv.resize(k);
    for (int i = 0; i < k; ++i) {
        Eigen::Index p;
        a.col(i).segment(i, rows - i).cwiseAbs().maxCoeff(&p);
        p += i;
        piv[i] = static_cast<int>(p);
        if (p != i) {
            a.row(i).swap(a.row(p));
            sign = -sign;
        }
        const double pivot = a(i, i);
        if (pivot == 0.0 || !std::isfinite(pivot)) {
            throw RankDeficient("zero pivot in collocation Jacobian");
        }
        if (pivot < 0.0) sign = -sign;
        log_abs += std::log(std::abs(pivot));
        const int below = rows - i - 1;
        if (below > 0) {
            a.col(i).tail(below) /= pivot;
            if (cols - i - 1 > 0) {
                a.bottomRightCorner(below, cols - i - 1).noalias() -=
                    a.col(i).tail(below) * a.row(i).tail(cols - i - 1);
            }
        }
    }
}

void apply_elimination(const Mat& lu, const std::vector<int>& piv, Eigen::Ref<Vec> b) {
    const int k = static_cast<int>(piv.size());
    const int rows = static_cast<int>(lu.rows());
    for (int i = 0; i < k; ++i) {
        if (piv[i] != i) std::swap(b(i), b(piv[i]));
    }
    for (int i = 0; i < k; ++i) {
        const int below = rows - i - 1;
        if (below > 0) b.tail(below).noalias() -= lu.col(i).tail(below) * b(i);
    }
}

// Z = W U^{-1} for the k x k upper-triangular leading block of lu.
Mat right_divide_upper(const Mat& w, const Mat& lu, int k) {
    const auto u = lu.topLeftCorner(k, k).triangularView<Eigen::Upper>();
    return u.transpose().solve(w.transpose()).transpose();
}

}  // namespace

Vec BlockFactorization::solve(const Vec& b) const {
    if (!square) throw RankDeficient("factorization is not of a square system");
    const int k = (m - 1) * n;
    const int nI = nint;
    const int colloc_rows = intervals * m * n;
    Vec bint = b.segment(colloc_rows + nbc, nI);

    std::vector<Vec> top_interval(intervals);
    std::vector<Vec> top_node(std::max(intervals - 1, 0));
    Vec acc;
    for (int j = 0; j < intervals; ++j) {
        const auto& blk = interval_blocks[j];
        Vec g = b.segment(j * m * n, m * n);
        apply_elimination(blk.lu, blk.piv, g);
        top_interval[j] = g.head(k);
        if (nI > 0) bint.noalias() -= blk.z * top_interval[j];
        if (j == 0) {
            acc = g.tail(n);
        } else {
            const auto& red = reduction_blocks[j - 1];
            Vec st(2 * n);
            st << acc, g.tail(n);
            apply_elimination(red.lu, red.piv, st);
            if (nI > 0) bint.noalias() -= red.z * st.head(n);
            acc = st.tail(n);
            top_node[j - 1] = st.head(n);
        }
    }
    Vec rhs(2 * n + np);
    rhs << acc, b.segment(colloc_rows, nbc), bint;
    const Vec x = final_lu.solve(rhs);
    const Vec y0 = x.head(n);
    const Vec yN = x.segment(n, n);
    const Vec dp = x.tail(np);

    std::vector<Vec> nodes(intervals + 1);
    nodes[0] = y0;
    nodes[intervals] = yN;
    for (int j = intervals - 1; j >= 1; --j) {
        const auto& red = reduction_blocks[j - 1];
        Vec r = top_node[j - 1];
        r.noalias() -= red.lu.block(0, n, n, n) * y0;
        r.noalias() -= red.lu.block(0, 2 * n, n, n) * nodes[j + 1];
        if (np > 0) r.noalias() -= red.lu.block(0, 3 * n, n, np) * dp;
        nodes[j] = red.lu.topLeftCorner(n, n).triangularView<Eigen::Upper>().solve(r);
    }

    const int pts = intervals * m + 1;
    Vec dx(pts * n + np);
    for (int j = 0; j < intervals; ++j) {
        const auto& blk = interval_blocks[j];
        Vec r = top_interval[j];
        r.noalias() -= blk.lu.block(0, k, k, n) * nodes[j];
        r.noalias() -= blk.lu.block(0, k + n, k, n) * nodes[j + 1];
        if (np > 0) r.noalias() -= blk.lu.block(0, k + 2 * n, k, np) * dp;
        const Vec interior = blk.lu.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(r);
        dx.segment(j * m * n, n) = nodes[j];
        dx.segment(j * m * n + n, k) = interior;
    }
    dx.segment(intervals * m * n, n) = nodes[intervals];
    dx.tail(np) = dp;
    return dx;
}

// ---------------------------------------------------------------------------
// DiscreteSystem

DiscreteSystem::DiscreteSystem(const BoundaryValueProblem& problem, SystemSpec spec)
    : problem_(&problem), spec_(std::move(spec)) {
    if (!spec_.collocation_only) {
        problem_->check_well_posed(static_cast<int>(spec_.free.size()), spec_.arclength.has_value());
    }
}

int DiscreteSystem::num_rows(const MeshedSolution& s) const {
    const int colloc = s.mesh().intervals() * s.mesh().degree * s.dim();
    if (spec_.collocation_only) return colloc;
    return colloc + problem_->num_boundary() + problem_->num_integral() + (spec_.arclength ? 1 : 0);
}

Vec DiscreteSystem::residual(const MeshedSolution& s) const {
    Vec r;
    assemble(s, r, nullptr);
    return r;
}

Vec DiscreteSystem::linearize(const MeshedSolution& s, BlockFactorization& fact) const {
    Vec r;
    assemble(s, r, &fact);
    return r;
}

void DiscreteSystem::apply_update(MeshedSolution& s, const Vec& dx, double scale) const {
    const int n = s.dim();
    const int pts = s.mesh().points();
    for (int k = 0; k < pts; ++k) {
        s.values().row(k) += scale * dx.segment(k * n, n).transpose();
    }
    for (std::size_t i = 0; i < spec_.free.size(); ++i) {
        s.scalars().values(spec_.free[i]) += scale * dx(pts * n + static_cast<int>(i));
    }
}

void DiscreteSystem::assemble(const MeshedSolution& s, Vec& res, BlockFactorization* fact) const {
    const auto& prob = *problem_;
    const int n = prob.dim();
    if (s.dim() != n) throw DimensionMismatch("solution dimension does not match problem");
    const Mesh& mesh = s.mesh();
    const int m = mesh.degree;
    const int N = mesh.intervals();
    const int pts = mesh.points();
    const auto& free = spec_.free;
    const int np = static_cast<int>(free.size());
    const bool colloc_only = spec_.collocation_only;
    const int nbc = colloc_only ? 0 : prob.num_boundary();
    const int nint_prob = colloc_only ? 0 : prob.num_integral();
    const bool arc = !colloc_only && spec_.arclength.has_value();
    const int nI = nint_prob + (arc ? 1 : 0);
    const int npar = s.scalars().size();
    if (npar != static_cast<int>(prob.parameter_names().size())) {
        throw DimensionMismatch("solution scalars do not match problem parameters");
    }
    const Vec& par = s.scalars().values;
    const MeshedSolution& ref = spec_.reference ? *spec_.reference : s;
    const auto same_mesh = [&](const MeshedSolution& o) {
        return o.mesh().degree == m && o.mesh().nodes == mesh.nodes && o.dim() == n;
    };
    if (nint_prob > 0 && !same_mesh(ref)) throw DimensionMismatch("reference solution on a different mesh");
    if (arc && (!same_mesh(*spec_.arclength->previous) || !same_mesh(*spec_.arclength->tangent))) {
        throw DimensionMismatch("arclength data on a different mesh");
    }

    const auto& sc = CollocationScheme::get(m);
    const int colloc_rows = N * m * n;
    res.setZero(colloc_rows + nbc + nI);

    const int k = (m - 1) * n;
    const int local_cols = (m + 1) * n + np;
    // Dense integral rows over all storage values and free scalars.
    Mat wfull;
    Mat wpar;
    if (fact) {
        fact->n = n;
        fact->m = m;
        fact->intervals = N;
        fact->np = np;
        fact->nbc = nbc;
        fact->nint = nI;
        fact->interval_blocks.assign(N, {});
        fact->reduction_blocks.assign(std::max(N - 1, 0), {});
        fact->det_sign = 1;
        fact->log_abs_det = 0.0;
        fact->square = false;
        wfull.setZero(nI, pts * n);
        wpar.setZero(nI, np);
    }

    // Column offset of storage point l within the local block (interior first).
    const auto local_col = [&](int l) {
        if (l == 0) return k;
        if (l == m) return k + n;
        return (l - 1) * n;
    };

    Vec f(n);
    Mat dfdy(n, n), dfdp(n, npar);
    Vec g(std::max(nint_prob, 1));
    Mat dgdy(std::max(nint_prob, 1), n), dgdp(std::max(nint_prob, 1), npar);
    Vec y(n), dy(n);

    for (int j = 0; j < N; ++j) {
        const double h = mesh.width(j);
        const double t0 = mesh.nodes[j];
        const auto local = s.values().middleRows(j * m, m + 1);
        Mat* lu = nullptr;
        if (fact) {
            fact->interval_blocks[j].lu.setZero(m * n, local_cols);
            lu = &fact->interval_blocks[j].lu;
        }
        for (int q = 0; q < m; ++q) {
            const double t = t0 + h * sc.colloc_nodes(q);
            y.noalias() = local.transpose() * sc.colloc_basis.row(q).transpose();
            dy.noalias() = local.transpose() * sc.colloc_dbasis.row(q).transpose() / h;
            prob.rhs(t, y, par, f, fact ? &dfdy : nullptr, fact ? &dfdp : nullptr);
            res.segment(j * m * n + q * n, n) = dy - f;
            if (fact) {
                for (int l = 0; l <= m; ++l) {
                    auto blk = lu->block(q * n, local_col(l), n, n);
                    blk = -sc.colloc_basis(q, l) * dfdy;
                    blk.diagonal().array() += sc.colloc_dbasis(q, l) / h;
                }
                for (int i = 0; i < np; ++i) {
                    lu->block(q * n, (m + 1) * n + i, n, 1) = -dfdp.col(free[i]);
                }
            }
        }
        if (nI > 0) {
            const auto rlocal = ref.values().middleRows(j * m, m + 1);
            for (int q = 0; q <= m; ++q) {
                const double t = t0 + h * sc.quad_nodes(q);
                const double wq = h * sc.quad_weights(q);
                y.noalias() = local.transpose() * sc.quad_basis.row(q).transpose();
                if (nint_prob > 0) {
                    const Vec ry = rlocal.transpose() * sc.quad_basis.row(q).transpose();
                    const Vec rdy = rlocal.transpose() * sc.quad_dbasis.row(q).transpose() / h;
                    IntegrandPoint pt{t, y, ry, rdy};
                    prob.integrand(pt, par, g, fact ? &dgdy : nullptr, fact ? &dgdp : nullptr);
                    res.segment(colloc_rows + nbc, nint_prob) += wq * g.head(nint_prob);
                    if (fact) {
                        for (int l = 0; l <= m; ++l) {
                            wfull.block(0, (j * m + l) * n, nint_prob, n) +=
                                (wq * sc.quad_basis(q, l)) * dgdy.topRows(nint_prob);
                        }
                        for (int i = 0; i < np; ++i) {
                            wpar.block(0, i, nint_prob, 1) += wq * dgdp.block(0, free[i], nint_prob, 1);
                        }
                    }
                }
                if (arc) {
                    const auto& al = *spec_.arclength;
                    const Vec y0 = al.previous->values().middleRows(j * m, m + 1).transpose() *
                                   sc.quad_basis.row(q).transpose();
                    const Vec ty = al.tangent->values().middleRows(j * m, m + 1).transpose() *
                                   sc.quad_basis.row(q).transpose();
                    res(colloc_rows + nbc + nint_prob) += wq * (y - y0).dot(ty);
                    if (fact) {
                        for (int l = 0; l <= m; ++l) {
                            wfull.block(nint_prob, (j * m + l) * n, 1, n) +=
                                (wq * sc.quad_basis(q, l)) * ty.transpose();
                        }
                    }
                }
            }
        }
    }

    Mat d0, d1, dp;
    if (nbc > 0) {
        Vec r(nbc);
        d0.setZero(nbc, n);
        d1.setZero(nbc, n);
        dp.setZero(nbc, npar);
        prob.boundary(s.at_start(), s.at_end(), par, r, fact ? &d0 : nullptr, fact ? &d1 : nullptr,
                      fact ? &dp : nullptr);
        res.segment(colloc_rows, nbc) = r;
    }
    if (arc) {
        const auto& al = *spec_.arclength;
        double sum = 0.0;
        for (int i = 0; i < np; ++i) {
            const int idx = free[i];
            const double tp = al.tangent->scalars().values(idx);
            sum += (par(idx) - al.previous->scalars().values(idx)) * tp;
            if (fact) wpar(nint_prob, i) += tp;
        }
        res(colloc_rows + nbc + nint_prob) += sum - al.step;
    }

    if (!fact) return;

    // Condensation of interior storage points.
    int sign = 1;
    double log_abs = 0.0;
    for (int j = 0; j < N; ++j) {
        auto& blk = fact->interval_blocks[j];
        eliminate_leading(blk.lu, k, blk.piv, sign, log_abs);
        if (nI > 0) {
            Mat wi(nI, k);
            for (int l = 1; l < m; ++l) {
                wi.middleCols((l - 1) * n, n) = wfull.middleCols((j * m + l) * n, n);
            }
            blk.z = right_divide_upper(wi, blk.lu, k);
            wfull.middleCols(j * m * n, n).noalias() -= blk.z * blk.lu.block(0, k, k, n);
            wfull.middleCols((j + 1) * m * n, n).noalias() -= blk.z * blk.lu.block(0, k + n, k, n);
            if (np > 0) wpar.noalias() -= blk.z * blk.lu.block(0, k + 2 * n, k, np);
        }
    }

    // Sequential elimination of mesh nodes 1..N-1.
    Mat acc_p = fact->interval_blocks[0].lu.block(k, k, n, n);
    Mat acc_q = fact->interval_blocks[0].lu.block(k, k + n, n, n);
    Mat acc_s = fact->interval_blocks[0].lu.block(k, k + 2 * n, n, np);
    for (int j = 1; j < N; ++j) {
        auto& red = fact->reduction_blocks[j - 1];
        const auto& cb = fact->interval_blocks[j].lu;
        red.lu.setZero(2 * n, 3 * n + np);
        red.lu.block(0, 0, n, n) = acc_q;
        red.lu.block(0, n, n, n) = acc_p;
        red.lu.block(0, 3 * n, n, np) = acc_s;
        red.lu.block(n, 0, n, n) = cb.block(k, k, n, n);
        red.lu.block(n, 2 * n, n, n) = cb.block(k, k + n, n, n);
        red.lu.block(n, 3 * n, n, np) = cb.block(k, k + 2 * n, n, np);
        eliminate_leading(red.lu, n, red.piv, sign, log_abs);
        if (nI > 0) {
            red.z = right_divide_upper(wfull.middleCols(j * m * n, n), red.lu, n);
            wfull.middleCols(0, n).noalias() -= red.z * red.lu.block(0, n, n, n);
            wfull.middleCols((j + 1) * m * n, n).noalias() -= red.z * red.lu.block(0, 2 * n, n, n);
            if (np > 0) wpar.noalias() -= red.z * red.lu.block(0, 3 * n, n, np);
        }
        acc_p = red.lu.block(n, n, n, n);
        acc_q = red.lu.block(n, 2 * n, n, n);
        acc_s = red.lu.block(n, 3 * n, n, np);
    }
    fact->boundary_relation.resize(n, 2 * n + np);
    fact->boundary_relation << acc_p, acc_q, acc_s;
    fact->det_sign = sign;
    fact->log_abs_det = log_abs;

    if (colloc_only) return;
    const int size = 2 * n + np;
    if (n + nbc + nI != size) return;
    fact->square = true;
    Mat& fin = fact->final_matrix;
    fin.setZero(size, size);
    fin.topRows(n) = fact->boundary_relation;
    if (nbc > 0) {
        fin.block(n, 0, nbc, n) = d0;
        fin.block(n, n, nbc, n) = d1;
        for (int i = 0; i < np; ++i) fin.block(n, 2 * n + i, nbc, 1) = dp.col(free[i]);
    }
    if (nI > 0) {
        fin.block(n + nbc, 0, nI, n) = wfull.middleCols(0, n);
        fin.block(n + nbc, n, nI, n) = wfull.middleCols(N * m * n, n);
        fin.block(n + nbc, 2 * n, nI, np) = wpar;
    }
    // Near-singular pivots must still be inverted: inverse iteration relies on the blow-up.
    fact->final_lu.setThreshold(std::numeric_limits<double>::min());
    fact->final_lu.compute(fin);
    const double det = fact->final_lu.determinant();
    if (det == 0.0 || !std::isfinite(det)) {
        fact->det_sign = 0;
    } else {
        fact->det_sign *= det > 0 ? 1 : -1;
        // accumulate |det| from the LU diagonal to avoid overflow
        const auto& lum = fact->final_lu.matrixLU();
        for (int i = 0; i < size; ++i) fact->log_abs_det += std::log(std::abs(lum(i, i)));
    }
}

// ---------------------------------------------------------------------------
// Newton / chord

double correction_norm(const MeshedSolution& s, const Vec& dx, const std::vector<int>& free) {
    const int n = s.dim();
    const int pts = s.mesh().points();
    const double ymax = s.values().cwiseAbs().maxCoeff();
    double norm = dx.head(pts * n).cwiseAbs().maxCoeff() / (1.0 + ymax);
    for (std::size_t i = 0; i < free.size(); ++i) {
        const double p = s.scalars().values(free[i]);
        norm = std::max(norm, std::abs(dx(pts * n + static_cast<int>(i))) / (1.0 + std::abs(p)));
    }
    return norm;
}

NewtonResult newton_chord_solve(const DiscreteSystem& system, MeshedSolution x, const NewtonOptions& opts) {
    if (!x.values().allFinite() || !x.scalars().values.allFinite()) {
        throw NoConvergence(0, INFINITY, "non-finite initial guess");
    }
    BlockFactorization fact;
    bool refactor = true;
    double previous = INFINITY;
    double first = INFINITY;
    NewtonResult out;
    for (int it = 1; it <= opts.max_iter; ++it) {
        Vec res;
        try {
            res = refactor ? system.linearize(x, fact) : system.residual(x);
        } catch (const RankDeficient& e) {
            throw NoConvergence(it, INFINITY, std::string("singular Jacobian: ") + e.what());
        } catch (const CollisionError& e) {
            throw NoConvergence(it, INFINITY, std::string("collision during iteration: ") + e.what());
        }
        if (!res.allFinite()) throw NoConvergence(it, INFINITY, "non-finite residual");
        if (!fact.square) throw DimensionMismatch("collocation system is not square");
        const Vec dx = fact.solve(-res);
        if (!dx.allFinite()) throw NoConvergence(it, INFINITY, "non-finite Newton correction");
        const double cn = correction_norm(x, dx, system.spec().free);
        if (it == 1) first = cn;
        system.apply_update(x, dx);
        out.residual_norm = res.cwiseAbs().maxCoeff();
        if (cn <= opts.tol) {
            out.solution = std::move(x);
            out.iterations = it;
            out.correction_norm = cn;
            out.det_sign = fact.det_sign;
            out.log_abs_det = fact.log_abs_det;
            return out;
        }
        if (cn > opts.divergence_factor * std::max(first, opts.tol)) {
            throw NoConvergence(it, cn, "Newton iteration diverged");
        }
        refactor = it < opts.newton_iterations || cn > 0.1 * previous;
        previous = cn;
    }
    throw NoConvergence(opts.max_iter, previous, "Newton/chord iteration did not converge");
}

// ---------------------------------------------------------------------------
// Mesh adaptation

namespace {

// m-th derivative of the local polynomial on each interval (one row per interval).
Mat highest_derivatives(const MeshedSolution& s) {
    const Mesh& mesh = s.mesh();
    const int m = mesh.degree;
    const int N = mesh.intervals();
    Vec coef(m + 1);
    double binom = 1.0;
    for (int i = 0; i <= m; ++i) {
        coef(i) = ((m - i) % 2 == 0 ? 1.0 : -1.0) * binom;
        binom = binom * (m - i) / (i + 1);
    }
    Mat d(N, s.dim());
    for (int j = 0; j < N; ++j) {
        const double step = mesh.width(j) / m;
        d.row(j) = coef.transpose() * s.values().middleRows(j * m, m + 1) / std::pow(step, m);
    }
    return d;
}

// |y^(m+1)| estimate per interval from jumps of the m-th derivative.
Vec next_derivative_norm(const MeshedSolution& s) {
    const Mesh& mesh = s.mesh();
    const int N = mesh.intervals();
    const Mat d = highest_derivatives(s);
    const bool periodic = (s.at_start() - s.at_end()).cwiseAbs().maxCoeff() <=
                          1e-6 * (1.0 + s.values().cwiseAbs().maxCoeff());
    Vec jump(N + 1);
    for (int j = 0; j <= N; ++j) {
        int left = j - 1, right = j;
        if (j == 0 || j == N) {
            if (periodic) {
                left = N - 1;
                right = 0;
            } else {
                left = (j == 0) ? 0 : N - 2;
                right = (j == 0) ? 1 : N - 1;
            }
        }
        if (N == 1) {
            jump(j) = 0.0;
            continue;
        }
        const double span = 0.5 * (mesh.width(left) + mesh.width(right));
        jump(j) = (d.row(right) - d.row(left)).norm() / span;
    }
    Vec out(N);
    for (int j = 0; j < N; ++j) out(j) = 0.5 * (jump(j) + jump(j + 1));
    return out;
}

}  // namespace

Vec mesh_error_monitor(const MeshedSolution& s) {
    const Vec deriv = next_derivative_norm(s);
    const int m = s.mesh().degree;
    Vec mon(deriv.size());
    for (int j = 0; j < deriv.size(); ++j) {
        mon(j) = s.mesh().width(j) * std::pow(deriv(j), 1.0 / (m + 1));
    }
    return mon;
}

Vec local_error_estimate(const MeshedSolution& s) {
    const Vec deriv = next_derivative_norm(s);
    const int m = s.mesh().degree;
    Vec est(deriv.size());
    for (int j = 0; j < deriv.size(); ++j) est(j) = std::pow(s.mesh().width(j), m + 1) * deriv(j);
    return est;
}

Mesh equidistributed_mesh(const MeshedSolution& s, int intervals) {
    const Mesh& mesh = s.mesh();
    const int N = mesh.intervals();
    const int M = intervals > 0 ? intervals : N;
    const Vec mon = mesh_error_monitor(s);
    Vec density(N);
    for (int j = 0; j < N; ++j) density(j) = mon(j) / mesh.width(j);
    const double mean = mon.sum();
    if (!(mean > 1e-300) || !std::isfinite(mean)) return mesh;
    // floor keeps smooth stretches from being starved of intervals
    const double floor = 0.02 * mean;
    for (int j = 0; j < N; ++j) density(j) = std::max(density(j), floor);
    std::vector<double> cum(N + 1, 0.0);
    for (int j = 0; j < N; ++j) cum[j + 1] = cum[j] + density(j) * mesh.width(j);
    const double total = cum[N];
    Mesh out;
    out.degree = mesh.degree;
    out.nodes.resize(M + 1);
    out.nodes[0] = 0.0;
    out.nodes[M] = 1.0;
    int j = 0;
    for (int i = 1; i < M; ++i) {
        const double target = total * i / M;
        while (j < N - 1 && cum[j + 1] < target) ++j;
        const double frac = (target - cum[j]) / (cum[j + 1] - cum[j]);
        out.nodes[i] = mesh.nodes[j] + frac * mesh.width(j);
    }
    for (int i = 1; i <= M; ++i) {
        if (!(out.nodes[i] > out.nodes[i - 1])) return mesh;
    }
    return out;
}

MeshedSolution adapt_mesh(const MeshedSolution& s) {
    MeshedSolution current = s;
    auto ratio = [](const MeshedSolution& x) {
        const Vec mon = mesh_error_monitor(x);
        const double mean = mon.mean();
        return mean > 0.0 ? mon.maxCoeff() / mean : 1.0;
    };
    double best = ratio(current);
    for (int pass = 0; pass < 3; ++pass) {
        const Mesh next = equidistributed_mesh(current);
        if (next.nodes == current.mesh().nodes) break;
        MeshedSolution cand = current.interpolate_to(next);
        const double r = ratio(cand);
        if (pass > 0 && r >= best) break;
        current = std::move(cand);
        best = r;
    }
    return current;
}

// ---------------------------------------------------------------------------
// Monodromy

MonodromyResult monodromy(const BoundaryValueProblem& problem, const MeshedSolution& s) {
    SystemSpec spec;
    spec.collocation_only = true;
    DiscreteSystem sys(problem, spec);
    BlockFactorization fact;
    sys.linearize(s, fact);
    const int n = s.dim();
    const Mat p = fact.boundary_relation.leftCols(n);
    const Mat q = fact.boundary_relation.middleCols(n, n);
    MonodromyResult out;
    out.matrix = -q.fullPivLu().solve(p);
    Eigen::EigenSolver<Mat> es(out.matrix, false);
    out.multipliers = es.eigenvalues();
    std::vector<std::complex<double>> mu(out.multipliers.data(), out.multipliers.data() + n);
    std::sort(mu.begin(), mu.end(), [](auto a, auto b) {
        if (std::abs(a) != std::abs(b)) return std::abs(a) > std::abs(b);
        return a.imag() > b.imag();
    });
    for (int i = 0; i < n; ++i) out.multipliers(i) = mu[i];
    out.ill_conditioned = std::abs(mu.front()) > 1e12;
    return out;
}

}  // namespace cr3bp
