#pragma once

// Pseudo-arclength continuation of collocation BVP solutions.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cr3bp/collocation.hpp"

namespace cr3bp {

struct ContinuationSettings {
    double ds0 = 1e-2;
    double ds_min = 1e-8;
    double ds_max = 0.5;
    int max_steps = 500;
    NewtonOptions newton{};
    bool detect_branch_points = true;
    int adapt_every = 0;       // mesh adaptation period in steps, 0 = never
    int store_every = 1;       // keep every k-th accepted solution in the result, 0 = none
    double locate_fraction = 1e-3;  // branch-point localization relative to the step
};

/// Step-size rule after a successful step: x1.3 for <= 3 iterations, x1 for <= 5, x0.5 otherwise,
/// clamped to [ds_min, ds_max] in magnitude.
double adapt_step(double ds, int newton_iterations, const ContinuationSettings& settings);
/// Step after a failed step; throws StepSizeUnderflow below ds_min.
double reduce_step(double ds, const ContinuationSettings& settings);

struct ContinuationFrame {
    MeshedSolution previous;
    MeshedSolution tangent;   // function part plus scalar part (entries of fixed scalars are zero)
    double step = 0.0;
    std::optional<MeshedSolution> phase_reference;  // used instead of `previous` for integral constraints
};

enum class EventKind { Fold, BranchPoint, UserFunctionZero, NoConvergenceStop };
const char* event_name(EventKind kind);

struct BranchEvent {
    EventKind kind = EventKind::UserFunctionZero;
    std::string label;
    int step = 0;                 // index of the accepted step that closed the bracket
    MeshedSolution location;
    MeshedSolution tangent;
    MeshedSolution reference;     // integral reference used at the location
    double monitor_before = 0.0;
    double monitor_after = 0.0;
    double monitor_at = 0.0;
};

/// Scalar test function evaluated on (solution, tangent); zeros become events.
struct Monitor {
    std::string name;
    EventKind kind = EventKind::UserFunctionZero;
    std::function<double(const MeshedSolution&, const MeshedSolution&)> fn;
    bool refine = true;
    int stop_at = 0;   // stop the run at the k-th zero (0 = never)
};

struct StepRecord {
    int index = 0;
    double ds = 0.0;
    double arclength = 0.0;
    int iterations = 0;
    int det_sign = 0;
    std::vector<std::string> events;
};

struct ContinuationResult {
    std::vector<MeshedSolution> solutions;   // accepted solutions (subject to store_every)
    std::vector<StepRecord> records;
    std::vector<BranchEvent> events;
    ContinuationFrame last;                  // frame positioned at the final solution
    bool underflow = false;
    bool stopped = false;                    // a stop monitor or the stop predicate ended the run
};

struct RunHooks {
    std::vector<Monitor> monitors;
    std::function<bool(const MeshedSolution&)> stop;   // return true to end the run after this solution
    std::function<void(const MeshedSolution&, const StepRecord&)> on_step;
    std::function<MeshedSolution(const MeshedSolution&)> remesh;  // defaults to adapt_mesh
    // A converged step failing `resolved` is retried from `refine(previous)` while that changes the mesh.
    std::function<bool(const MeshedSolution&)> resolved;
    std::function<MeshedSolution(const MeshedSolution&)> refine;
};

class Continuation {
public:
    Continuation(const BoundaryValueProblem& problem, std::vector<int> free, ContinuationSettings settings = {});

    const ContinuationSettings& settings() const { return settings_; }
    const std::vector<int>& free() const { return free_; }
    const BoundaryValueProblem& problem() const { return *problem_; }

    /// Normalized null vector of the linearized system at s, oriented along `previous`.
    /// `reference` is the integral reference (defaults to s). det_sign receives the sign of the
    /// Jacobian bordered by `previous`.
    MeshedSolution compute_tangent(const MeshedSolution& s, const MeshedSolution& previous,
                                   const MeshedSolution* reference = nullptr, int* det_sign = nullptr,
                                   double* log_abs_det = nullptr) const;

    /// Frame at a converged solution; `direction` orients (and seeds) the tangent.
    ContinuationFrame start(const MeshedSolution& s, const MeshedSolution& direction, double step) const;

    /// Predictor-corrector step of size ds from frame; throws StepFailure.
    NewtonResult step(const ContinuationFrame& frame, double ds) const;

    /// Repeated steps with step-size control, event detection and optional mesh adaptation.
    ContinuationResult run(ContinuationFrame frame, const RunHooks& hooks = {}) const;

    /// Frame on the bifurcating branch at a branch point event.
    ContinuationFrame branch_switch(const BranchEvent& event, double step) const;

    /// Tangent-like object with zero function part and zero scalars.
    MeshedSolution zero_like(const MeshedSolution& s) const;
    /// Scale a tangent to unit combined norm.
    void normalize(MeshedSolution& t) const;

private:
    SystemSpec make_spec(const MeshedSolution* reference, const MeshedSolution* previous,
                         const MeshedSolution* tangent, double ds) const;
    MeshedSolution predictor(const ContinuationFrame& frame, double ds) const;
    MeshedSolution vector_to_tangent(const MeshedSolution& like, const Vec& x) const;

    const BoundaryValueProblem* problem_;
    std::vector<int> free_;
    ContinuationSettings settings_;
};

}  // namespace cr3bp
