#pragma once

// Bound-constrained L-BFGS (projection onto lower bounds) and the
// volatility-curve calibration driver built on it.

#include "mcgrad/estimators.hpp"
#include "mcgrad/model.hpp"
#include "mcgrad/paths.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

namespace mcgrad {

struct LbfgsConfig {
    std::size_t memory = 8;
    std::size_t max_iter = 100;
    double grad_norm_tol = 1e-8;
    double c1 = 1e-4;
    double c2 = 0.9;
    bool wolfe = true;
    std::size_t max_backtracks = 20;
    /// Applied to every coordinate by projection after each step.
    double lower_bound = -std::numeric_limits<double>::infinity();
    /// Length of the very first trial step (in parameter space). 0 means a
    /// unit step along -g.
    double initial_step_length = 0.0;
    /// Re-evaluate the objective at the start of every iteration with that
    /// iteration's index as `step`, so stochastic objectives see a fresh
    /// sample per iteration that stays frozen during its line search.
    bool refresh_each_step = false;

    void validate() const;
};

enum class Termination {
    GradientTolerance,
    MaxIterations,
    LineSearchFailure,
    NonFiniteObjective,
};

std::string_view termination_name(Termination t);

struct Evaluation {
    double value = 0.0;
    std::vector<double> grad;
    std::size_t f_evals = 0;
    std::size_t r_evals = 0;
};

/// Objective and gradient at x. `step` is the iteration the evaluation
/// belongs to.
using Objective = std::function<Evaluation(std::span<const double> x, std::size_t step)>;

struct IterationRecord {
    std::size_t iter = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
    std::vector<double> params;
    std::size_t f_evals = 0;  // cumulative
    std::size_t r_evals = 0;  // cumulative
    double millis = 0.0;      // cumulative wall time
};

/// Record 0 is the starting point, record k the k-th accepted iterate.
struct CalibrationTrace {
    std::vector<IterationRecord> records;
    Termination status = Termination::MaxIterations;
};

struct LbfgsResult {
    std::vector<double> x;
    CalibrationTrace trace;
};

LbfgsResult lbfgs_minimize(const Objective& objective, std::span<const double> x0,
                           const LbfgsConfig& config = {});

struct CalibrationConfig {
    LbfgsConfig lbfgs;
    EstimatorConfig estimator;
    GeneratorId generator = GeneratorId::Philox4x32_10;
    double sigma_min = 1e-4;
    /// Use the width-c replay (estimator.batch_width); otherwise scalar.
    bool batched = true;
};

/// Defaults used by the CLI: fresh paths per iteration, 0.1 first step.
CalibrationConfig default_calibration_config();

struct CalibrationResult {
    VolCurve curve;
    CalibrationTrace trace;
};

/// Fit the knot vols of `initial` to the quotes in `spec`. Iteration k draws
/// its paths from derive_seed(seed, k).
CalibrationResult calibrate(const MarketSpec& spec, const VolCurve& initial, Algorithm alg,
                            std::size_t n_paths, std::uint64_t seed,
                            const CalibrationConfig& config = default_calibration_config());

} // namespace mcgrad
