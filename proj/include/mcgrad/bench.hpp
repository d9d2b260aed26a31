#pragma once

// Timing helpers: estimator wall time and the batched-replay cost
// coefficients K_F, K_R.
//
// With t(F) the scalar forward time per path and t(F_v) the batched forward
// time per path (one width-c application divided by c),
//     K_F = c * t(F_v) / t(F),
// so K_F == 1 means one width-c application costs exactly one scalar replay.
// K_R is the same for reverse sweeps.

#include "mcgrad/estimators.hpp"
#include "mcgrad/paths.hpp"
#include "mcgrad/tape.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mcgrad {

struct SpeedupSample {
    double t_f = 0.0;   // seconds per path, scalar forward
    double t_fv = 0.0;  // seconds per path, batched forward
    double t_r = 0.0;
    double t_rv = 0.0;
    double k_f = 1.0;
    double k_r = 1.0;
};

struct SpeedupReport {
    std::size_t batch_width = 1;
    std::vector<SpeedupSample> samples;
    double k_f_mean = 1.0;
    double k_f_var = 0.0;
    double k_r_mean = 1.0;
    double k_r_var = 0.0;
    /// True for c = 1, where K_F = K_R = 1 by definition and nothing is timed.
    bool degenerate = false;
    std::string note;
};

SpeedupReport measure_speedup(const Tape& tape, std::span<const double> params,
                              const PathBatch& paths, std::size_t batch_width,
                              std::size_t repeats = 5);

struct TimedEstimate {
    GradientEstimate estimate;
    double median_seconds = 0.0;
};

/// Run the batched estimator `repeats` times, return the first result and
/// the median wall time.
TimedEstimate timed_estimate(Algorithm alg, const Tape& tape, std::span<const double> params,
                             const PathBatch& paths, std::span<const double> targets,
                             const EstimatorConfig& config, std::size_t repeats = 3);

} // namespace mcgrad
