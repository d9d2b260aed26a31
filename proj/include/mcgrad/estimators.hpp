#pragma once

// Monte-Carlo estimators of dG/da_k for G = 0.5 * sum_i (E y_i - C_i)^2.
//
// All three reduce to averaging reverse sweeps R(w_j; lambda_j) over paths,
// and differ only in the seed lambda_j:
//
//   TwoPass      lambda_i = Ey_i - C_i, Ey from a forward-only first pass.
//                Per path: 2 forward + 1 reverse.
//   LaggedPath   lambda_i = y_i(w_{j-1}) - C_i, reusing the previous path's
//                forward. Per path: 1 forward + 1 reverse.
//   RunningMean  lambda_i = S_i(j-1) - C_i where S_i is the mean of y_i over
//                paths 1..j-1. Same cost as LaggedPath, variance close to
//                TwoPass.
//
// The lagged algorithms skip the reverse sweep on path 1 and normalize by
// N_mc - 1.

#include "mcgrad/paths.hpp"
#include "mcgrad/tape.hpp"

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace mcgrad {

enum class Algorithm : int {
    TwoPass = 1,
    LaggedPath = 2,
    RunningMean = 3,
};

Algorithm algorithm_from_int(int id);
std::string_view algorithm_name(Algorithm alg);

struct EstimatorConfig {
    std::size_t batch_width = 8;
    /// Worker threads for the embarrassingly parallel TwoPass sweeps. Results
    /// do not depend on this value.
    std::size_t threads = 1;
    /// Batch count for the batch-means variance of the lagged estimators;
    /// reduced automatically to keep at least 16 terms per batch.
    std::size_t variance_batches = 32;
    /// TwoPass only: keep first-pass node values instead of replaying forward
    /// again in the second pass (N_mc forward evaluations instead of 2 N_mc,
    /// at the price of storing every path's tape values).
    bool cache_forward = false;
    /// Time forward and reverse replays separately.
    bool instrument = false;
};

struct GradientEstimate {
    Algorithm algorithm = Algorithm::TwoPass;
    std::vector<double> grad;
    /// Estimated variance of each gradient coordinate (NaN when too few paths).
    std::vector<double> variance;
    /// Path average of every output y_i.
    std::vector<double> mean_outputs;
    std::size_t n_paths = 0;
    std::size_t f_evals = 0;  // scalar-equivalent forward replays
    std::size_t r_evals = 0;  // scalar-equivalent reverse replays
    std::size_t batch_width = 1;
    double wall_seconds = 0.0;
    double forward_seconds = 0.0;  // only with EstimatorConfig::instrument
    double reverse_seconds = 0.0;

    std::vector<double> std_errors() const;
};

/// Closed-form evaluation counts.
std::size_t expected_f_evals(Algorithm alg, std::size_t n_paths, bool cache_forward = false);
std::size_t expected_r_evals(Algorithm alg, std::size_t n_paths);

/// Prefix means S_i over the outputs seen so far, kept as plain sums in
/// arrival order: mean(i) == sum_i / count exactly.
class RunningMean {
public:
    explicit RunningMean(std::size_t dim) : sums_(dim, 0.0) {}

    void add(std::span<const double> y) {
        for (std::size_t i = 0; i < sums_.size(); ++i) sums_[i] += y[i];
        ++count_;
    }
    double mean(std::size_t i) const { return sums_[i] / static_cast<double>(count_); }
    std::size_t count() const { return count_; }
    std::size_t dim() const { return sums_.size(); }

private:
    std::vector<double> sums_;
    std::size_t count_ = 0;
};

/// Accumulates per-path gradient terms into contiguous batches, keeping
/// Welford moments per batch. Term t always lands in batch t * B / n, so
/// the result depends only on the terms, never on which thread added them
/// (as long as each batch is filled by one thread in term order).
class TermAccumulator {
public:
    TermAccumulator(std::size_t dim, std::size_t n_terms, std::size_t batches);

    std::size_t dim() const { return dim_; }
    std::size_t n_terms() const { return n_terms_; }
    std::size_t batches() const { return batches_.size(); }
    std::size_t batch_of(std::size_t term) const { return term * batches_.size() / n_terms_; }
    std::size_t batch_begin(std::size_t k) const {
        return (k * n_terms_ + batches_.size() - 1) / batches_.size();
    }

    void add(std::size_t term, std::span<const double> x);

    std::vector<double> mean() const;
    /// Sample variance of the terms divided by n (variance of the mean for
    /// independent terms).
    std::vector<double> iid_variance() const;
    /// Non-overlapping batch-means variance of the mean; robust to the
    /// short-range dependence between consecutive lagged terms.
    std::vector<double> batch_means_variance() const;

private:
    struct Batch {
        std::size_t count = 0;
        std::vector<double> mean;
        std::vector<double> m2;
    };
    struct Moments {
        std::size_t count = 0;
        std::vector<double> mean;
        std::vector<double> m2;
    };
    Moments merged() const;

    std::size_t dim_;
    std::size_t n_terms_;
    std::vector<Batch> batches_;
};

/// Variance of an estimator from its per-path terms (rows of `terms`).
/// TwoPass uses the i.i.d. formula; the lagged algorithms use batch means
/// and require at least 16 terms per batch.
std::vector<double> estimate_variance(const Matrix& terms, Algorithm alg,
                                      std::size_t batches = 32);

// Scalar replay, one path at a time.
GradientEstimate grad_est1(const Tape& tape, std::span<const double> params,
                           const PathBatch& paths, std::span<const double> targets,
                           const EstimatorConfig& config = {});
GradientEstimate grad_est2(const Tape& tape, std::span<const double> params,
                           const PathBatch& paths, std::span<const double> targets,
                           const EstimatorConfig& config = {});
GradientEstimate grad_est3(const Tape& tape, std::span<const double> params,
                           const PathBatch& paths, std::span<const double> targets,
                           const EstimatorConfig& config = {});

/// Width-c replay (c = config.batch_width). TwoPass matches the scalar
/// result exactly. The lagged algorithms pair lane l of chunk t with lane l
/// of chunk t-1 (running mean: all chunks before t); inside chunk 0 lane l
/// is paired with lane l-1 as in the scalar sweep. With c = 1 all three are
/// bit-identical to their scalar versions.
GradientEstimate grad_est_batched(Algorithm alg, const Tape& tape, std::span<const double> params,
                                  const PathBatch& paths, std::span<const double> targets,
                                  const EstimatorConfig& config = {});

/// Scalar version for alg.
GradientEstimate grad_est_scalar(Algorithm alg, const Tape& tape, std::span<const double> params,
                                 const PathBatch& paths, std::span<const double> targets,
                                 const EstimatorConfig& config = {});

} // namespace mcgrad
