#include "mcgrad/estimators.hpp"

#include "mcgrad/errors.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>

namespace mcgrad {

Algorithm algorithm_from_int(int id) {
    if (id < 1 || id > 3) {
        throw std::invalid_argument("algorithm must be 1, 2 or 3, got " + std::to_string(id));
    }
    return static_cast<Algorithm>(id);
}

std::string_view algorithm_name(Algorithm alg) {
    switch (alg) {
    case Algorithm::TwoPass: return "two-pass";
    case Algorithm::LaggedPath: return "lagged-path";
    case Algorithm::RunningMean: return "running-mean";
    }
    return "?";
}

std::vector<double> GradientEstimate::std_errors() const {
    std::vector<double> se(variance.size());
    for (std::size_t k = 0; k < se.size(); ++k) se[k] = std::sqrt(variance[k]);
    return se;
}

std::size_t expected_f_evals(Algorithm alg, std::size_t n_paths, bool cache_forward) {
    if (alg == Algorithm::TwoPass) return cache_forward ? n_paths : 2 * n_paths;
    return n_paths;
}

std::size_t expected_r_evals(Algorithm alg, std::size_t n_paths) {
    if (alg == Algorithm::TwoPass) return n_paths;
    return n_paths - 1;
}

// ---------------------------------------------------------------------------
// TermAccumulator

TermAccumulator::TermAccumulator(std::size_t dim, std::size_t n_terms, std::size_t batches)
    : dim_(dim), n_terms_(n_terms) {
    if (n_terms == 0) {
        throw std::invalid_argument("TermAccumulator: no terms");
    }
    if (batches == 0 || batches > n_terms) {
        throw std::invalid_argument("TermAccumulator: batch count must be in [1, n_terms]");
    }
    batches_.resize(batches);
    for (auto& b : batches_) {
        b.mean.assign(dim, 0.0);
        b.m2.assign(dim, 0.0);
    }
}

void TermAccumulator::add(std::size_t term, std::span<const double> x) {
    Batch& b = batches_[batch_of(term)];
    ++b.count;
    const double inv = 1.0 / static_cast<double>(b.count);
    for (std::size_t k = 0; k < dim_; ++k) {
        const double delta = x[k] - b.mean[k];
        b.mean[k] += delta * inv;
        b.m2[k] += delta * (x[k] - b.mean[k]);
    }
}

TermAccumulator::Moments TermAccumulator::merged() const {
    Moments out{0, std::vector<double>(dim_, 0.0), std::vector<double>(dim_, 0.0)};
    for (const auto& b : batches_) {
        if (b.count == 0) continue;
        const double na = static_cast<double>(out.count);
        const double nb = static_cast<double>(b.count);
        const double n = na + nb;
        for (std::size_t k = 0; k < dim_; ++k) {
            const double delta = b.mean[k] - out.mean[k];
            out.mean[k] = out.count == 0 ? b.mean[k] : out.mean[k] + delta * (nb / n);
            out.m2[k] += b.m2[k] + delta * delta * (na * nb / n);
        }
        out.count += b.count;
    }
    return out;
}

std::vector<double> TermAccumulator::mean() const { return merged().mean; }

std::vector<double> TermAccumulator::iid_variance() const {
    const Moments m = merged();
    std::vector<double> v(dim_, std::numeric_limits<double>::quiet_NaN());
    if (m.count < 2) return v;
    const double n = static_cast<double>(m.count);
    for (std::size_t k = 0; k < dim_; ++k) v[k] = m.m2[k] / (n - 1.0) / n;
    return v;
}

std::vector<double> TermAccumulator::batch_means_variance() const {
    std::vector<double> v(dim_, std::numeric_limits<double>::quiet_NaN());
    const std::size_t nb = batches_.size();
    if (nb < 2) return v;
    const Moments m = merged();
    for (std::size_t k = 0; k < dim_; ++k) {
        double ss = 0.0;
        for (const auto& b : batches_) {
            const double d = b.mean[k] - m.mean[k];
            ss += d * d;
        }
        v[k] = ss / static_cast<double>(nb * (nb - 1));
    }
    return v;
}

std::vector<double> estimate_variance(const Matrix& terms, Algorithm alg, std::size_t batches) {
    const std::size_t n = terms.rows();
    if (n == 0) {
        throw std::invalid_argument("estimate_variance: no terms");
    }
    if (alg == Algorithm::TwoPass) {
        TermAccumulator acc(terms.cols(), n, 1);
        for (std::size_t t = 0; t < n; ++t) acc.add(t, terms.row(t));
        return acc.iid_variance();
    }
    if (batches < 2 || n < 16 * batches) {
        throw std::invalid_argument("estimate_variance: " + std::to_string(n) +
                                    " terms is too few for " + std::to_string(batches) +
                                    " batches (need at least 16 per batch)");
    }
    TermAccumulator acc(terms.cols(), n, batches);
    for (std::size_t t = 0; t < n; ++t) acc.add(t, terms.row(t));
    return acc.batch_means_variance();
}

// ---------------------------------------------------------------------------
// Shared plumbing

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

class PhaseTimer {
public:
    PhaseTimer(bool on, double& sink) : on_(on), sink_(sink) {
        if (on_) t0_ = Clock::now();
    }
    ~PhaseTimer() {
        if (on_) sink_ += seconds_since(t0_);
    }
    PhaseTimer(const PhaseTimer&) = delete;
    PhaseTimer& operator=(const PhaseTimer&) = delete;

private:
    bool on_;
    double& sink_;
    Clock::time_point t0_;
};

void check_inputs(Algorithm alg, const Tape& tape, std::span<const double> params,
                  const PathBatch& paths, std::span<const double> targets) {
    if (params.size() != tape.num_params()) {
        throw DimensionError("estimator: expected " + std::to_string(tape.num_params()) +
                             " parameters, got " + std::to_string(params.size()));
    }
    if (targets.size() != tape.num_outputs()) {
        throw DimensionError("estimator: expected " + std::to_string(tape.num_outputs()) +
                             " targets, got " + std::to_string(targets.size()));
    }
    if (paths.n_paths() > 0 && paths.n_inputs() != tape.num_inputs()) {
        throw DimensionError("estimator: paths carry " + std::to_string(paths.n_inputs()) +
                             " draws per path, tape expects " + std::to_string(tape.num_inputs()));
    }
    if (alg == Algorithm::TwoPass && paths.n_paths() < 1) {
        throw std::invalid_argument("two-pass estimator: empty path set");
    }
    if (alg != Algorithm::TwoPass && paths.n_paths() < 2) {
        throw std::invalid_argument(std::string(algorithm_name(alg)) +
                                    " estimator needs at least 2 paths (it pairs path j with j-1)");
    }
}

// Batch layout for the variance accumulator.
struct BatchPlan {
    std::size_t accumulator_batches = 1;
    bool variance_available = false;
};

BatchPlan plan_batches(Algorithm alg, std::size_t n_terms, std::size_t requested) {
    requested = std::max<std::size_t>(1, requested);
    if (alg == Algorithm::TwoPass) {
        return {std::min(requested, n_terms), n_terms >= 2};
    }
    const std::size_t b = std::min(requested, n_terms / 16);
    return {std::max<std::size_t>(1, b), b >= 2};
}

void finish(GradientEstimate& est, const TermAccumulator& acc, const BatchPlan& plan,
            bool cache_forward) {
    est.grad = acc.mean();
    if (!plan.variance_available) {
        est.variance.assign(acc.dim(), std::numeric_limits<double>::quiet_NaN());
    } else if (est.algorithm == Algorithm::TwoPass) {
        est.variance = acc.iid_variance();
    } else {
        est.variance = acc.batch_means_variance();
    }
    if (est.f_evals != expected_f_evals(est.algorithm, est.n_paths, cache_forward) ||
        est.r_evals != expected_r_evals(est.algorithm, est.n_paths)) {
        throw std::logic_error("evaluation count mismatch: f=" + std::to_string(est.f_evals) +
                               " r=" + std::to_string(est.r_evals) + " for N_mc=" +
                               std::to_string(est.n_paths));
    }
}

void add_counters(GradientEstimate& est, const ReplayCounters& c) {
    est.f_evals += c.forward_scalar_equivalents;
    est.r_evals += c.reverse_scalar_equivalents;
}

// Copy rows [first, min(first + width, end)) of the batch into `block`,
// zero-padding the rest. Returns the active lane count.
std::size_t load_lanes(const PathBatch& paths, std::size_t first, std::size_t end,
                       Matrix& block) {
    const std::size_t width = block.rows();
    const std::size_t active = std::min(width, end - first);
    for (std::size_t l = 0; l < width; ++l) {
        auto dst = block.row(l);
        if (l < active) {
            auto src = paths.draws.row(first + l);
            std::copy(src.begin(), src.end(), dst.begin());
        } else {
            std::fill(dst.begin(), dst.end(), 0.0);
        }
    }
    return active;
}

// Runs fn(batch_index, worker_index) for every batch, each batch handled by
// exactly one worker.
template <typename Fn>
void for_each_batch(std::size_t batches, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, batches));
    if (threads == 1) {
        for (std::size_t k = 0; k < batches; ++k) fn(k, 0);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> workers;
        for (std::size_t w = 0; w < threads; ++w) {
            workers.emplace_back([&, w] {
                try {
                    for (std::size_t k = next++; k < batches; k = next++) fn(k, w);
                } catch (...) {
                    errors[w] = std::current_exception();
                    next = batches;
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::vector<double> path_average(const std::vector<std::vector<double>>& batch_sums,
                                 std::size_t n_paths) {
    std::vector<double> mean(batch_sums.front().size(), 0.0);
    for (const auto& s : batch_sums) {
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += s[i];
    }
    for (double& v : mean) v /= static_cast<double>(n_paths);
    return mean;
}

} // namespace

// ---------------------------------------------------------------------------
// Scalar estimators

GradientEstimate grad_est1(const Tape& tape, std::span<const double> params,
                           const PathBatch& paths, std::span<const double> targets,
                           const EstimatorConfig& config) {
    check_inputs(Algorithm::TwoPass, tape, params, paths, targets);
    const auto t0 = Clock::now();
    const std::size_t n = paths.n_paths();
    const std::size_t m = tape.num_outputs();
    const std::size_t dim = tape.num_params();

    GradientEstimate est;
    est.algorithm = Algorithm::TwoPass;
    est.n_paths = n;
    est.batch_width = 1;

    const BatchPlan plan = plan_batches(Algorithm::TwoPass, n, config.variance_batches);
    TermAccumulator acc(dim, n, plan.accumulator_batches);
    Workspace ws(tape);
    std::vector<double> y(m);
    std::vector<double> term(dim);

    // Pass 1: Ey_i
    std::vector<std::vector<double>> sums(acc.batches(), std::vector<double>(m, 0.0));
    std::vector<std::vector<double>> saved;
    if (config.cache_forward) saved.reserve(n);
    for (std::size_t p = 0; p < n; ++p) {
        {
            PhaseTimer timer(config.instrument, est.forward_seconds);
            Replay::forward(tape, params, paths.draws.row(p), ws, y);
        }
        auto& s = sums[acc.batch_of(p)];
        for (std::size_t i = 0; i < m; ++i) s[i] += y[i];
        if (config.cache_forward) saved.emplace_back(ws.values().begin(), ws.values().end());
    }
    est.mean_outputs = path_average(sums, n);
    std::vector<double> lambda(m);
    for (std::size_t i = 0; i < m; ++i) lambda[i] = est.mean_outputs[i] - targets[i];

    // Pass 2: average of R(w_j; Ey - C)
    for (std::size_t p = 0; p < n; ++p) {
        if (config.cache_forward) {
            ws.restore(saved[p]);
        } else {
            PhaseTimer timer(config.instrument, est.forward_seconds);
            Replay::forward(tape, params, paths.draws.row(p), ws, y);
        }
        {
            PhaseTimer timer(config.instrument, est.reverse_seconds);
            Replay::reverse(tape, ws, lambda, term);
        }
        acc.add(p, term);
    }
    add_counters(est, ws.counters);
    finish(est, acc, plan, config.cache_forward);
    est.wall_seconds = seconds_since(t0);
    return est;
}

GradientEstimate grad_est2(const Tape& tape, std::span<const double> params,
                           const PathBatch& paths, std::span<const double> targets,
                           const EstimatorConfig& config) {
    check_inputs(Algorithm::LaggedPath, tape, params, paths, targets);
    const auto t0 = Clock::now();
    const std::size_t n = paths.n_paths();
    const std::size_t m = tape.num_outputs();
    const std::size_t dim = tape.num_params();

    GradientEstimate est;
    est.algorithm = Algorithm::LaggedPath;
    est.n_paths = n;
    est.batch_width = 1;

    const BatchPlan plan = plan_batches(Algorithm::LaggedPath, n - 1, config.variance_batches);
    TermAccumulator acc(dim, n - 1, plan.accumulator_batches);
    Workspace ws(tape);
    std::vector<double> y(m);
    std::vector<double> y_prev(m);
    std::vector<double> lambda(m);
    std::vector<double> term(dim);
    std::vector<double> sum_y(m, 0.0);

    {
        PhaseTimer timer(config.instrument, est.forward_seconds);
        Replay::forward(tape, params, paths.draws.row(0), ws, y_prev);
    }
    for (std::size_t i = 0; i < m; ++i) sum_y[i] += y_prev[i];
    for (std::size_t p = 1; p < n; ++p) {
        {
            PhaseTimer timer(config.instrument, est.forward_seconds);
            Replay::forward(tape, params, paths.draws.row(p), ws, y);
        }
        for (std::size_t i = 0; i < m; ++i) {
            lambda[i] = y_prev[i] - targets[i];
            sum_y[i] += y[i];
        }
        {
            PhaseTimer timer(config.instrument, est.reverse_seconds);
            Replay::reverse(tape, ws, lambda, term);
        }
        acc.add(p - 1, term);
        std::swap(y, y_prev);
    }
    est.mean_outputs = sum_y;
    for (double& v : est.mean_outputs) v /= static_cast<double>(n);
    add_counters(est, ws.counters);
    finish(est, acc, plan, false);
    est.wall_seconds = seconds_since(t0);
    return est;
}

GradientEstimate grad_est3(const Tape& tape, std::span<const double> params,
                           const PathBatch& paths, std::span<const double> targets,
                           const EstimatorConfig& config) {
    check_inputs(Algorithm::RunningMean, tape, params, paths, targets);
    const auto t0 = Clock::now();
    const std::size_t n = paths.n_paths();
    const std::size_t m = tape.num_outputs();
    const std::size_t dim = tape.num_params();

    GradientEstimate est;
    est.algorithm = Algorithm::RunningMean;
    est.n_paths = n;
    est.batch_width = 1;

    const BatchPlan plan = plan_batches(Algorithm::RunningMean, n - 1, config.variance_batches);
    TermAccumulator acc(dim, n - 1, plan.accumulator_batches);
    Workspace ws(tape);
    RunningMean running(m);
    std::vector<double> y(m);
    std::vector<double> lambda(m);
    std::vector<double> term(dim);

    {
        PhaseTimer timer(config.instrument, est.forward_seconds);
        Replay::forward(tape, params, paths.draws.row(0), ws, y);
    }
    running.add(y);
    for (std::size_t p = 1; p < n; ++p) {
        {
            PhaseTimer timer(config.instrument, est.forward_seconds);
            Replay::forward(tape, params, paths.draws.row(p), ws, y);
        }
        for (std::size_t i = 0; i < m; ++i) lambda[i] = running.mean(i) - targets[i];
        {
            PhaseTimer timer(config.instrument, est.reverse_seconds);
            Replay::reverse(tape, ws, lambda, term);
        }
        acc.add(p - 1, term);
        running.add(y);
    }
    est.mean_outputs.resize(m);
    for (std::size_t i = 0; i < m; ++i) est.mean_outputs[i] = running.mean(i);
    add_counters(est, ws.counters);
    finish(est, acc, plan, false);
    est.wall_seconds = seconds_since(t0);
    return est;
}

GradientEstimate grad_est_scalar(Algorithm alg, const Tape& tape, std::span<const double> params,
                                 const PathBatch& paths, std::span<const double> targets,
                                 const EstimatorConfig& config) {
    switch (alg) {
    case Algorithm::TwoPass: return grad_est1(tape, params, paths, targets, config);
    case Algorithm::LaggedPath: return grad_est2(tape, params, paths, targets, config);
    case Algorithm::RunningMean: return grad_est3(tape, params, paths, targets, config);
    }
    throw std::invalid_argument("unknown algorithm");
}

// ---------------------------------------------------------------------------
// Batched estimators

namespace {

GradientEstimate batched_two_pass(const Tape& tape, std::span<const double> params,
                                  const PathBatch& paths, std::span<const double> targets,
                                  const EstimatorConfig& config) {
    const auto t0 = Clock::now();
    const std::size_t n = paths.n_paths();
    const std::size_t m = tape.num_outputs();
    const std::size_t dim = tape.num_params();
    const std::size_t c = config.batch_width;

    GradientEstimate est;
    est.algorithm = Algorithm::TwoPass;
    est.n_paths = n;
    est.batch_width = c;

    const BatchPlan plan = plan_batches(Algorithm::TwoPass, n, config.variance_batches);
    TermAccumulator acc(dim, n, plan.accumulator_batches);
    const std::size_t nb = acc.batches();
    auto batch_end = [&](std::size_t k) { return k + 1 < nb ? acc.batch_begin(k + 1) : n; };

    struct Worker {
        BatchWorkspace ws;
        Matrix block, y, seeds, adj;
        double forward_seconds = 0.0;
        double reverse_seconds = 0.0;
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(config.threads, nb));
    std::vector<Worker> workers;
    workers.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        workers.push_back({BatchWorkspace(tape, c), Matrix(c, tape.num_inputs()), Matrix(c, m),
                           Matrix(c, m), Matrix(c, dim)});
    }

    // Saved node values per chunk, indexed by batch then chunk within batch.
    std::vector<std::vector<std::vector<double>>> saved(config.cache_forward ? nb : 0);

    // Pass 1: Ey_i
    std::vector<std::vector<double>> sums(nb, std::vector<double>(m, 0.0));
    for_each_batch(nb, threads, [&](std::size_t k, std::size_t w) {
        Worker& wk = workers[w];
        auto& s = sums[k];
        for (std::size_t first = acc.batch_begin(k); first < batch_end(k); first += c) {
            const std::size_t active = load_lanes(paths, first, batch_end(k), wk.block);
            {
                PhaseTimer timer(config.instrument, wk.forward_seconds);
                Replay::forward_batch(tape, params, wk.block, wk.ws, wk.y, active);
            }
            for (std::size_t l = 0; l < active; ++l) {
                for (std::size_t i = 0; i < m; ++i) s[i] += wk.y(l, i);
            }
            if (config.cache_forward) {
                saved[k].emplace_back(wk.ws.values().begin(), wk.ws.values().end());
            }
        }
    });
    est.mean_outputs = path_average(sums, n);
    std::vector<double> lambda(m);
    for (std::size_t i = 0; i < m; ++i) lambda[i] = est.mean_outputs[i] - targets[i];

    // Pass 2
    for (auto& wk : workers) {
        for (std::size_t l = 0; l < c; ++l) {
            for (std::size_t i = 0; i < m; ++i) wk.seeds(l, i) = lambda[i];
        }
    }
    for_each_batch(nb, threads, [&](std::size_t k, std::size_t w) {
        Worker& wk = workers[w];
        std::size_t chunk = 0;
        for (std::size_t first = acc.batch_begin(k); first < batch_end(k); first += c, ++chunk) {
            const std::size_t active = load_lanes(paths, first, batch_end(k), wk.block);
            if (config.cache_forward) {
                wk.ws.restore(saved[k][chunk]);
            } else {
                PhaseTimer timer(config.instrument, wk.forward_seconds);
                Replay::forward_batch(tape, params, wk.block, wk.ws, wk.y, active);
            }
            {
                PhaseTimer timer(config.instrument, wk.reverse_seconds);
                Replay::reverse_batch(tape, wk.ws, wk.seeds, wk.adj, active);
            }
            for (std::size_t l = 0; l < active; ++l) acc.add(first + l, wk.adj.row(l));
        }
    });
    for (const auto& wk : workers) {
        add_counters(est, wk.ws.counters);
        est.forward_seconds += wk.forward_seconds;
        est.reverse_seconds += wk.reverse_seconds;
    }
    finish(est, acc, plan, config.cache_forward);
    est.wall_seconds = seconds_since(t0);
    return est;
}

// LaggedPath and RunningMean share the sweep; only the seed rule differs.
GradientEstimate batched_lagged(Algorithm alg, const Tape& tape, std::span<const double> params,
                                const PathBatch& paths, std::span<const double> targets,
                                const EstimatorConfig& config) {
    const auto t0 = Clock::now();
    const std::size_t n = paths.n_paths();
    const std::size_t m = tape.num_outputs();
    const std::size_t dim = tape.num_params();
    const std::size_t c = config.batch_width;
    const bool running_mean = alg == Algorithm::RunningMean;

    GradientEstimate est;
    est.algorithm = alg;
    est.n_paths = n;
    est.batch_width = c;

    const BatchPlan plan = plan_batches(alg, n - 1, config.variance_batches);
    TermAccumulator acc(dim, n - 1, plan.accumulator_batches);
    BatchWorkspace ws(tape, c);
    Matrix block(c, tape.num_inputs());
    Matrix y(c, m);
    Matrix y_prev(c, m);
    Matrix seeds(c, m);
    Matrix adj(c, dim);
    RunningMean running(m);
    std::vector<double> sum_y(m, 0.0);

    for (std::size_t first = 0; first < n; first += c) {
        const std::size_t active = load_lanes(paths, first, n, block);
        {
            PhaseTimer timer(config.instrument, est.forward_seconds);
            Replay::forward_batch(tape, params, block, ws, y, active);
        }
        std::fill(seeds.data().begin(), seeds.data().end(), 0.0);
        // Lanes [lane_begin, active) get a reverse sweep.
        std::size_t lane_begin = 0;
        if (first == 0) {
            lane_begin = 1;
            for (std::size_t l = 0; l < active; ++l) {
                if (l > 0) {
                    for (std::size_t i = 0; i < m; ++i) {
                        seeds(l, i) = (running_mean ? running.mean(i) : y(l - 1, i)) - targets[i];
                    }
                }
                if (running_mean) running.add(y.row(l));
            }
        } else {
            for (std::size_t l = 0; l < active; ++l) {
                for (std::size_t i = 0; i < m; ++i) {
                    seeds(l, i) = (running_mean ? running.mean(i) : y_prev(l, i)) - targets[i];
                }
            }
            if (running_mean) {
                for (std::size_t l = 0; l < active; ++l) running.add(y.row(l));
            }
        }
        if (!running_mean) {
            for (std::size_t l = 0; l < active; ++l) {
                for (std::size_t i = 0; i < m; ++i) sum_y[i] += y(l, i);
            }
        }
        if (active > lane_begin) {
            {
                PhaseTimer timer(config.instrument, est.reverse_seconds);
                Replay::reverse_batch(tape, ws, seeds, adj, active - lane_begin);
            }
            for (std::size_t l = lane_begin; l < active; ++l) acc.add(first + l - 1, adj.row(l));
        }
        std::swap(y, y_prev);
    }
    est.mean_outputs.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        est.mean_outputs[i] = running_mean ? running.mean(i) : sum_y[i] / static_cast<double>(n);
    }
    add_counters(est, ws.counters);
    finish(est, acc, plan, false);
    est.wall_seconds = seconds_since(t0);
    return est;
}

} // namespace

GradientEstimate grad_est_batched(Algorithm alg, const Tape& tape, std::span<const double> params,
                                  const PathBatch& paths, std::span<const double> targets,
                                  const EstimatorConfig& config) {
    check_inputs(alg, tape, params, paths, targets);
    if (config.batch_width == 0) {
        throw BatchWidthError("batch width must be positive");
    }
    if (alg == Algorithm::TwoPass) return batched_two_pass(tape, params, paths, targets, config);
    return batched_lagged(alg, tape, params, paths, targets, config);
}

} // namespace mcgrad
