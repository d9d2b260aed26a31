#include "mcgrad/bench.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

#include "mcgrad/errors.hpp"

namespace mcgrad {

namespace {

using Clock = std::chrono::steady_clock;

template <typename Fn>
double time_it(Fn&& fn) {
    const auto t0 = Clock::now();
    fn();
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void mean_var(const std::vector<double>& xs, double& mean, double& var) {
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    var = 0.0;
    if (xs.size() < 2) return;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size() - 1);
}

} // namespace

SpeedupReport measure_speedup(const Tape& tape, std::span<const double> params,
                              const PathBatch& paths, std::size_t batch_width,
                              std::size_t repeats) {
    if (batch_width == 0) {
        throw BatchWidthError("batch width must be positive");
    }
    if (repeats == 0) {
        throw std::invalid_argument("measure_speedup: need at least one repetition");
    }
    SpeedupReport report;
    report.batch_width = batch_width;
    if (batch_width == 1) {
        report.degenerate = true;
        report.note = "c = 1: batched and scalar replay coincide, K_F = K_R = 1 by definition";
        return report;
    }

    const std::size_t n = paths.n_paths();
    const std::size_t m = tape.num_outputs();
    const std::size_t c = batch_width;
    const std::vector<double> lambda(m, 1.0);
    Workspace ws(tape);
    std::vector<double> y(m);
    std::vector<double> adj(tape.num_params());
    BatchWorkspace bws(tape, c);
    Matrix block(c, tape.num_inputs());
    Matrix yv(c, m);
    Matrix seeds(c, m);
    Matrix adjv(c, tape.num_params());
    std::fill(seeds.data().begin(), seeds.data().end(), 1.0);
    const std::size_t full = n / c * c;  // whole chunks only
    if (full == 0) {
        throw std::invalid_argument("measure_speedup: fewer paths than one batch");
    }

    std::vector<double> kf;
    std::vector<double> kr;
    for (std::size_t rep = 0; rep < repeats; ++rep) {
        SpeedupSample s;
        const double f = time_it([&] {
            for (std::size_t p = 0; p < full; ++p) {
                Replay::forward(tape, params, paths.draws.row(p), ws, y);
            }
        });
        const double fr = time_it([&] {
            for (std::size_t p = 0; p < full; ++p) {
                Replay::forward(tape, params, paths.draws.row(p), ws, y);
                Replay::reverse(tape, ws, lambda, adj);
            }
        });
        const double fv = time_it([&] {
            for (std::size_t first = 0; first < full; first += c) {
                fill_chunk(paths, first, c, block);
                Replay::forward_batch(tape, params, block, bws, yv, c);
            }
        });
        const double frv = time_it([&] {
            for (std::size_t first = 0; first < full; first += c) {
                fill_chunk(paths, first, c, block);
                Replay::forward_batch(tape, params, block, bws, yv, c);
                Replay::reverse_batch(tape, bws, seeds, adjv, c);
            }
        });
        const double per = 1.0 / static_cast<double>(full);
        s.t_f = f * per;
        s.t_fv = fv * per;
        s.t_r = std::max(fr - f, 0.0) * per;
        s.t_rv = std::max(frv - fv, 0.0) * per;
        s.k_f = static_cast<double>(c) * s.t_fv / s.t_f;
        s.k_r = static_cast<double>(c) * s.t_rv / s.t_r;
        report.samples.push_back(s);
        kf.push_back(s.k_f);
        kr.push_back(s.k_r);
    }
    mean_var(kf, report.k_f_mean, report.k_f_var);
    mean_var(kr, report.k_r_mean, report.k_r_var);
    return report;
}

TimedEstimate timed_estimate(Algorithm alg, const Tape& tape, std::span<const double> params,
                             const PathBatch& paths, std::span<const double> targets,
                             const EstimatorConfig& config, std::size_t repeats) {
    if (repeats == 0) repeats = 1;
    TimedEstimate out;
    std::vector<double> times;
    for (std::size_t r = 0; r < repeats; ++r) {
        GradientEstimate e = grad_est_batched(alg, tape, params, paths, targets, config);
        times.push_back(e.wall_seconds);
        if (r == 0) out.estimate = std::move(e);
    }
    std::sort(times.begin(), times.end());
    out.median_seconds = times[times.size() / 2];
    return out;
}

} // namespace mcgrad
