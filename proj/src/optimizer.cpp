#include "mcgrad/optimizer.hpp"

#include "mcgrad/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>

namespace mcgrad {

void LbfgsConfig::validate() const {
    if (memory < 1) {
        throw std::invalid_argument("lbfgs: memory must be >= 1");
    }
    if (!(c1 > 0.0 && c1 < c2 && c2 < 1.0)) {
        throw std::invalid_argument("lbfgs: need 0 < c1 < c2 < 1");
    }
    if (initial_step_length < 0.0) {
        throw std::invalid_argument("lbfgs: initial step length must be >= 0");
    }
}

std::string_view termination_name(Termination t) {
    switch (t) {
    case Termination::GradientTolerance: return "gradient-tolerance";
    case Termination::MaxIterations: return "max-iterations";
    case Termination::LineSearchFailure: return "line-search-failure";
    case Termination::NonFiniteObjective: return "non-finite-objective";
    }
    return "?";
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

bool finite(const Evaluation& e) {
    if (!std::isfinite(e.value)) return false;
    return std::all_of(e.grad.begin(), e.grad.end(), [](double g) { return std::isfinite(g); });
}

// Norm of the gradient with components that push into an active bound removed.
double projected_grad_norm(std::span<const double> x, std::span<const double> g, double lb) {
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (x[k] <= lb && g[k] > 0.0) continue;
        s += g[k] * g[k];
    }
    return std::sqrt(s);
}

struct Pair {
    std::vector<double> s;
    std::vector<double> y;
    double rho;
};

// Two-loop recursion: returns -H g.
std::vector<double> search_direction(const std::deque<Pair>& pairs, std::span<const double> g) {
    std::vector<double> q(g.begin(), g.end());
    std::vector<double> alpha(pairs.size());
    for (std::size_t i = pairs.size(); i-- > 0;) {
        alpha[i] = pairs[i].rho * dot(pairs[i].s, q);
        for (std::size_t k = 0; k < q.size(); ++k) q[k] -= alpha[i] * pairs[i].y[k];
    }
    if (!pairs.empty()) {
        const Pair& last = pairs.back();
        const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
        for (double& v : q) v *= gamma;
    }
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double beta = pairs[i].rho * dot(pairs[i].y, q);
        for (std::size_t k = 0; k < q.size(); ++k) q[k] += (alpha[i] - beta) * pairs[i].s[k];
    }
    for (double& v : q) v = -v;
    return q;
}

} // namespace

LbfgsResult lbfgs_minimize(const Objective& objective, std::span<const double> x0,
                           const LbfgsConfig& config) {
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const double lb = config.lower_bound;
    const std::size_t n = x0.size();

    LbfgsResult result;
    result.x.assign(x0.begin(), x0.end());
    for (double& v : result.x) v = std::max(v, lb);
    auto& trace = result.trace;

    std::size_t f_total = 0;
    std::size_t r_total = 0;
    auto evaluate = [&](std::span<const double> x, std::size_t step) {
        Evaluation e = objective(x, step);
        if (e.grad.size() != n) {
            throw std::invalid_argument("lbfgs: objective returned a gradient of wrong size");
        }
        f_total += e.f_evals;
        r_total += e.r_evals;
        return e;
    };
    auto record = [&](std::size_t iter, const std::vector<double>& x, const Evaluation& e) {
        IterationRecord r;
        r.iter = iter;
        r.loss = e.value;
        r.grad_norm = projected_grad_norm(x, e.grad, lb);
        r.params = x;
        r.f_evals = f_total;
        r.r_evals = r_total;
        r.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                       .count();
        trace.records.push_back(std::move(r));
    };

    Evaluation cur = evaluate(result.x, 0);
    if (!finite(cur)) {
        trace.status = Termination::NonFiniteObjective;
        return result;
    }
    record(0, result.x, cur);

    std::deque<Pair> pairs;
    std::vector<double> x_trial(n);
    for (std::size_t iter = 1;; ++iter) {
        if (trace.records.back().grad_norm <= config.grad_norm_tol) {
            trace.status = Termination::GradientTolerance;
            return result;
        }
        if (iter > config.max_iter) {
            trace.status = Termination::MaxIterations;
            return result;
        }
        if (config.refresh_each_step && iter > 1) {
            Evaluation fresh = evaluate(result.x, iter - 1);
            if (!finite(fresh)) {
                trace.status = Termination::NonFiniteObjective;
                return result;
            }
            cur = std::move(fresh);
        }
        const std::size_t step = config.refresh_each_step ? iter - 1 : 0;

        std::vector<double> d = search_direction(pairs, cur.grad);
        double gd = dot(cur.grad, d);
        if (!(gd < 0.0)) {
            // Not a descent direction: drop the curvature history.
            pairs.clear();
            d = cur.grad;
            for (double& v : d) v = -v;
            gd = dot(cur.grad, d);
        }
        double alpha = 1.0;
        if (pairs.empty()) {
            const double gnorm = std::sqrt(-gd);
            if (config.initial_step_length > 0.0 && gnorm > 0.0) {
                alpha = config.initial_step_length / gnorm;
            }
        }

        // Backtracking Armijo, optionally extended while the curvature
        // condition fails.
        bool have_accepted = false;
        bool non_finite = false;
        std::vector<double> x_acc;
        Evaluation e_acc;
        for (std::size_t trial = 0; trial <= config.max_backtracks; ++trial) {
            for (std::size_t k = 0; k < n; ++k) x_trial[k] = std::max(lb, result.x[k] + alpha * d[k]);
            double decrease = 0.0;
            for (std::size_t k = 0; k < n; ++k) decrease += cur.grad[k] * (x_trial[k] - result.x[k]);
            if (x_trial == result.x) break;
            Evaluation e = evaluate(x_trial, step);
            if (!finite(e)) {
                non_finite = true;
                break;
            }
            if (e.value <= cur.value + config.c1 * decrease) {
                const bool curvature_ok = !config.wolfe || dot(e.grad, d) >= config.c2 * gd;
                x_acc = x_trial;
                e_acc = std::move(e);
                have_accepted = true;
                if (curvature_ok) break;
                alpha *= 2.0;
            } else {
                if (have_accepted) break;
                alpha *= 0.5;
            }
        }
        if (!have_accepted) {
            trace.status = non_finite ? Termination::NonFiniteObjective
                                      : Termination::LineSearchFailure;
            return result;
        }

        Pair p{std::vector<double>(n), std::vector<double>(n), 0.0};
        for (std::size_t k = 0; k < n; ++k) {
            p.s[k] = x_acc[k] - result.x[k];
            p.y[k] = e_acc.grad[k] - cur.grad[k];
        }
        const double sy = dot(p.s, p.y);
        if (sy > 1e-12 * std::sqrt(dot(p.s, p.s) * dot(p.y, p.y)) && sy > 0.0) {
            p.rho = 1.0 / sy;
            pairs.push_back(std::move(p));
            if (pairs.size() > config.memory) pairs.pop_front();
        }
        result.x = std::move(x_acc);
        cur = std::move(e_acc);
        record(iter, result.x, cur);
    }
}

// ---------------------------------------------------------------------------

CalibrationConfig default_calibration_config() {
    CalibrationConfig c;
    c.lbfgs.max_iter = 20;
    c.lbfgs.grad_norm_tol = 1e-10;
    c.lbfgs.initial_step_length = 0.1;
    c.lbfgs.refresh_each_step = true;
    return c;
}

CalibrationResult calibrate(const MarketSpec& spec, const VolCurve& initial, Algorithm alg,
                            std::size_t n_paths, std::uint64_t seed,
                            const CalibrationConfig& config) {
    spec.validate();
    initial.validate();
    if (alg != Algorithm::TwoPass && n_paths < 2) {
        throw std::invalid_argument("calibrate: the lagged algorithms need N_mc >= 2");
    }
    const Tape tape = build_model_tape(spec, initial);
    const std::vector<double> targets = spec.targets();
    const std::size_t n_inputs = spec.expiries().size();

    LbfgsConfig lbfgs = config.lbfgs;
    lbfgs.lower_bound = std::max(lbfgs.lower_bound, config.sigma_min);

    VolCurve curve = initial;
    PathBatch paths;
    std::size_t paths_step = 0;
    bool have_paths = false;
    auto objective = [&](std::span<const double> x, std::size_t step) {
        if (!have_paths || step != paths_step) {
            paths = generate(derive_seed(seed, step), n_paths, n_inputs, config.generator,
                             config.estimator.threads);
            paths_step = step;
            have_paths = true;
        }
        curve.vols.assign(x.begin(), x.end());
        try {
            const LossValue g = loss(spec, curve, paths);
            const GradientEstimate est =
                config.batched ? grad_est_batched(alg, tape, x, paths, targets, config.estimator)
                               : grad_est_scalar(alg, tape, x, paths, targets, config.estimator);
            return Evaluation{g.g, est.grad, est.f_evals, est.r_evals};
        } catch (const NonFiniteValue&) {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            return Evaluation{nan, std::vector<double>(x.size(), nan), 0, 0};
        }
    };

    LbfgsResult r = lbfgs_minimize(objective, initial.vols, lbfgs);
    CalibrationResult out;
    out.curve = initial;
    out.curve.vols = std::move(r.x);
    out.trace = std::move(r.trace);
    return out;
}

} // namespace mcgrad
