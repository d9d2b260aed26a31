#pragma once

// European-call calibration model.
//
// Volatility is a piecewise-linear curve through knots (t_k, sigma_k), flat
// outside the knot range. Each distinct expiry T has its own standard-normal
// driver w_T and a zero-rate log-normal terminal value
//     S(T) = S0 * exp(-0.5 * sigma(T)^2 * T + sigma(T) * sqrt(T) * w_T),
// option i pays y_i = max(S(T_i) - K_i, 0), and the calibration loss is
//     G = 0.5 * sum_i (E y_i - C_i)^2.

#include "mcgrad/paths.hpp"
#include "mcgrad/tape.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace mcgrad {

struct VolCurve {
    std::vector<double> times;  // strictly increasing, years
    std::vector<double> vols;   // per sqrt(year), > 0

    std::size_t size() const { return times.size(); }
    void validate() const;
};

struct OptionQuote {
    double strike = 0.0;
    double expiry = 0.0;
    double price = 0.0;  // observed C_i
};

struct MarketSpec {
    double spot = 0.0;
    std::vector<OptionQuote> options;

    void validate() const;
    std::vector<double> targets() const;
    /// Distinct expiries in increasing order; one random input per entry.
    std::vector<double> expiries() const;
    /// Index into expiries() for each option.
    std::vector<std::size_t> expiry_index() const;
};

struct LossValue {
    double g = 0.0;
    std::vector<double> expectations;  // path averages of y_i
    std::vector<double> residuals;     // expectations - targets
    std::vector<double> std_errors;    // sample std of y_i / sqrt(N_mc)
};

double vol_at(const VolCurve& curve, double t);

double terminal_price(double spot, const VolCurve& curve, double expiry, double w);

/// Payoffs for one path; `w` holds one draw per distinct expiry.
std::vector<double> payoffs(const MarketSpec& spec, const VolCurve& curve,
                            std::span<const double> w);

LossValue loss(const MarketSpec& spec, const VolCurve& curve, const PathBatch& paths);

/// Zero-rate Black-Scholes call. Used as a validation oracle and to
/// generate synthetic target prices.
double black_scholes_call(double spot, double strike, double vol, double expiry);

/// Tape with the knot vols as parameters, one input per distinct expiry and
/// one output per option. Replays agree exactly with payoffs().
Tape build_model_tape(const MarketSpec& spec, const VolCurve& curve);

/// Copy of `spec` whose prices are closed-form values under `curve`.
MarketSpec priced_with(const MarketSpec& spec, const VolCurve& curve);

VolCurve flat_curve(std::span<const double> times, double vol);

/// Default fixture: S0 = 100, expiries 1..5y, strikes 100..120, knots at the
/// expiries. Targets are closed-form prices under a flat reference vol; the
/// evaluation/starting curve is flat at `initial_vol`.
struct DeskFixture {
    MarketSpec market;
    VolCurve reference;
    VolCurve initial;
};

DeskFixture desk_fixture(double reference_vol = 0.2, double initial_vol = 0.4);

} // namespace mcgrad
