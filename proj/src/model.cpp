#include "mcgrad/model.hpp"

#include "mcgrad/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mcgrad {

void VolCurve::validate() const {
    if (times.empty() || times.size() != vols.size()) {
        throw std::invalid_argument("vol curve needs at least one knot and matching vols");
    }
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (!(vols[k] > 0.0) || !std::isfinite(vols[k])) {
            throw std::invalid_argument("vol curve knots must be positive");
        }
        if (!(times[k] >= 0.0) || (k > 0 && !(times[k] > times[k - 1]))) {
            throw std::invalid_argument("vol curve knot times must be strictly increasing");
        }
    }
}

void MarketSpec::validate() const {
    if (!(spot > 0.0)) {
        throw std::invalid_argument("spot must be positive");
    }
    if (options.empty()) {
        throw std::invalid_argument("market needs at least one option");
    }
    for (const auto& o : options) {
        if (!(o.strike >= 0.0) || !(o.expiry > 0.0) || !(o.price >= 0.0)) {
            throw std::invalid_argument("option quotes need strike >= 0, expiry > 0, price >= 0");
        }
    }
}

std::vector<double> MarketSpec::targets() const {
    std::vector<double> c;
    c.reserve(options.size());
    for (const auto& o : options) c.push_back(o.price);
    return c;
}

std::vector<double> MarketSpec::expiries() const {
    std::vector<double> t;
    for (const auto& o : options) t.push_back(o.expiry);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
}

std::vector<std::size_t> MarketSpec::expiry_index() const {
    const auto t = expiries();
    std::vector<std::size_t> idx;
    idx.reserve(options.size());
    for (const auto& o : options) {
        idx.push_back(static_cast<std::size_t>(std::lower_bound(t.begin(), t.end(), o.expiry) -
                                               t.begin()));
    }
    return idx;
}

namespace {

// Position of t on the curve: either a single knot (weight == 0) or the
// bracketing pair (lo, lo + 1) with interpolation weight in (0, 1).
struct CurvePoint {
    std::size_t lo = 0;
    double weight = 0.0;
};

CurvePoint locate(const VolCurve& curve, double t) {
    const auto& ts = curve.times;
    if (t <= ts.front()) return {0, 0.0};
    if (t >= ts.back()) return {ts.size() - 1, 0.0};
    const auto it = std::lower_bound(ts.begin(), ts.end(), t);
    const auto hi = static_cast<std::size_t>(it - ts.begin());
    if (*it == t) return {hi, 0.0};
    return {hi - 1, (t - ts[hi - 1]) / (ts[hi] - ts[hi - 1])};
}

} // namespace

double vol_at(const VolCurve& curve, double t) {
    const CurvePoint p = locate(curve, t);
    const double lo = curve.vols[p.lo];
    if (p.weight == 0.0) return lo;
    return lo + p.weight * (curve.vols[p.lo + 1] - lo);
}

// The expression order below is mirrored node for node in build_model_tape.
double terminal_price(double spot, const VolCurve& curve, double expiry, double w) {
    const double sd = vol_at(curve, expiry) * std::sqrt(expiry);
    return spot * std::exp(-0.5 * sd * sd + sd * w);
}

namespace {

void payoffs_into(const MarketSpec& spec, const VolCurve& curve, std::span<const double> expiries,
                  std::span<const std::size_t> idx, std::span<const double> w,
                  std::span<double> s, std::span<double> y) {
    for (std::size_t e = 0; e < expiries.size(); ++e) {
        s[e] = terminal_price(spec.spot, curve, expiries[e], w[e]);
    }
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = s[idx[i]] - spec.options[i].strike;
        y[i] = d > 0.0 ? d : 0.0;
    }
}

} // namespace

std::vector<double> payoffs(const MarketSpec& spec, const VolCurve& curve,
                            std::span<const double> w) {
    const auto expiries = spec.expiries();
    if (w.size() != expiries.size()) {
        throw DimensionError("payoffs: expected one draw per distinct expiry (" +
                             std::to_string(expiries.size()) + "), got " +
                             std::to_string(w.size()));
    }
    const auto idx = spec.expiry_index();
    std::vector<double> s(expiries.size());
    std::vector<double> y(spec.options.size());
    payoffs_into(spec, curve, expiries, idx, w, s, y);
    return y;
}

LossValue loss(const MarketSpec& spec, const VolCurve& curve, const PathBatch& paths) {
    const std::size_t n = paths.n_paths();
    if (n == 0) {
        throw std::invalid_argument("loss: empty path set");
    }
    const auto expiries = spec.expiries();
    if (paths.n_inputs() != expiries.size()) {
        throw DimensionError("loss: paths must carry one draw per distinct expiry");
    }
    const auto idx = spec.expiry_index();
    const std::size_t m = spec.options.size();
    std::vector<double> s(expiries.size());
    std::vector<double> y(m);
    std::vector<double> sum(m, 0.0);
    std::vector<double> sum_sq(m, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
        payoffs_into(spec, curve, expiries, idx, paths.draws.row(p), s, y);
        for (std::size_t i = 0; i < m; ++i) {
            sum[i] += y[i];
            sum_sq[i] += y[i] * y[i];
        }
    }
    LossValue out;
    out.expectations.resize(m);
    out.residuals.resize(m);
    out.std_errors.resize(m);
    const double nd = static_cast<double>(n);
    for (std::size_t i = 0; i < m; ++i) {
        const double mean = sum[i] / nd;
        const double var = n > 1 ? std::max(0.0, (sum_sq[i] - nd * mean * mean) / (nd - 1.0)) : 0.0;
        out.expectations[i] = mean;
        out.residuals[i] = mean - spec.options[i].price;
        out.std_errors[i] = std::sqrt(var / nd);
        out.g += 0.5 * out.residuals[i] * out.residuals[i];
    }
    return out;
}

double black_scholes_call(double spot, double strike, double vol, double expiry) {
    if (vol < 0.0 || !(expiry > 0.0)) {
        throw std::invalid_argument("black_scholes_call: need vol >= 0 and expiry > 0");
    }
    if (strike <= 0.0) return spot;
    const double sd = vol * std::sqrt(expiry);
    if (sd == 0.0) return std::max(spot - strike, 0.0);
    const double d1 = std::log(spot / strike) / sd + 0.5 * sd;
    const double d2 = d1 - sd;
    auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
    return spot * cdf(d1) - strike * cdf(d2);
}

Tape build_model_tape(const MarketSpec& spec, const VolCurve& curve) {
    spec.validate();
    curve.validate();
    const auto expiries = spec.expiries();
    const auto idx = spec.expiry_index();
    const ProgramShape shape{curve.size(), expiries.size(), spec.options.size()};
    return record(shape, [&](Recorder& rec) {
        std::vector<Var> sigma;
        for (std::size_t k = 0; k < curve.size(); ++k) sigma.push_back(rec.param());
        std::vector<Var> w;
        for (std::size_t e = 0; e < expiries.size(); ++e) w.push_back(rec.input());

        const Var spot = rec.constant(spec.spot);
        const Var minus_half = rec.constant(-0.5);
        std::vector<Var> s;
        for (std::size_t e = 0; e < expiries.size(); ++e) {
            const CurvePoint p = locate(curve, expiries[e]);
            Var vol = sigma[p.lo];
            if (p.weight != 0.0) {
                vol = vol + rec.constant(p.weight) * (sigma[p.lo + 1] - vol);
            }
            const Var sd = vol * rec.constant(std::sqrt(expiries[e]));
            const Var exponent = minus_half * sd * sd + sd * w[e];
            s.push_back(spot * exp(exponent));
        }
        for (std::size_t i = 0; i < spec.options.size(); ++i) {
            rec.output(max_zero(s[idx[i]] - rec.constant(spec.options[i].strike)));
        }
    });
}

MarketSpec priced_with(const MarketSpec& spec, const VolCurve& curve) {
    MarketSpec out = spec;
    for (auto& o : out.options) {
        o.price = black_scholes_call(spec.spot, o.strike, vol_at(curve, o.expiry), o.expiry);
    }
    return out;
}

VolCurve flat_curve(std::span<const double> times, double vol) {
    VolCurve c;
    c.times.assign(times.begin(), times.end());
    c.vols.assign(times.size(), vol);
    return c;
}

DeskFixture desk_fixture(double reference_vol, double initial_vol) {
    MarketSpec market;
    market.spot = 100.0;
    const double expiries[] = {1.0, 2.0, 3.0, 4.0, 5.0};
    const double strikes[] = {100.0, 105.0, 110.0, 115.0, 120.0};
    for (std::size_t i = 0; i < 5; ++i) {
        market.options.push_back({strikes[i], expiries[i], 0.0});
    }
    DeskFixture f;
    f.reference = flat_curve(expiries, reference_vol);
    f.initial = flat_curve(expiries, initial_vol);
    f.market = priced_with(market, f.reference);
    return f;
}

} // namespace mcgrad
