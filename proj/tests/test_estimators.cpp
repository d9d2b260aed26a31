#include "mcgrad/errors.hpp"
#include "mcgrad/estimators.hpp"
#include "mcgrad/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

using namespace mcgrad;

namespace {

constexpr Algorithm kAll[] = {Algorithm::TwoPass, Algorithm::LaggedPath, Algorithm::RunningMean};

// Linear toy model: y1 = a (1 + w1), y2 = b (2 + w2) + a w1.
// E y1 = a, E y2 = 2b, E dy1/da = 1, E dy2/da = E w1 = 0, E dy2/db = 2, so
// dG/da = (a - C1), dG/db = 2 (2b - C2).
Tape toy_tape() {
    return record({2, 2, 2}, [](Recorder& r) {
        Var a = r.param();
        Var b = r.param();
        Var w1 = r.input();
        Var w2 = r.input();
        r.output(a * (1.0 + w1));
        r.output(b * (2.0 + w2) + a * w1);
    });
}

std::vector<double> toy_gradient(double a, double b, double c1, double c2) {
    return {a - c1, 2.0 * (2.0 * b - c2)};
}

const std::vector<double> kToyParams{1.5, -0.5};
const std::vector<double> kToyTargets{1.0, 0.25};

struct Fixture {
    DeskFixture fx = desk_fixture();
    Tape tape = build_model_tape(fx.market, fx.initial);
    std::vector<double> targets = fx.market.targets();
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

const PathBatch& fixture_paths(std::size_t n) {
    static std::map<std::size_t, PathBatch> cache;
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, generate(1234, n, 5)).first;
    return it->second;
}

} // namespace

TEST(Counts, ClosedForm) {
    const Tape t = toy_tape();
    const PathBatch p = generate(1, 100, 2);
    const auto e1 = grad_est1(t, kToyParams, p, kToyTargets);
    EXPECT_EQ(e1.f_evals, 200u);
    EXPECT_EQ(e1.r_evals, 100u);
    for (auto alg : {Algorithm::LaggedPath, Algorithm::RunningMean}) {
        const auto e = grad_est_scalar(alg, t, kToyParams, p, kToyTargets);
        EXPECT_EQ(e.f_evals, 100u);
        EXPECT_EQ(e.r_evals, 99u);
    }
    EstimatorConfig cache;
    cache.cache_forward = true;
    EXPECT_EQ(grad_est1(t, kToyParams, p, kToyTargets, cache).f_evals, 100u);
}

TEST(Counts, BatchedForEveryWidth) {
    const Tape t = toy_tape();
    for (std::size_t n : {2u, 3u, 17u, 100u}) {
        const PathBatch p = generate(1, n, 2);
        for (std::size_t c : {1u, 2u, 4u, 8u, 32u}) {
            EstimatorConfig cfg;
            cfg.batch_width = c;
            for (auto alg : kAll) {
                const auto e = grad_est_batched(alg, t, kToyParams, p, kToyTargets, cfg);
                EXPECT_EQ(e.f_evals, expected_f_evals(alg, n));
                EXPECT_EQ(e.r_evals, expected_r_evals(alg, n));
                EXPECT_EQ(e.batch_width, c);
            }
        }
    }
}

TEST(Estimators, ParameterIndependentPayoffGivesZero) {
    const Tape t = record({1, 1, 1}, [](Recorder& r) {
        Var a = r.param();
        Var w = r.input();
        r.output(r.constant(3.0) + w + 0.0 * a);
    });
    const PathBatch p = generate(2, 50, 1);
    for (auto alg : kAll) {
        const auto e = grad_est_scalar(alg, t, std::vector{0.3}, p, std::vector{1.0});
        EXPECT_EQ(e.grad[0], 0.0) << algorithm_name(alg);
    }
}

TEST(Estimators, LaggedResidualVanishesWhenTargetEqualsOutput) {
    // y = a regardless of w; C = a makes every lagged residual exactly 0
    const Tape t = record({1, 1, 1}, [](Recorder& r) {
        Var a = r.param();
        Var w = r.input();
        r.output(a + 0.0 * w);
    });
    const PathBatch p = generate(2, 50, 1);
    for (auto alg : {Algorithm::LaggedPath, Algorithm::RunningMean}) {
        EXPECT_EQ(grad_est_scalar(alg, t, std::vector{0.75}, p, std::vector{0.75}).grad[0], 0.0);
        EstimatorConfig cfg;
        EXPECT_EQ(grad_est_batched(alg, t, std::vector{0.75}, p, std::vector{0.75}, cfg).grad[0],
                  0.0);
    }
}

TEST(EstimatorsProperty, LaggedBatchMeansVarianceMatchesSpreadOverSeeds) {
    const Tape t = toy_tape();
    const int seeds = 100;
    double sum[2] = {}, sq[2] = {}, reported[2] = {};
    for (int s = 0; s < seeds; ++s) {
        const auto e = grad_est_batched(Algorithm::LaggedPath, t, kToyParams,
                                        generate(900 + s, 20000, 2), kToyTargets, EstimatorConfig{});
        for (int k = 0; k < 2; ++k) {
            sum[k] += e.grad[k];
            sq[k] += e.grad[k] * e.grad[k];
            reported[k] += e.variance[k] / seeds;
        }
    }
    for (int k = 0; k < 2; ++k) {
        const double mean = sum[k] / seeds;
        const double spread = (sq[k] - seeds * mean * mean) / (seeds - 1);
        // sample variance over 100 seeds is itself uncertain by about 14%
        EXPECT_GT(spread / reported[k], 0.6) << k;
        EXPECT_LT(spread / reported[k], 1.6) << k;
    }
}

TEST(Estimators, RejectInvalidInputs) {
    const Tape t = toy_tape();
    PathBatch one{Matrix(1, 2), 0, GeneratorId::Philox4x32_10};
    EXPECT_NO_THROW(grad_est1(t, kToyParams, one, kToyTargets));
    EXPECT_THROW(grad_est2(t, kToyParams, one, kToyTargets), std::invalid_argument);
    EXPECT_THROW(grad_est3(t, kToyParams, one, kToyTargets), std::invalid_argument);
    PathBatch empty{Matrix(0, 2), 0, GeneratorId::Philox4x32_10};
    EXPECT_THROW(grad_est1(t, kToyParams, empty, kToyTargets), std::invalid_argument);
    const PathBatch p = generate(1, 10, 2);
    EXPECT_THROW(grad_est1(t, std::vector{1.0}, p, kToyTargets), DimensionError);
    EXPECT_THROW(grad_est1(t, kToyParams, p, std::vector{1.0}), DimensionError);
    EXPECT_THROW(grad_est1(t, kToyParams, generate(1, 10, 3), kToyTargets), DimensionError);
    EstimatorConfig zero;
    zero.batch_width = 0;
    EXPECT_THROW(grad_est_batched(Algorithm::TwoPass, t, kToyParams, p, kToyTargets, zero),
                 BatchWidthError);
}

TEST(Estimators, TooFewTermsGiveNanVariance) {
    const Tape t = toy_tape();
    const PathBatch p = generate(1, 20, 2);
    const auto e = grad_est2(t, kToyParams, p, kToyTargets);
    EXPECT_TRUE(std::isnan(e.variance[0]));
    EXPECT_TRUE(std::isfinite(e.grad[0]));
}

TEST(Batched, WidthOneIsBitIdenticalToScalar) {
    const auto& f = fixture();
    const PathBatch& p = fixture_paths(10007);
    EstimatorConfig cfg;
    cfg.batch_width = 1;
    for (auto alg : kAll) {
        const auto s = grad_est_scalar(alg, f.tape, f.fx.initial.vols, p, f.targets, cfg);
        const auto b = grad_est_batched(alg, f.tape, f.fx.initial.vols, p, f.targets, cfg);
        EXPECT_EQ(s.grad, b.grad) << algorithm_name(alg);
        EXPECT_EQ(s.mean_outputs, b.mean_outputs);
        for (std::size_t k = 0; k < s.variance.size(); ++k) EXPECT_EQ(s.variance[k], b.variance[k]);
    }
}

TEST(Batched, TwoPassAgreesWithScalarForAnyWidthAndThreads) {
    const auto& f = fixture();
    const PathBatch& p = fixture_paths(10007);
    const auto s = grad_est1(f.tape, f.fx.initial.vols, p, f.targets);
    for (std::size_t c : {2u, 3u, 8u, 16u}) {
        for (std::size_t threads : {1u, 3u}) {
            for (bool cache : {false, true}) {
                EstimatorConfig cfg;
                cfg.batch_width = c;
                cfg.threads = threads;
                cfg.cache_forward = cache;
                const auto b = grad_est_batched(Algorithm::TwoPass, f.tape, f.fx.initial.vols, p,
                                                f.targets, cfg);
                for (std::size_t k = 0; k < s.grad.size(); ++k) {
                    EXPECT_LE(std::fabs(b.grad[k] - s.grad[k]), 1e-12 * std::fabs(s.grad[k]));
                }
            }
        }
    }
}

TEST(Batched, ThreadCountDoesNotChangeTwoPass) {
    const auto& f = fixture();
    const PathBatch& p = fixture_paths(10007);
    EstimatorConfig one, four;
    four.threads = 4;
    const auto a = grad_est_batched(Algorithm::TwoPass, f.tape, f.fx.initial.vols, p, f.targets, one);
    const auto b = grad_est_batched(Algorithm::TwoPass, f.tape, f.fx.initial.vols, p, f.targets, four);
    EXPECT_EQ(a.grad, b.grad);
    EXPECT_EQ(a.variance, b.variance);
}

TEST(Batched, LaggedPairingFollowsChunkRule) {
    // Identity-like tape: y = a * w, dy/da = w. With C = 0 the lagged term for
    // path j is y(paired path) * w_j, so the pairing can be read off directly.
    const Tape t = record({1, 1, 1}, [](Recorder& r) {
        Var a = r.param();
        r.output(a * r.input());
    });
    const PathBatch p = generate(5, 11, 1);
    const std::size_t c = 4;
    EstimatorConfig cfg;
    cfg.batch_width = c;
    const auto e = grad_est_batched(Algorithm::LaggedPath, t, std::vector{1.0}, p, std::vector{0.0},
                                    cfg);
    double want = 0.0;
    for (std::size_t j = 1; j < 11; ++j) {
        const std::size_t partner = j < c ? j - 1 : j - c;
        want += p.draws(partner, 0) * p.draws(j, 0);
    }
    EXPECT_NEAR(e.grad[0], want / 10.0, 1e-14);

    const auto r = grad_est_batched(Algorithm::RunningMean, t, std::vector{1.0}, p,
                                    std::vector{0.0}, cfg);
    double want3 = 0.0;
    for (std::size_t j = 1; j < 11; ++j) {
        const std::size_t seen = j < c ? j : j / c * c;
        double s = 0.0;
        for (std::size_t m = 0; m < seen; ++m) s += p.draws(m, 0);
        want3 += s / double(seen) * p.draws(j, 0);
    }
    EXPECT_NEAR(r.grad[0], want3 / 10.0, 1e-14);
}

TEST(Batched, LaggedEstimatorsStayWithinThreeStandardErrorsOfTwoPass) {
    const auto& f = fixture();
    const PathBatch& p = fixture_paths(1000000);
    EstimatorConfig cfg;
    cfg.batch_width = 8;
    const auto e1 = grad_est_batched(Algorithm::TwoPass, f.tape, f.fx.initial.vols, p, f.targets, cfg);
    for (auto alg : {Algorithm::LaggedPath, Algorithm::RunningMean}) {
        const auto e = grad_est_batched(alg, f.tape, f.fx.initial.vols, p, f.targets, cfg);
        for (std::size_t k = 0; k < e.grad.size(); ++k) {
            const double se = std::sqrt(e.variance[k] + e1.variance[k]);
            EXPECT_LT(std::fabs(e.grad[k] - e1.grad[k]), 3.0 * se)
                << algorithm_name(alg) << " k=" << k;
        }
    }
}

TEST(Variance, RunningMeanVarianceCloseToTwoPass) {
    const auto& f = fixture();
    const PathBatch& p = fixture_paths(1000000);
    EstimatorConfig cfg;
    cfg.variance_batches = 1000;
    const auto e1 = grad_est_batched(Algorithm::TwoPass, f.tape, f.fx.initial.vols, p, f.targets, cfg);
    const auto e3 =
        grad_est_batched(Algorithm::RunningMean, f.tape, f.fx.initial.vols, p, f.targets, cfg);
    for (std::size_t k = 0; k < e1.variance.size(); ++k) {
        EXPECT_LE(e3.variance[k], 1.5 * e1.variance[k]) << "k=" << k;
    }
}

TEST(Variance, TwoPassScalesInverselyWithPaths) {
    const auto& f = fixture();
    EstimatorConfig cfg;
    const auto small = grad_est_batched(Algorithm::TwoPass, f.tape, f.fx.initial.vols,
                                        fixture_paths(100000), f.targets, cfg);
    const auto large = grad_est_batched(Algorithm::TwoPass, f.tape, f.fx.initial.vols,
                                        fixture_paths(1000000), f.targets, cfg);
    const double ratio = small.variance[0] / large.variance[0];
    EXPECT_GT(ratio, 10.0 * 0.75);
    EXPECT_LT(ratio, 10.0 * 1.25);
}

TEST(EstimateVariance, ConstantTermsGiveZero) {
    Matrix terms(1000, 2);
    for (std::size_t i = 0; i < 1000; ++i) {
        terms(i, 0) = 3.0;
        terms(i, 1) = -1.25;
    }
    for (auto alg : kAll) {
        for (double v : estimate_variance(terms, alg)) EXPECT_EQ(v, 0.0);
    }
}

TEST(EstimateVariance, IidTermsGiveOneOverN) {
    const std::size_t n = 100000;
    Matrix terms(n, 1);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n01;
    for (std::size_t i = 0; i < n; ++i) terms(i, 0) = n01(rng);
    const double want = 1.0 / double(n);
    EXPECT_NEAR(estimate_variance(terms, Algorithm::TwoPass)[0], want, 0.2 * want);
    EXPECT_NEAR(estimate_variance(terms, Algorithm::LaggedPath, 1000)[0], want, 0.2 * want);
    EXPECT_NEAR(estimate_variance(terms, Algorithm::RunningMean, 1000)[0], want, 0.2 * want);
}

TEST(EstimateVariance, RejectsTooFewTerms) {
    EXPECT_THROW(estimate_variance(Matrix(100, 1), Algorithm::LaggedPath, 32), std::invalid_argument);
    EXPECT_NO_THROW(estimate_variance(Matrix(512, 1), Algorithm::LaggedPath, 32));
    EXPECT_THROW(estimate_variance(Matrix(0, 1), Algorithm::TwoPass), std::invalid_argument);
}

TEST(TermAccumulator, BatchesAreContiguousAndMeanIsExactAverage) {
    for (std::size_t n : {16u, 33u, 1000u}) {
        for (std::size_t b : {1u, 2u, 7u, 16u}) {
            TermAccumulator acc(1, n, b);
            std::size_t prev = 0;
            for (std::size_t t = 0; t < n; ++t) {
                const std::size_t k = acc.batch_of(t);
                EXPECT_GE(k, prev);
                EXPECT_LE(k, prev + 1);
                EXPECT_GE(t, acc.batch_begin(k));
                prev = k;
                acc.add(t, std::vector{double(t)});
            }
            EXPECT_EQ(prev, b - 1);
            EXPECT_NEAR(acc.mean()[0], double(n - 1) / 2.0, 1e-12 * double(n));
        }
    }
}

TEST(RunningMean, EqualsLeftToRightSumOverCount) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n01;
    RunningMean s(2);
    double s0 = 0.0, s1 = 0.0;
    for (int j = 1; j <= 1000; ++j) {
        const double a = n01(rng), b = n01(rng);
        s.add(std::vector{a, b});
        s0 += a;
        s1 += b;
        EXPECT_EQ(s.mean(0), s0 / double(j));
        EXPECT_EQ(s.mean(1), s1 / double(j));
        EXPECT_EQ(s.count(), std::size_t(j));
    }
}

TEST(Unbiasedness, MeanOverSeedsMatchesSymbolicGradient) {
    const Tape t = toy_tape();
    const auto want = toy_gradient(kToyParams[0], kToyParams[1], kToyTargets[0], kToyTargets[1]);
    const std::size_t seeds = 200;
    for (auto alg : kAll) {
        std::vector<double> sum(2, 0.0), sum_sq(2, 0.0);
        for (std::size_t s = 0; s < seeds; ++s) {
            const PathBatch p = generate(derive_seed(555, s), 10000, 2);
            const auto e = grad_est_batched(alg, t, kToyParams, p, kToyTargets, {});
            for (std::size_t k = 0; k < 2; ++k) {
                sum[k] += e.grad[k];
                sum_sq[k] += e.grad[k] * e.grad[k];
            }
        }
        for (std::size_t k = 0; k < 2; ++k) {
            const double mean = sum[k] / double(seeds);
            const double sd = std::sqrt((sum_sq[k] - double(seeds) * mean * mean) / double(seeds - 1));
            EXPECT_LT(std::fabs(mean - want[k]), 4.0 * sd / std::sqrt(double(seeds)))
                << algorithm_name(alg) << " k=" << k;
        }
    }
}

TEST(AlgorithmId, Parse) {
    EXPECT_EQ(algorithm_from_int(2), Algorithm::LaggedPath);
    EXPECT_THROW(algorithm_from_int(4), std::invalid_argument);
    EXPECT_THROW(algorithm_from_int(0), std::invalid_argument);
}
