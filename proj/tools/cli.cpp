#include "cli.hpp"

#include "mcgrad/bench.hpp"
#include "mcgrad/csv.hpp"
#include "mcgrad/optimizer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <ostream>
#include <stdexcept>

namespace mcgrad::cli {

void RunConfig::validate() const {
    if (algorithms.empty()) {
        throw std::invalid_argument("no algorithm selected");
    }
    for (int a : algorithms) algorithm_from_int(a);
    if (n_mc.empty()) {
        throw std::invalid_argument("no N_mc value given");
    }
    for (std::size_t n : n_mc) {
        if (n < 2) {
            throw std::invalid_argument("N_mc values must be >= 2");
        }
    }
    if (batch_width < 1) {
        throw std::invalid_argument("batch width must be >= 1");
    }
    if (threads < 1) {
        throw std::invalid_argument("thread count must be >= 1");
    }
    if (iterations < 1) {
        throw std::invalid_argument("iterations must be >= 1 (the trace always holds the start)");
    }
}

std::size_t parse_count(const std::string& text) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("not a path count: '" + text + "'");
    }
    if (used != text.size() || !(v >= 0.0) || v != std::floor(v) || v > 1e15) {
        throw std::invalid_argument("not a path count: '" + text + "'");
    }
    return static_cast<std::size_t>(v);
}

MarketConfig load_inputs(const RunConfig& config) {
    if (config.spec_path.empty()) {
        DeskFixture f = desk_fixture();
        return {f.market, f.initial};
    }
    return load_market(config.spec_path);
}

namespace {

std::string out_path(const RunConfig& config, const std::string& name) {
    std::filesystem::create_directories(config.out_dir);
    return (std::filesystem::path(config.out_dir) / name).string();
}

EstimatorConfig estimator_config(const RunConfig& config) {
    EstimatorConfig e;
    e.batch_width = config.batch_width;
    e.threads = config.threads;
    e.variance_batches = config.variance_batches;
    return e;
}

std::vector<std::string> numbered(const std::string& prefix, std::size_t count) {
    std::vector<std::string> h;
    for (std::size_t k = 1; k <= count; ++k) h.push_back(prefix + std::to_string(k));
    return h;
}

std::string micros(double seconds) { return format_double(std::round(seconds * 1e6)); }

} // namespace

std::vector<std::string> cmd_variance_table(const RunConfig& config, std::ostream& log) {
    config.validate();
    const MarketConfig in = load_inputs(config);
    const Tape tape = build_model_tape(in.market, in.curve);
    const auto targets = in.market.targets();
    const std::size_t n_params = in.curve.size();
    const std::size_t n_inputs = in.market.expiries().size();

    std::vector<CsvTable> tables(config.algorithms.size());
    for (auto& t : tables) {
        t.header = {"n_mc", "time_us"};
        for (auto& h : numbered("var_", n_params)) t.header.push_back(h);
    }
    for (std::size_t n : config.n_mc) {
        const PathBatch paths = generate(config.seed, n, n_inputs, GeneratorId::Philox4x32_10,
                                         config.threads);
        for (std::size_t a = 0; a < config.algorithms.size(); ++a) {
            const Algorithm alg = algorithm_from_int(config.algorithms[a]);
            const TimedEstimate t = timed_estimate(alg, tape, in.curve.vols, paths, targets,
                                                   estimator_config(config), config.repeats);
            std::vector<std::string> row{std::to_string(n), micros(t.median_seconds)};
            for (double v : t.estimate.variance) row.push_back(format_double(v));
            tables[a].rows.push_back(std::move(row));
            log << "alg " << config.algorithms[a] << "  N_mc " << n << "  "
                << micros(t.median_seconds) << " us  Var G_1 " << t.estimate.variance.front()
                << "\n";
        }
    }
    std::vector<std::string> files;
    for (std::size_t a = 0; a < config.algorithms.size(); ++a) {
        files.push_back(
            out_path(config, "variance_alg" + std::to_string(config.algorithms[a]) + ".csv"));
        write_csv(files.back(), tables[a]);
    }
    return files;
}

std::vector<std::string> cmd_gradient(const RunConfig& config, std::ostream& log) {
    config.validate();
    const MarketConfig in = load_inputs(config);
    const Tape tape = build_model_tape(in.market, in.curve);
    const auto targets = in.market.targets();
    const std::size_t n_params = in.curve.size();
    const std::size_t n_inputs = in.market.expiries().size();

    CsvTable grads;
    grads.header = {"algorithm", "n_mc", "time_us"};
    for (auto& h : numbered("grad_", n_params)) grads.header.push_back(h);
    CsvTable spread;
    spread.header = {"n_mc"};
    for (auto& h : numbered("spread_", n_params)) spread.header.push_back(h);

    for (std::size_t n : config.n_mc) {
        const PathBatch paths = generate(config.seed, n, n_inputs, GeneratorId::Philox4x32_10,
                                         config.threads);
        std::vector<std::vector<double>> results;
        for (int id : config.algorithms) {
            const TimedEstimate t = timed_estimate(algorithm_from_int(id), tape, in.curve.vols,
                                                   paths, targets, estimator_config(config),
                                                   config.repeats);
            std::vector<std::string> row{std::to_string(id), std::to_string(n),
                                         micros(t.median_seconds)};
            for (double g : t.estimate.grad) row.push_back(format_double(g));
            grads.rows.push_back(std::move(row));
            results.push_back(t.estimate.grad);
            log << "alg " << id << "  N_mc " << n << "  grad";
            for (double g : t.estimate.grad) log << " " << g;
            log << "\n";
        }
        if (results.size() > 1) {
            std::vector<std::string> row{std::to_string(n)};
            log << "relative spread at N_mc " << n << ":";
            for (std::size_t k = 0; k < n_params; ++k) {
                double lo = results[0][k];
                double hi = lo;
                double mean = 0.0;
                for (const auto& r : results) {
                    lo = std::min(lo, r[k]);
                    hi = std::max(hi, r[k]);
                    mean += r[k];
                }
                mean /= static_cast<double>(results.size());
                const double s = (hi - lo) / std::fabs(mean);
                row.push_back(format_double(s));
                log << " " << s;
            }
            log << "\n";
            spread.rows.push_back(std::move(row));
        }
    }
    std::vector<std::string> files{out_path(config, "gradient.csv")};
    write_csv(files.back(), grads);
    if (!spread.rows.empty()) {
        files.push_back(out_path(config, "gradient_spread.csv"));
        write_csv(files.back(), spread);
    }
    return files;
}

CsvTable trace_table(const CalibrationTrace& trace) {
    CsvTable t;
    const std::size_t n_params = trace.records.empty() ? 0 : trace.records.front().params.size();
    t.header = {"iter", "loss", "grad_norm"};
    for (auto& h : numbered("param_", n_params)) t.header.push_back(h);
    for (const char* h : {"f_evals", "r_evals", "millis"}) t.header.emplace_back(h);
    for (const auto& r : trace.records) {
        std::vector<std::string> row{std::to_string(r.iter), format_double(r.loss),
                                     format_double(r.grad_norm)};
        for (double p : r.params) row.push_back(format_double(p));
        row.push_back(std::to_string(r.f_evals));
        row.push_back(std::to_string(r.r_evals));
        row.push_back(format_double(r.millis));
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::vector<std::string> cmd_calibrate(const RunConfig& config, std::ostream& log) {
    config.validate();
    const MarketConfig in = load_inputs(config);
    CalibrationConfig cc = default_calibration_config();
    cc.estimator = estimator_config(config);
    cc.lbfgs.max_iter = config.iterations - 1;

    std::vector<std::string> files;
    for (int id : config.algorithms) {
        for (std::size_t n : config.n_mc) {
            const CalibrationResult r =
                calibrate(in.market, in.curve, algorithm_from_int(id), n, config.seed, cc);
            files.push_back(out_path(config, "calibrate_alg" + std::to_string(id) + "_nmc" +
                                                 std::to_string(n) + ".csv"));
            write_csv(files.back(), trace_table(r.trace));
            log << "alg " << id << "  N_mc " << n << "  "
                << termination_name(r.trace.status) << "  G " << r.trace.records.front().loss
                << " -> " << r.trace.records.back().loss << "  knots";
            for (double v : r.curve.vols) log << " " << v;
            log << "\n";
        }
    }
    return files;
}

std::vector<std::string> cmd_measure_speedup(const RunConfig& config, std::ostream& log) {
    config.validate();
    const MarketConfig in = load_inputs(config);
    const Tape tape = build_model_tape(in.market, in.curve);
    const std::size_t n = config.n_mc.front();
    const PathBatch paths = generate(config.seed, n, in.market.expiries().size(),
                                     GeneratorId::Philox4x32_10, config.threads);
    const SpeedupReport rep =
        measure_speedup(tape, in.curve.vols, paths, config.batch_width, config.speedup_runs);

    CsvTable runs;
    runs.header = {"run", "batch_width", "t_f_ns", "t_fv_ns", "t_r_ns", "t_rv_ns", "k_f", "k_r"};
    for (std::size_t i = 0; i < rep.samples.size(); ++i) {
        const auto& s = rep.samples[i];
        runs.rows.push_back({std::to_string(i), std::to_string(rep.batch_width),
                             format_double(s.t_f * 1e9), format_double(s.t_fv * 1e9),
                             format_double(s.t_r * 1e9), format_double(s.t_rv * 1e9),
                             format_double(s.k_f), format_double(s.k_r)});
    }
    CsvTable summary;
    summary.header = {"batch_width", "runs", "k_f_mean", "k_f_var", "k_r_mean", "k_r_var"};
    summary.rows.push_back({std::to_string(rep.batch_width), std::to_string(rep.samples.size()),
                            format_double(rep.k_f_mean), format_double(rep.k_f_var),
                            format_double(rep.k_r_mean), format_double(rep.k_r_var)});
    if (rep.degenerate) log << rep.note << "\n";
    log << "c " << rep.batch_width << "  K_F " << rep.k_f_mean << " (var " << rep.k_f_var
        << ")  K_R " << rep.k_r_mean << " (var " << rep.k_r_var << ")\n";

    std::vector<std::string> files{out_path(config, "speedup_runs.csv"),
                                   out_path(config, "speedup.csv")};
    write_csv(files[0], runs);
    write_csv(files[1], summary);
    return files;
}

std::vector<std::string> run(const RunConfig& config, std::ostream& log) {
    if (config.command == "variance-table") return cmd_variance_table(config, log);
    if (config.command == "gradient") return cmd_gradient(config, log);
    if (config.command == "calibrate") return cmd_calibrate(config, log);
    if (config.command == "measure-speedup") return cmd_measure_speedup(config, log);
    throw std::invalid_argument("unknown command: " + config.command);
}

int main(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Monte-Carlo adjoint gradient estimators and volatility calibration"};
    app.set_config("--config", "", "TOML/INI file with option defaults (flags take precedence)");
    app.require_subcommand(1);
    app.fallthrough();

    RunConfig config;
    std::vector<std::string> nmc_text{"1e5", "1e6"};
    app.add_option("--spec", config.spec_path, "market file (default: built-in fixture)")
        ->check(CLI::ExistingFile);
    app.add_option("--alg", config.algorithms, "algorithms, e.g. 1,2,3")->delimiter(',');
    app.add_option("--nmc", nmc_text, "path counts, e.g. 1e5,1e6")->delimiter(',');
    app.add_option("--seed", config.seed, "RNG seed");
    app.add_option("--batch-width", config.batch_width, "replay batch width c");
    app.add_option("--threads", config.threads, "worker threads");
    app.add_option("--out", config.out_dir, "output directory");
    app.add_option("--iterations", config.iterations, "calibrate: trace rows (start + steps)");
    app.add_option("--variance-batches", config.variance_batches, "batch-means batch count");
    app.add_option("--repeats", config.repeats, "timing repetitions per table row (median)");
    app.add_option("--runs", config.speedup_runs, "measure-speedup repetitions");

    app.add_subcommand("variance-table", "variance and time per algorithm and N_mc");
    app.add_subcommand("gradient", "gradient per algorithm and cross-algorithm spread");
    app.add_subcommand("calibrate", "L-BFGS calibration traces");
    app.add_subcommand("measure-speedup", "batched replay coefficients K_F, K_R");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }
    try {
        config.command = app.get_subcommands().front()->get_name();
        config.n_mc.clear();
        for (const auto& t : nmc_text) config.n_mc.push_back(parse_count(t));
        for (const auto& f : run(config, out)) out << "wrote " << f << "\n";
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace mcgrad::cli
