#pragma once

#include "mcgrad/csv.hpp"
#include "mcgrad/estimators.hpp"
#include "mcgrad/market_io.hpp"
#include "mcgrad/optimizer.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mcgrad::cli {

struct RunConfig {
    std::string command;
    std::string spec_path;  // empty: built-in desk fixture
    std::vector<int> algorithms{1, 2, 3};
    std::vector<std::size_t> n_mc{100000, 1000000};
    std::uint64_t seed = 42;
    std::size_t batch_width = 8;
    std::size_t threads = 1;
    std::string out_dir = ".";
    std::size_t iterations = 20;        // calibrate: trace rows
    std::size_t variance_batches = 32;  // batch-means variance
    std::size_t repeats = 3;            // timing repetitions (median)
    std::size_t speedup_runs = 5;

    void validate() const;
};

/// Parse "1e6", "100000", ... into a path count.
std::size_t parse_count(const std::string& text);

/// Market + evaluation curve for a config.
MarketConfig load_inputs(const RunConfig& config);

/// iter, loss, grad_norm, param_1..M, f_evals, r_evals, millis
CsvTable trace_table(const CalibrationTrace& trace);

// Each command writes its CSV files under config.out_dir, prints a short
// human-readable summary to `log` and returns the written paths.
std::vector<std::string> cmd_variance_table(const RunConfig& config, std::ostream& log);
std::vector<std::string> cmd_gradient(const RunConfig& config, std::ostream& log);
std::vector<std::string> cmd_calibrate(const RunConfig& config, std::ostream& log);
std::vector<std::string> cmd_measure_speedup(const RunConfig& config, std::ostream& log);

std::vector<std::string> run(const RunConfig& config, std::ostream& log);

/// Full command line entry point. Returns the process exit code.
int main(int argc, char** argv, std::ostream& out, std::ostream& err);

} // namespace mcgrad::cli
