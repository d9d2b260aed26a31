#include "cli.hpp"

#include "mcgrad/csv.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mcgrad;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("mcgrad_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    int run(std::vector<std::string> args) {
        args.insert(args.begin(), "mcgrad");
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        out_.str("");
        err_.str("");
        return cli::main(int(argv.size()), argv.data(), out_, err_);
    }

    std::string file(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
    std::ostringstream out_;
    std::ostringstream err_;
};

} // namespace

TEST(ParseCount, AcceptsScientificNotation) {
    EXPECT_EQ(cli::parse_count("1e6"), 1000000u);
    EXPECT_EQ(cli::parse_count("250"), 250u);
    EXPECT_THROW(cli::parse_count("1.5"), std::invalid_argument);
    EXPECT_THROW(cli::parse_count("abc"), std::invalid_argument);
    EXPECT_THROW(cli::parse_count("-3"), std::invalid_argument);
}

TEST(Csv, RoundTripPreservesDoubles) {
    CsvTable t;
    t.header = {"a", "b"};
    t.rows = {{format_double(0.1), format_double(1.0 / 3.0)}, {format_double(-2e-300), "7"}};
    std::stringstream ss;
    write_csv(ss, t);
    const CsvTable back = read_csv(ss);
    EXPECT_EQ(back.header, t.header);
    EXPECT_EQ(back.rows, t.rows);
    EXPECT_EQ(back.number(0, "b"), 1.0 / 3.0);
    EXPECT_EQ(back.number(1, 0), -2e-300);
}

TEST(Csv, RaggedRowsRejected) {
    std::istringstream in("a,b\n1,2\n3\n");
    EXPECT_THROW(read_csv(in, "x.csv"), std::runtime_error);
}

TEST_F(CliTest, VarianceTableShape) {
    ASSERT_EQ(run({"variance-table", "--alg", "1,2,3", "--nmc", "1e5,1e6", "--repeats", "1",
                   "--out", dir_.string()}),
              0)
        << err_.str();
    std::size_t rows = 0;
    for (int a = 1; a <= 3; ++a) {
        const CsvTable t = read_csv(file("variance_alg" + std::to_string(a) + ".csv"));
        EXPECT_EQ(t.header.size(), 2u + 5u);
        rows += t.rows.size();
        // variances shrink with N_mc
        for (std::size_t k = 1; k <= 5; ++k) {
            const std::string col = "var_" + std::to_string(k);
            EXPECT_LT(t.number(1, col), t.number(0, col)) << "alg " << a << " " << col;
        }
        EXPECT_EQ(t.number(0, "n_mc"), 1e5);
        EXPECT_EQ(t.number(1, "n_mc"), 1e6);
    }
    EXPECT_EQ(rows, 6u);
}

TEST_F(CliTest, GradientShape) {
    ASSERT_EQ(run({"gradient", "--nmc", "1e4", "--repeats", "1", "--out", dir_.string()}), 0);
    const CsvTable t = read_csv(file("gradient.csv"));
    EXPECT_EQ(t.rows.size(), 3u);
    EXPECT_EQ(t.header.size(), 3u + 5u);
    const CsvTable s = read_csv(file("gradient_spread.csv"));
    EXPECT_EQ(s.rows.size(), 1u);

    ASSERT_EQ(run({"gradient", "--alg", "2", "--nmc", "1e4", "--out", dir_.string()}), 0);
    const CsvTable one = read_csv(file("gradient.csv"));
    ASSERT_EQ(one.rows.size(), 1u);
    EXPECT_EQ(one.number(0, "algorithm"), 2.0);
}

TEST_F(CliTest, CalibrateTraceRowsAndFiles) {
    ASSERT_EQ(run({"calibrate", "--alg", "1", "--nmc", "20000", "--iterations", "20", "--out",
                   dir_.string()}),
              0)
        << err_.str();
    const CsvTable t = read_csv(file("calibrate_alg1_nmc20000.csv"));
    EXPECT_EQ(t.rows.size(), 20u);
    EXPECT_EQ(t.header.front(), "iter");
    EXPECT_EQ(t.header.back(), "millis");
    EXPECT_EQ(t.header.size(), 3u + 5u + 3u);
    EXPECT_LT(t.number(t.rows.size() - 1, "loss"), t.number(0, "loss"));

    ASSERT_EQ(run({"calibrate", "--alg", "3", "--nmc", "1000,2000", "--iterations", "3", "--out",
                   dir_.string()}),
              0);
    EXPECT_TRUE(fs::exists(file("calibrate_alg3_nmc1000.csv")));
    EXPECT_TRUE(fs::exists(file("calibrate_alg3_nmc2000.csv")));
}

TEST_F(CliTest, MeasureSpeedup) {
    ASSERT_EQ(run({"measure-speedup", "--nmc", "20000", "--batch-width", "8", "--out",
                   dir_.string()}),
              0);
    const CsvTable runs = read_csv(file("speedup_runs.csv"));
    EXPECT_EQ(runs.rows.size(), 5u);
    const CsvTable s = read_csv(file("speedup.csv"));
    for (const char* k : {"k_f_mean", "k_r_mean", "k_f_var", "k_r_var"}) {
        const double v = s.number(0, k);
        EXPECT_TRUE(std::isfinite(v)) << k;
        EXPECT_GE(v, 0.0) << k;
    }
    EXPECT_GT(s.number(0, "k_f_mean"), 0.0);

    ASSERT_EQ(run({"measure-speedup", "--nmc", "1000", "--batch-width", "1", "--out",
                   dir_.string()}),
              0);
    const CsvTable d = read_csv(file("speedup.csv"));
    EXPECT_EQ(d.number(0, "k_f_mean"), 1.0);
    EXPECT_EQ(d.number(0, "k_r_mean"), 1.0);
    EXPECT_NE(out_.str().find("by definition"), std::string::npos);
}

TEST_F(CliTest, SeedGivesBitReproducibleNumbers) {
    auto grads = [&](const std::string& seed) {
        EXPECT_EQ(run({"gradient", "--nmc", "5000", "--seed", seed, "--out", dir_.string()}), 0);
        CsvTable t = read_csv(file("gradient.csv"));
        for (auto& r : t.rows) r[2] = "";  // drop the timing column
        return t.rows;
    };
    EXPECT_EQ(grads("7"), grads("7"));
    EXPECT_NE(grads("7"), grads("8"));
}

TEST_F(CliTest, ConfigFileBelowFlags) {
    {
        std::ofstream cfg(file("run.toml"));
        cfg << "alg = [2]\nnmc = [\"3000\"]\nseed = 5\nout = \"" << dir_.string() << "\"\n";
    }
    ASSERT_EQ(run({"gradient", "--config", file("run.toml")}), 0) << err_.str();
    const CsvTable from_file = read_csv(file("gradient.csv"));
    ASSERT_EQ(from_file.rows.size(), 1u);
    EXPECT_EQ(from_file.number(0, "algorithm"), 2.0);
    EXPECT_EQ(from_file.number(0, "n_mc"), 3000.0);

    ASSERT_EQ(run({"gradient", "--config", file("run.toml"), "--alg", "1,3"}), 0) << err_.str();
    const CsvTable flagged = read_csv(file("gradient.csv"));
    ASSERT_EQ(flagged.rows.size(), 2u);
    EXPECT_EQ(flagged.number(0, "algorithm"), 1.0);
    EXPECT_EQ(flagged.number(0, "n_mc"), 3000.0);
}

TEST_F(CliTest, MarketFileInput) {
    {
        std::ofstream m(file("desk.market"));
        m << "spot = 100\nreference_vol = 0.2\noption = 100 1\noption = 110 2\n"
             "knot = 1 0.3\nknot = 2 0.3\n";
    }
    ASSERT_EQ(run({"gradient", "--spec", file("desk.market"), "--nmc", "2000", "--out",
                   dir_.string()}),
              0)
        << err_.str();
    const CsvTable t = read_csv(file("gradient.csv"));
    EXPECT_EQ(t.header.size(), 3u + 2u);
}

TEST_F(CliTest, InvalidInputsFail) {
    EXPECT_NE(run({"gradient", "--alg", "4", "--out", dir_.string()}), 0);
    EXPECT_NE(run({"gradient", "--nmc", "1", "--out", dir_.string()}), 0);
    EXPECT_NE(run({"gradient", "--spec", "/nonexistent.market"}), 0);
    EXPECT_NE(run({}), 0);
    EXPECT_NE(run({"bogus"}), 0);
}
