#include "mcgrad/paths.hpp"

#include "mcgrad/errors.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>

namespace mcgrad {

std::string_view generator_name(GeneratorId id) {
    switch (id) {
    case GeneratorId::Philox4x32_10: return "philox4x32-10";
    }
    return "?";
}

GeneratorId parse_generator(std::string_view name) {
    if (name == "philox4x32-10" || name == "philox") {
        return GeneratorId::Philox4x32_10;
    }
    throw std::invalid_argument("unknown generator: " + std::string(name));
}

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
    constexpr std::uint64_t kM0 = 0xD2511F53u;
    constexpr std::uint64_t kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u;
    constexpr std::uint32_t kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kW0;
            key[1] += kW1;
        }
        const std::uint64_t p0 = kM0 * ctr[0];
        const std::uint64_t p1 = kM1 * ctr[2];
        ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
               static_cast<std::uint32_t>(p1),
               static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
               static_cast<std::uint32_t>(p0)};
    }
    return ctr;
}

double normal_quantile(double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::domain_error("normal_quantile: p outside [0, 1]");
    }
    if (p == 0.0) return -HUGE_VAL;
    if (p == 1.0) return HUGE_VAL;
    // -sqrt(2) erfc^-1(2p) keeps full relative accuracy in the lower tail
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double normal_draw(std::uint64_t seed, std::uint64_t path, std::uint64_t column, GeneratorId) {
    const auto out = philox4x32_10(
        {static_cast<std::uint32_t>(column), static_cast<std::uint32_t>(path),
         static_cast<std::uint32_t>(path >> 32), static_cast<std::uint32_t>(column >> 32)},
        {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
    const std::uint64_t bits = (std::uint64_t{out[0]} << 32) | out[1];
    // 53-bit midpoint grid, strictly inside (0, 1)
    const double u = (static_cast<double>(bits >> 11) + 0.5) * 0x1p-53;
    return normal_quantile(u);
}

PathBatch generate(std::uint64_t seed, std::size_t n_paths, std::size_t n_inputs, GeneratorId gen,
                   std::size_t threads) {
    if (n_paths < 2) {
        throw std::invalid_argument(
            "generate: need at least 2 paths (the lagged estimators pair path j with path j-1)");
    }
    if (n_inputs < 1) {
        throw std::invalid_argument("generate: need at least one random input per path");
    }
    PathBatch batch{Matrix(n_paths, n_inputs), seed, gen};
    auto fill_range = [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            auto row = batch.draws.row(p);
            for (std::size_t n = 0; n < n_inputs; ++n) {
                row[n] = normal_draw(seed, p, n, gen);
            }
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads, n_paths));
    if (threads == 1) {
        fill_range(0, n_paths);
        return batch;
    }
    std::vector<std::jthread> workers;
    const std::size_t per = (n_paths + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t begin = t * per;
        const std::size_t end = std::min(n_paths, begin + per);
        if (begin < end) {
            workers.emplace_back(fill_range, begin, end);
        }
    }
    return batch;
}

std::size_t fill_chunk(const PathBatch& batch, std::size_t first_path, std::size_t width,
                       Matrix& out) {
    const std::size_t n_inputs = batch.n_inputs();
    if (out.rows() != width || out.cols() != n_inputs) {
        out = Matrix(width, n_inputs);
    }
    const std::size_t active =
        first_path < batch.n_paths() ? std::min(width, batch.n_paths() - first_path) : 0;
    for (std::size_t l = 0; l < width; ++l) {
        auto dst = out.row(l);
        if (l < active) {
            auto src = batch.draws.row(first_path + l);
            std::copy(src.begin(), src.end(), dst.begin());
        } else {
            std::fill(dst.begin(), dst.end(), 0.0);
        }
    }
    return active;
}

std::size_t fill_chunk(std::uint64_t seed, GeneratorId gen, std::size_t n_paths,
                       std::size_t n_inputs, std::size_t first_path, std::size_t width,
                       Matrix& out) {
    if (out.rows() != width || out.cols() != n_inputs) {
        out = Matrix(width, n_inputs);
    }
    const std::size_t active =
        first_path < n_paths ? std::min(width, n_paths - first_path) : 0;
    for (std::size_t l = 0; l < width; ++l) {
        for (std::size_t n = 0; n < n_inputs; ++n) {
            out(l, n) = l < active ? normal_draw(seed, first_path + l, n, gen) : 0.0;
        }
    }
    return active;
}

std::vector<Chunk> chunks(const PathBatch& batch, std::size_t width) {
    if (width == 0) {
        throw BatchWidthError("chunk width must be positive");
    }
    std::vector<Chunk> out;
    for (std::size_t first = 0; first < batch.n_paths(); first += width) {
        Chunk c;
        c.first_path = first;
        c.active = fill_chunk(batch, first, width, c.block);
        out.push_back(std::move(c));
    }
    return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer over (seed, stream)
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

} // namespace mcgrad
