#pragma once

// Seeded i.i.d. standard-normal path draws.
//
// Draw (path p, column n) is a pure function of (seed, p, n): a Philox4x32-10
// block keyed by the seed is evaluated at counter (n, p_lo, p_hi, 0) and the
// first 64 output bits become a uniform in (0, 1), mapped to N(0, 1) by the
// inverse normal CDF. Any path can be produced without generating the ones
// before it, so chunks may be produced in any order or in parallel.

#include "mcgrad/matrix.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace mcgrad {

enum class GeneratorId : std::uint8_t {
    Philox4x32_10,
};

std::string_view generator_name(GeneratorId id);
GeneratorId parse_generator(std::string_view name);

/// One Philox4x32-10 block.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

/// Inverse standard-normal CDF.
double normal_quantile(double p);

/// Pure address-based draw.
double normal_draw(std::uint64_t seed, std::uint64_t path, std::uint64_t column,
                   GeneratorId gen = GeneratorId::Philox4x32_10);

struct PathBatch {
    Matrix draws;  // n_paths x n_inputs, row = path
    std::uint64_t seed = 0;
    GeneratorId generator = GeneratorId::Philox4x32_10;

    std::size_t n_paths() const { return draws.rows(); }
    std::size_t n_inputs() const { return draws.cols(); }
};

/// Materialize n_paths x n_inputs draws. Requires n_paths >= 2 (the lagged
/// estimators pair path j with j-1) and n_inputs >= 1.
PathBatch generate(std::uint64_t seed, std::size_t n_paths, std::size_t n_inputs,
                   GeneratorId gen = GeneratorId::Philox4x32_10, std::size_t threads = 1);

/// A width-c slice of a path batch. Rows at or beyond `active` are padding
/// (zero draws) and must not contribute to any estimator sum.
struct Chunk {
    std::size_t first_path = 0;
    std::size_t active = 0;
    Matrix block;  // width x n_inputs
};

/// Fill `out` with paths [first_path, first_path + width) from `batch`,
/// zero-padding past the end. Returns the number of active lanes.
std::size_t fill_chunk(const PathBatch& batch, std::size_t first_path, std::size_t width,
                       Matrix& out);

/// Regenerate the same chunk from its address, without a materialized batch.
std::size_t fill_chunk(std::uint64_t seed, GeneratorId gen, std::size_t n_paths,
                       std::size_t n_inputs, std::size_t first_path, std::size_t width,
                       Matrix& out);

/// Chunks of `width` paths in path order; the last one may be ragged.
std::vector<Chunk> chunks(const PathBatch& batch, std::size_t width);

/// Derive an independent stream seed (e.g. one per optimizer step).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace mcgrad
