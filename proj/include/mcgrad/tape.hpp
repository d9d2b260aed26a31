#pragma once

// Minimal reverse-mode AD on a recorded tape.
//
// A Tape is a topologically ordered list of primitive nodes with three
// disjoint slot sets: parameters (the differentiation targets), random
// inputs, and outputs. It is immutable once recorded. Every replay runs
// against a caller-owned workspace, so concurrent replays of one tape are
// safe as long as each thread brings its own workspace.
//
// A reverse sweep seeded with lambda (one weight per output) returns
//     sum_i lambda_i * d y_i / d a_k     for every parameter a_k.

#include "mcgrad/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace mcgrad {

enum class Op : std::uint8_t {
    Param,
    Input,
    Const,
    Output,  // identity node marking an output slot
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Sqrt,
    PowConst,
    MaxZero,
};

std::string_view op_name(Op op);

struct Node {
    Op op = Op::Const;
    std::uint32_t lhs = 0;  // operand, or slot number for Param/Input
    std::uint32_t rhs = 0;
    double constant = 0.0;  // Const value, PowConst exponent
};

/// Replay throughput counters. Scalar-equivalents count active lanes, so a
/// full width-c batch adds c while an application adds one.
struct ReplayCounters {
    std::size_t forward_applications = 0;
    std::size_t reverse_applications = 0;
    std::size_t forward_scalar_equivalents = 0;
    std::size_t reverse_scalar_equivalents = 0;
};

class Recorder;

class Tape {
public:
    std::size_t size() const { return nodes_.size(); }
    std::size_t num_params() const { return param_slots_.size(); }
    std::size_t num_inputs() const { return input_slots_.size(); }
    std::size_t num_outputs() const { return output_slots_.size(); }

    std::span<const Node> nodes() const { return nodes_; }
    std::span<const std::uint32_t> param_slots() const { return param_slots_; }
    std::span<const std::uint32_t> input_slots() const { return input_slots_; }
    std::span<const std::uint32_t> output_slots() const { return output_slots_; }

    /// Number of nodes with the given opcode.
    std::size_t count(Op op) const;

private:
    friend class Recorder;
    std::vector<Node> nodes_;
    std::vector<std::uint32_t> param_slots_;
    std::vector<std::uint32_t> input_slots_;
    std::vector<std::uint32_t> output_slots_;
};

/// Handle to a node being recorded.
class Var {
public:
    Var() = default;
    std::uint32_t index() const { return index_; }

private:
    friend class Recorder;
    Var(Recorder* rec, std::uint32_t index) : rec_(rec), index_(index) {}
    Recorder* rec_ = nullptr;
    std::uint32_t index_ = 0;

    friend Var operator+(Var a, Var b);
    friend Var operator-(Var a, Var b);
    friend Var operator*(Var a, Var b);
    friend Var operator/(Var a, Var b);
    friend Var operator-(Var a);
    friend Var operator+(Var a, double b);
    friend Var operator+(double a, Var b);
    friend Var operator-(Var a, double b);
    friend Var operator-(double a, Var b);
    friend Var operator*(Var a, double b);
    friend Var operator*(double a, Var b);
    friend Var operator/(Var a, double b);
    friend Var operator/(double a, Var b);
    friend Var exp(Var a);
    friend Var log(Var a);
    friend Var sqrt(Var a);
    friend Var pow(Var a, double p);
    friend Var max_zero(Var a);
};

class Recorder {
public:
    Var param();
    Var input();
    Var constant(double value);
    void output(Var v);

    /// Apply a primitive by name ("neg", "exp", "log", "sqrt", "max0").
    Var unary(std::string_view primitive, Var a);
    /// Apply a primitive by name ("add", "sub", "mul", "div").
    Var binary(std::string_view primitive, Var a, Var b);
    Var pow(Var a, double exponent);

    std::size_t size() const { return tape_.nodes_.size(); }

    Tape finish() &&;

private:
    Var push(Node node);
    void check_owned(Var v) const;
    Tape tape_;
};

/// Declared dimensions of a recorded program.
struct ProgramShape {
    std::size_t params = 0;
    std::size_t inputs = 0;
    std::size_t outputs = 0;
};

/// Record `program` into a tape; throws DimensionError if the recorded
/// slot counts differ from `shape`.
Tape record(const ProgramShape& shape, const std::function<void(Recorder&)>& program);

/// Caller-owned value/adjoint buffers for scalar replay.
class Workspace {
public:
    explicit Workspace(const Tape& tape);

    /// Node values of the last forward replay.
    std::span<const double> values() const { return values_; }
    /// Reinstate node values saved from an earlier forward of the same tape,
    /// so a reverse sweep can run without replaying forward again.
    void restore(std::span<const double> values);

    ReplayCounters counters;

private:
    friend class Replay;
    std::vector<double> values_;
    std::vector<double> adjoints_;
    const Tape* tape_ = nullptr;
    bool forward_done_ = false;
};

/// Caller-owned buffers for width-c batched replay, laid out node-major
/// (value of node i, lane l at [i * width + l]).
class BatchWorkspace {
public:
    BatchWorkspace(const Tape& tape, std::size_t width);
    std::size_t width() const { return width_; }

    std::span<const double> values() const { return values_; }
    void restore(std::span<const double> values);

    ReplayCounters counters;

private:
    friend class Replay;
    std::size_t width_;
    std::vector<double> values_;
    std::vector<double> adjoints_;
    const Tape* tape_ = nullptr;
    bool forward_done_ = false;
};

/// Replay kernels. The in-place overloads are the hot path used by the
/// estimators; the value-returning overloads allocate their own buffers.
class Replay {
public:
    static void forward(const Tape& tape, std::span<const double> params,
                        std::span<const double> inputs, Workspace& ws, std::span<double> outputs);

    /// Reverse sweep over the values left in `ws` by the last forward.
    static void reverse(const Tape& tape, Workspace& ws, std::span<const double> seed,
                        std::span<double> param_adjoints);

    /// `block` is width x N; rows at or beyond `active` are padding and are
    /// evaluated but not counted.
    static void forward_batch(const Tape& tape, std::span<const double> params, const Matrix& block,
                              BatchWorkspace& ws, Matrix& outputs, std::size_t active);

    /// `seeds` is width x m; `param_adjoints` receives width x M.
    static void reverse_batch(const Tape& tape, BatchWorkspace& ws, const Matrix& seeds,
                              Matrix& param_adjoints, std::size_t active);
};

std::vector<double> forward(const Tape& tape, std::span<const double> params,
                            std::span<const double> inputs);

/// Output weights lambda_1..lambda_m of a reverse sweep; entries must be finite.
struct AdjointSeed {
    std::vector<double> lambdas;
};

std::vector<double> reverse(const Tape& tape, std::span<const double> params,
                            std::span<const double> inputs, const AdjointSeed& seed);

Matrix forward_batch(const Tape& tape, std::span<const double> params, const Matrix& block,
                     BatchWorkspace& ws);

Matrix reverse_batch(const Tape& tape, std::span<const double> params, const Matrix& block,
                     const Matrix& seeds, BatchWorkspace& ws);

} // namespace mcgrad
