#include "mcgrad/tape.hpp"

#include "mcgrad/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mcgrad {

std::string_view op_name(Op op) {
    switch (op) {
    case Op::Param: return "param";
    case Op::Input: return "input";
    case Op::Const: return "const";
    case Op::Output: return "output";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    case Op::PowConst: return "pow";
    case Op::MaxZero: return "max0";
    }
    return "?";
}

std::size_t Tape::count(Op op) const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [op](const Node& n) { return n.op == op; }));
}

// ---------------------------------------------------------------------------
// Recording

Var Recorder::push(Node node) {
    const auto index = static_cast<std::uint32_t>(tape_.nodes_.size());
    tape_.nodes_.push_back(node);
    return Var(this, index);
}

void Recorder::check_owned(Var v) const {
    if (v.rec_ != this || v.index_ >= tape_.nodes_.size()) {
        throw std::invalid_argument("variable does not belong to this recorder");
    }
}

Var Recorder::param() {
    Node n{Op::Param, static_cast<std::uint32_t>(tape_.param_slots_.size()), 0, 0.0};
    Var v = push(n);
    tape_.param_slots_.push_back(v.index_);
    return v;
}

Var Recorder::input() {
    Node n{Op::Input, static_cast<std::uint32_t>(tape_.input_slots_.size()), 0, 0.0};
    Var v = push(n);
    tape_.input_slots_.push_back(v.index_);
    return v;
}

Var Recorder::constant(double value) { return push({Op::Const, 0, 0, value}); }

void Recorder::output(Var v) {
    check_owned(v);
    Var out = push({Op::Output, v.index_, 0, 0.0});
    tape_.output_slots_.push_back(out.index_);
}

Var Recorder::unary(std::string_view primitive, Var a) {
    check_owned(a);
    Op op;
    if (primitive == "neg") {
        op = Op::Neg;
    } else if (primitive == "exp") {
        op = Op::Exp;
    } else if (primitive == "log") {
        op = Op::Log;
    } else if (primitive == "sqrt") {
        op = Op::Sqrt;
    } else if (primitive == "max0") {
        op = Op::MaxZero;
    } else {
        throw UnsupportedPrimitive(std::string(primitive));
    }
    return push({op, a.index_, 0, 0.0});
}

Var Recorder::binary(std::string_view primitive, Var a, Var b) {
    check_owned(a);
    check_owned(b);
    Op op;
    if (primitive == "add") {
        op = Op::Add;
    } else if (primitive == "sub") {
        op = Op::Sub;
    } else if (primitive == "mul") {
        op = Op::Mul;
    } else if (primitive == "div") {
        op = Op::Div;
    } else {
        throw UnsupportedPrimitive(std::string(primitive));
    }
    return push({op, a.index_, b.index_, 0.0});
}

Var Recorder::pow(Var a, double exponent) {
    check_owned(a);
    return push({Op::PowConst, a.index_, 0, exponent});
}

Tape Recorder::finish() && { return std::move(tape_); }

Var operator+(Var a, Var b) { return a.rec_->binary("add", a, b); }
Var operator-(Var a, Var b) { return a.rec_->binary("sub", a, b); }
Var operator*(Var a, Var b) { return a.rec_->binary("mul", a, b); }
Var operator/(Var a, Var b) { return a.rec_->binary("div", a, b); }
Var operator-(Var a) { return a.rec_->unary("neg", a); }
Var operator+(Var a, double b) { return a + a.rec_->constant(b); }
Var operator+(double a, Var b) { return b.rec_->constant(a) + b; }
Var operator-(Var a, double b) { return a - a.rec_->constant(b); }
Var operator-(double a, Var b) { return b.rec_->constant(a) - b; }
Var operator*(Var a, double b) { return a * a.rec_->constant(b); }
Var operator*(double a, Var b) { return b.rec_->constant(a) * b; }
Var operator/(Var a, double b) { return a / a.rec_->constant(b); }
Var operator/(double a, Var b) { return b.rec_->constant(a) / b; }
Var exp(Var a) { return a.rec_->unary("exp", a); }
Var log(Var a) { return a.rec_->unary("log", a); }
Var sqrt(Var a) { return a.rec_->unary("sqrt", a); }
Var pow(Var a, double p) { return a.rec_->pow(a, p); }
Var max_zero(Var a) { return a.rec_->unary("max0", a); }

Tape record(const ProgramShape& shape, const std::function<void(Recorder&)>& program) {
    Recorder rec;
    program(rec);
    Tape tape = std::move(rec).finish();
    if (tape.num_params() != shape.params || tape.num_inputs() != shape.inputs ||
        tape.num_outputs() != shape.outputs) {
        throw DimensionError("recorded program has " + std::to_string(tape.num_params()) +
                             " params, " + std::to_string(tape.num_inputs()) + " inputs, " +
                             std::to_string(tape.num_outputs()) + " outputs; declared " +
                             std::to_string(shape.params) + "/" + std::to_string(shape.inputs) +
                             "/" + std::to_string(shape.outputs));
    }
    return tape;
}

// ---------------------------------------------------------------------------
// Workspaces

Workspace::Workspace(const Tape& tape)
    : values_(tape.size(), 0.0), adjoints_(tape.size(), 0.0), tape_(&tape) {}

void Workspace::restore(std::span<const double> values) {
    if (values.size() != values_.size()) {
        throw DimensionError("saved value buffer has wrong size");
    }
    std::copy(values.begin(), values.end(), values_.begin());
    forward_done_ = true;
}

BatchWorkspace::BatchWorkspace(const Tape& tape, std::size_t width)
    : width_(width), values_(tape.size() * width, 0.0), adjoints_(tape.size() * width, 0.0),
      tape_(&tape) {
    if (width == 0) {
        throw BatchWidthError("batch width must be positive");
    }
}

void BatchWorkspace::restore(std::span<const double> values) {
    if (values.size() != values_.size()) {
        throw DimensionError("saved value buffer has wrong size");
    }
    std::copy(values.begin(), values.end(), values_.begin());
    forward_done_ = true;
}

// ---------------------------------------------------------------------------
// Scalar replay

namespace {

void require(bool ok, const char* what) {
    if (!ok) {
        throw DimensionError(what);
    }
}

void check_workspace(const Tape& tape, const Tape* owner) {
    if (owner != &tape) {
        throw std::invalid_argument("workspace was created for a different tape");
    }
}

} // namespace

void Replay::forward(const Tape& tape, std::span<const double> params,
                     std::span<const double> inputs, Workspace& ws, std::span<double> outputs) {
    check_workspace(tape, ws.tape_);
    require(params.size() == tape.num_params(), "forward: parameter count mismatch");
    require(inputs.size() == tape.num_inputs(), "forward: input count mismatch");
    require(outputs.size() == tape.num_outputs(), "forward: output count mismatch");

    const auto nodes = tape.nodes();
    double* v = ws.values_.data();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const Node& n = nodes[i];
        double r;
        switch (n.op) {
        case Op::Param: r = params[n.lhs]; break;
        case Op::Input: r = inputs[n.lhs]; break;
        case Op::Const: r = n.constant; break;
        case Op::Output: r = v[n.lhs]; break;
        case Op::Add: r = v[n.lhs] + v[n.rhs]; break;
        case Op::Sub: r = v[n.lhs] - v[n.rhs]; break;
        case Op::Mul: r = v[n.lhs] * v[n.rhs]; break;
        case Op::Div: r = v[n.lhs] / v[n.rhs]; break;
        case Op::Neg: r = -v[n.lhs]; break;
        case Op::Exp: r = std::exp(v[n.lhs]); break;
        case Op::Log: r = std::log(v[n.lhs]); break;
        case Op::Sqrt: r = std::sqrt(v[n.lhs]); break;
        case Op::PowConst: r = std::pow(v[n.lhs], n.constant); break;
        case Op::MaxZero: r = v[n.lhs] > 0.0 ? v[n.lhs] : 0.0; break;
        default: r = 0.0;
        }
        if (!std::isfinite(r)) {
            ws.forward_done_ = false;
            throw NonFiniteValue(i);
        }
        v[i] = r;
    }
    const auto outs = tape.output_slots();
    for (std::size_t k = 0; k < outs.size(); ++k) {
        outputs[k] = v[outs[k]];
    }
    ws.forward_done_ = true;
    ++ws.counters.forward_applications;
    ++ws.counters.forward_scalar_equivalents;
}

void Replay::reverse(const Tape& tape, Workspace& ws, std::span<const double> seed,
                     std::span<double> param_adjoints) {
    check_workspace(tape, ws.tape_);
    require(seed.size() == tape.num_outputs(), "reverse: seed length mismatch");
    require(param_adjoints.size() == tape.num_params(), "reverse: adjoint length mismatch");
    if (!ws.forward_done_) {
        throw std::logic_error("reverse sweep requires a completed forward replay");
    }

    const auto nodes = tape.nodes();
    const double* v = ws.values_.data();
    double* a = ws.adjoints_.data();
    std::fill(ws.adjoints_.begin(), ws.adjoints_.end(), 0.0);
    const auto outs = tape.output_slots();
    for (std::size_t k = 0; k < outs.size(); ++k) {
        a[outs[k]] += seed[k];
    }
    for (std::size_t i = nodes.size(); i-- > 0;) {
        const double g = a[i];
        const Node& n = nodes[i];
        switch (n.op) {
        case Op::Output: a[n.lhs] += g; break;
        case Op::Add:
            a[n.lhs] += g;
            a[n.rhs] += g;
            break;
        case Op::Sub:
            a[n.lhs] += g;
            a[n.rhs] -= g;
            break;
        case Op::Mul:
            a[n.lhs] += g * v[n.rhs];
            a[n.rhs] += g * v[n.lhs];
            break;
        case Op::Div:
            a[n.lhs] += g / v[n.rhs];
            a[n.rhs] -= g * v[i] / v[n.rhs];
            break;
        case Op::Neg: a[n.lhs] -= g; break;
        case Op::Exp: a[n.lhs] += g * v[i]; break;
        case Op::Log: a[n.lhs] += g / v[n.lhs]; break;
        case Op::Sqrt: a[n.lhs] += g * 0.5 / v[i]; break;
        case Op::PowConst:
            a[n.lhs] += g * n.constant * std::pow(v[n.lhs], n.constant - 1.0);
            break;
        case Op::MaxZero:
            // kink convention: derivative at exactly zero is zero
            a[n.lhs] += v[n.lhs] > 0.0 ? g : 0.0;
            break;
        default: break;
        }
    }
    const auto ps = tape.param_slots();
    for (std::size_t k = 0; k < ps.size(); ++k) {
        param_adjoints[k] = a[ps[k]];
    }
    ++ws.counters.reverse_applications;
    ++ws.counters.reverse_scalar_equivalents;
}

// ---------------------------------------------------------------------------
// Batched replay

void Replay::forward_batch(const Tape& tape, std::span<const double> params, const Matrix& block,
                           BatchWorkspace& ws, Matrix& outputs, std::size_t active) {
    check_workspace(tape, ws.tape_);
    const std::size_t c = ws.width_;
    if (block.rows() != c) {
        throw BatchWidthError("input block has " + std::to_string(block.rows()) +
                              " rows, batch width is " + std::to_string(c));
    }
    require(block.cols() == tape.num_inputs(), "forward_batch: input count mismatch");
    require(params.size() == tape.num_params(), "forward_batch: parameter count mismatch");
    require(active <= c, "forward_batch: active lanes exceed width");
    if (outputs.rows() != c || outputs.cols() != tape.num_outputs()) {
        outputs = Matrix(c, tape.num_outputs());
    }

    const auto nodes = tape.nodes();
    double* v = ws.values_.data();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const Node& n = nodes[i];
        double* out = v + i * c;
        const double* x = v + std::size_t{n.lhs} * c;
        const double* y = v + std::size_t{n.rhs} * c;
        switch (n.op) {
        case Op::Param:
            std::fill(out, out + c, params[n.lhs]);
            break;
        case Op::Input:
            for (std::size_t l = 0; l < c; ++l) out[l] = block(l, n.lhs);
            break;
        case Op::Const: std::fill(out, out + c, n.constant); break;
        case Op::Output: std::copy(x, x + c, out); break;
        case Op::Add:
            for (std::size_t l = 0; l < c; ++l) out[l] = x[l] + y[l];
            break;
        case Op::Sub:
            for (std::size_t l = 0; l < c; ++l) out[l] = x[l] - y[l];
            break;
        case Op::Mul:
            for (std::size_t l = 0; l < c; ++l) out[l] = x[l] * y[l];
            break;
        case Op::Div:
            for (std::size_t l = 0; l < c; ++l) out[l] = x[l] / y[l];
            break;
        case Op::Neg:
            for (std::size_t l = 0; l < c; ++l) out[l] = -x[l];
            break;
        case Op::Exp:
            for (std::size_t l = 0; l < c; ++l) out[l] = std::exp(x[l]);
            break;
        case Op::Log:
            for (std::size_t l = 0; l < c; ++l) out[l] = std::log(x[l]);
            break;
        case Op::Sqrt:
            for (std::size_t l = 0; l < c; ++l) out[l] = std::sqrt(x[l]);
            break;
        case Op::PowConst:
            for (std::size_t l = 0; l < c; ++l) out[l] = std::pow(x[l], n.constant);
            break;
        case Op::MaxZero:
            for (std::size_t l = 0; l < c; ++l) out[l] = x[l] > 0.0 ? x[l] : 0.0;
            break;
        }
        bool finite = true;
        for (std::size_t l = 0; l < c; ++l) finite &= std::isfinite(out[l]);
        if (!finite) {
            ws.forward_done_ = false;
            throw NonFiniteValue(i);
        }
    }
    const auto outs = tape.output_slots();
    for (std::size_t l = 0; l < c; ++l) {
        for (std::size_t k = 0; k < outs.size(); ++k) {
            outputs(l, k) = v[std::size_t{outs[k]} * c + l];
        }
    }
    ws.forward_done_ = true;
    ++ws.counters.forward_applications;
    ws.counters.forward_scalar_equivalents += active;
}

void Replay::reverse_batch(const Tape& tape, BatchWorkspace& ws, const Matrix& seeds,
                           Matrix& param_adjoints, std::size_t active) {
    check_workspace(tape, ws.tape_);
    const std::size_t c = ws.width_;
    if (seeds.rows() != c) {
        throw BatchWidthError("seed block has " + std::to_string(seeds.rows()) +
                              " rows, batch width is " + std::to_string(c));
    }
    require(seeds.cols() == tape.num_outputs(), "reverse_batch: seed length mismatch");
    require(active <= c, "reverse_batch: active lanes exceed width");
    if (!ws.forward_done_) {
        throw std::logic_error("reverse sweep requires a completed forward replay");
    }
    if (param_adjoints.rows() != c || param_adjoints.cols() != tape.num_params()) {
        param_adjoints = Matrix(c, tape.num_params());
    }

    const auto nodes = tape.nodes();
    const double* v = ws.values_.data();
    double* a = ws.adjoints_.data();
    std::fill(ws.adjoints_.begin(), ws.adjoints_.end(), 0.0);
    const auto outs = tape.output_slots();
    for (std::size_t k = 0; k < outs.size(); ++k) {
        double* g = a + std::size_t{outs[k]} * c;
        for (std::size_t l = 0; l < c; ++l) g[l] += seeds(l, k);
    }
    for (std::size_t i = nodes.size(); i-- > 0;) {
        const Node& n = nodes[i];
        const double* g = a + i * c;
        const double* vi = v + i * c;
        double* ax = a + std::size_t{n.lhs} * c;
        double* ay = a + std::size_t{n.rhs} * c;
        const double* x = v + std::size_t{n.lhs} * c;
        const double* y = v + std::size_t{n.rhs} * c;
        switch (n.op) {
        case Op::Output:
            for (std::size_t l = 0; l < c; ++l) ax[l] += g[l];
            break;
        case Op::Add:
            for (std::size_t l = 0; l < c; ++l) ax[l] += g[l];
            for (std::size_t l = 0; l < c; ++l) ay[l] += g[l];
            break;
        case Op::Sub:
            for (std::size_t l = 0; l < c; ++l) ax[l] += g[l];
            for (std::size_t l = 0; l < c; ++l) ay[l] -= g[l];
            break;
        case Op::Mul:
            for (std::size_t l = 0; l < c; ++l) ax[l] += g[l] * y[l];
            for (std::size_t l = 0; l < c; ++l) ay[l] += g[l] * x[l];
            break;
        case Op::Div:
            for (std::size_t l = 0; l < c; ++l) ax[l] += g[l] / y[l];
            for (std::size_t l = 0; l < c; ++l) ay[l] -= g[l] * vi[l] / y[l];
            break;
        case Op::Neg:
            for (std::size_t l = 0; l < c; ++l) ax[l] -= g[l];
            break;
        case Op::Exp:
            for (std::size_t l = 0; l < c; ++l) ax[l] += g[l] * vi[l];
            break;
        case Op::Log:
            for (std::size_t l = 0; l < c; ++l) ax[l] += g[l] / x[l];
            break;
        case Op::Sqrt:
            for (std::size_t l = 0; l < c; ++l) ax[l] += g[l] * 0.5 / vi[l];
            break;
        case Op::PowConst:
            for (std::size_t l = 0; l < c; ++l)
                ax[l] += g[l] * n.constant * std::pow(x[l], n.constant - 1.0);
            break;
        case Op::MaxZero:
            for (std::size_t l = 0; l < c; ++l) ax[l] += x[l] > 0.0 ? g[l] : 0.0;
            break;
        default: break;
        }
    }
    const auto ps = tape.param_slots();
    for (std::size_t l = 0; l < c; ++l) {
        for (std::size_t k = 0; k < ps.size(); ++k) {
            param_adjoints(l, k) = a[std::size_t{ps[k]} * c + l];
        }
    }
    ++ws.counters.reverse_applications;
    ws.counters.reverse_scalar_equivalents += active;
}

// ---------------------------------------------------------------------------
// Convenience wrappers

std::vector<double> forward(const Tape& tape, std::span<const double> params,
                            std::span<const double> inputs) {
    Workspace ws(tape);
    std::vector<double> out(tape.num_outputs());
    Replay::forward(tape, params, inputs, ws, out);
    return out;
}

std::vector<double> reverse(const Tape& tape, std::span<const double> params,
                            std::span<const double> inputs, const AdjointSeed& seed) {
    for (double l : seed.lambdas) {
        if (!std::isfinite(l)) {
            throw std::invalid_argument("adjoint seed must be finite");
        }
    }
    Workspace ws(tape);
    std::vector<double> out(tape.num_outputs());
    Replay::forward(tape, params, inputs, ws, out);
    std::vector<double> adj(tape.num_params());
    Replay::reverse(tape, ws, seed.lambdas, adj);
    return adj;
}

Matrix forward_batch(const Tape& tape, std::span<const double> params, const Matrix& block,
                     BatchWorkspace& ws) {
    Matrix out;
    Replay::forward_batch(tape, params, block, ws, out, ws.width());
    return out;
}

Matrix reverse_batch(const Tape& tape, std::span<const double> params, const Matrix& block,
                     const Matrix& seeds, BatchWorkspace& ws) {
    Matrix out;
    Replay::forward_batch(tape, params, block, ws, out, ws.width());
    Matrix adj;
    Replay::reverse_batch(tape, ws, seeds, adj, ws.width());
    return adj;
}

} // namespace mcgrad
