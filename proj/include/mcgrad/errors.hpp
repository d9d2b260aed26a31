#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mcgrad {

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct BatchWidthError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct UnsupportedPrimitive : std::invalid_argument {
    explicit UnsupportedPrimitive(std::string name)
        : std::invalid_argument("unsupported primitive: " + name), primitive(std::move(name)) {}
    std::string primitive;
};

/// Raised when a replay produces inf/nan; `node` is the first offending tape node.
struct NonFiniteValue : std::runtime_error {
    explicit NonFiniteValue(std::size_t node_index)
        : std::runtime_error("non-finite value at tape node " + std::to_string(node_index)),
          node(node_index) {}
    std::size_t node;
};

} // namespace mcgrad
