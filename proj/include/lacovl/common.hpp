#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lacovl {

using Shape = std::vector<std::size_t>;

// Error types thrown across the library. All carry a human-readable message.
struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& msg) : std::runtime_error("ShapeMismatch: " + msg) {}
};
struct InvalidAxis : std::runtime_error {
    explicit InvalidAxis(const std::string& msg) : std::runtime_error("InvalidAxis: " + msg) {}
};
struct NotScalar : std::runtime_error {
    explicit NotScalar(const std::string& msg) : std::runtime_error("NotScalar: " + msg) {}
};
struct DegenerateNorm : std::runtime_error {
    explicit DegenerateNorm(const std::string& msg) : std::runtime_error("DegenerateNorm: " + msg) {}
};
struct ZeroRow : std::runtime_error {
    explicit ZeroRow(const std::string& msg) : std::runtime_error("ZeroRow: " + msg) {}
};
struct DuplicateClassName : std::runtime_error {
    explicit DuplicateClassName(const std::string& msg)
        : std::runtime_error("DuplicateClassName: " + msg) {}
};
struct EmptyDataset : std::runtime_error {
    explicit EmptyDataset(const std::string& msg) : std::runtime_error("EmptyDataset: " + msg) {}
};
struct ConfigInvalid : std::runtime_error {
    explicit ConfigInvalid(const std::string& msg) : std::runtime_error("ConfigInvalid: " + msg) {}
};
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("IoError: " + msg) {}
};
struct CheckpointMismatch : std::runtime_error {
    explicit CheckpointMismatch(const std::string& msg)
        : std::runtime_error("CheckpointMismatch: " + msg) {}
};

inline std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape);

}  // namespace lacovl
