#pragma once

#include <cstdint>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace npt {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ')';
    return os.str();
}

// Thrown when an operation's input shapes do not conform. The message names
// the operation and both shapes involved.
class ShapeError : public std::invalid_argument {
public:
    ShapeError(const std::string& op, const Shape& a, const Shape& b)
        : std::invalid_argument(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b)) {}
    ShapeError(const std::string& op, const std::string& detail)
        : std::invalid_argument(op + ": " + detail) {}
};

template <typename... Args>
std::string str_cat(const Args&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }
inline float clamp01f(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

// Fixed-precision decimal formatting for CSV/SVG output, so file bytes are
// reproducible.
inline std::string fmt_f(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

}  // namespace npt
