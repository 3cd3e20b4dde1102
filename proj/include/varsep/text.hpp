#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace varsep {

// Shortest round-trip decimal for a double (17 significant digits). All text
// artifacts (manifests, configs, CSV) use this so re-parsing is bit-exact.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& s, const std::string& what) {
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw ContractError(what + ": cannot parse '" + s + "' as a number");
    return v;
}

inline long long parse_int(const std::string& s, const std::string& what) {
    char* end = nullptr;
    long long v = std::strtoll(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0')
        throw ContractError(what + ": cannot parse '" + s + "' as an integer");
    return v;
}

}  // namespace varsep
