#pragma once

#include <stdexcept>
#include <string>

namespace xdlm {

// A probability or f-value fell to (or below) the logarithm floor, so a log
// of it would be meaningless.  Raised instead of silently clamping further.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

// The posterior/KL denominator f_t(x, z_t) is exactly zero: the observed z_t
// has no probability under the forward process started from x.  Happens only
// off-support (e.g. pure absorbing noise with z_t neither mask nor x).
class degenerate_denominator : public std::domain_error {
public:
    explicit degenerate_denominator(const std::string& what) : std::domain_error(what) {}
};

// Configuration file problem; carries a "file:line: message" style text.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace xdlm
