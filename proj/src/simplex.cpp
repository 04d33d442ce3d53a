#include "xdlm/simplex.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace xdlm {

simplex::simplex(std::vector<double> p) : p_(std::move(p)) {
    if (p_.empty()) throw std::invalid_argument("simplex: empty probability vector");
    double sum = 0.0;
    for (double v : p_) {
        if (!(v >= 0.0))  // catches negatives and NaN
            throw std::invalid_argument("simplex: entry " + std::to_string(v) + " is negative or NaN");
        sum += v;
    }
    if (std::abs(sum - 1.0) > sum_tol)
        throw std::invalid_argument("simplex: entries sum to " + std::to_string(sum) + ", not 1");
}

simplex simplex::point_mass(int n, token_id at) {
    if (at < 0 || at >= n) throw std::invalid_argument("simplex::point_mass: index out of range");
    std::vector<double> p(static_cast<std::size_t>(n), 0.0);
    p[static_cast<std::size_t>(at)] = 1.0;
    return simplex(std::move(p));
}

simplex strip_mask_mass(const simplex& x, token_id mask_id) {
    if (mask_id < 0 || mask_id >= x.size())
        throw std::invalid_argument("strip_mask_mass: mask_id out of range");
    if (x[mask_id] == 0.0) return x;
    double rest = 1.0 - x[mask_id];
    if (rest <= 0.0)
        throw std::domain_error("strip_mask_mass: all probability mass sits on the mask token");
    std::vector<double> p = x.probs();
    p[static_cast<std::size_t>(mask_id)] = 0.0;
    for (double& v : p) v /= rest;
    return simplex(std::move(p));
}

}  // namespace xdlm
