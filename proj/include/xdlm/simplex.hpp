#pragma once

#include <vector>

#include "xdlm/kernel.hpp"

namespace xdlm {

// Probability vector over the vocabulary.  Construction validates that all
// entries are >= 0 and the total is 1 within sum_tol.
class simplex {
public:
    static constexpr double sum_tol = 1e-9;

    explicit simplex(std::vector<double> p);
    static simplex point_mass(int n, token_id at);

    int size() const { return static_cast<int>(p_.size()); }
    double operator[](int e) const { return p_[static_cast<std::size_t>(e)]; }
    const std::vector<double>& probs() const { return p_; }

private:
    std::vector<double> p_;
};

// Zero out the mask entry and renormalize the rest.  The closed-form loss
// algebra assumes clean data and model predictions carry no mask mass; this
// is the one place that convention is enforced.  Errors if all mass sat on
// the mask.
simplex strip_mask_mass(const simplex& x, token_id mask_id);

// Clean-data argument for the scalar formulas: either a concrete token id or
// a full distribution.  Holds a non-owning pointer in the distribution case,
// so it is for call-scoped use only.
class token_dist {
public:
    token_dist(token_id t) : token_(t) {}                 // NOLINT: implicit by design
    token_dist(const simplex& d) : dist_(&d) {}           // NOLINT: implicit by design

    bool is_token() const { return dist_ == nullptr; }
    token_id token() const { return token_; }
    const simplex& dist() const { return *dist_; }

    double p(token_id e) const {
        if (dist_ != nullptr) return (*dist_)[e];
        return e == token_ ? 1.0 : 0.0;
    }

private:
    token_id token_ = -1;
    const simplex* dist_ = nullptr;
};

}  // namespace xdlm
