#pragma once

#include "consensus/errors.hpp"
#include "consensus/matrix.hpp"

namespace consensus {

/// Identical agent dynamics: xdot = A x + B u, y = C x.
struct LinearSystem {
    Mat A; // n x n
    Mat B; // n x p
    Mat C; // q x n

    std::size_t n() const { return A.rows(); }
    std::size_t p() const { return B.cols(); }
    std::size_t q() const { return C.rows(); }

    void validate() const {
        if (!A.is_square()) throw NonSquare("system: A must be square");
        if (B.rows() != A.rows()) throw DimensionMismatch("system: B row count must equal n");
        if (C.cols() != A.rows()) throw DimensionMismatch("system: C column count must equal n");
        if (A.rows() == 0 || B.cols() == 0 || C.rows() == 0)
            throw DimensionMismatch("system: empty dimension");
        if (!A.is_finite() || !B.is_finite() || !C.is_finite())
            throw NonFiniteInput("system: non-finite entries");
    }
};

inline Mat output_of(const LinearSystem& sys, const Mat& x) { return sys.C * x; }

} // namespace consensus
