#pragma once

namespace sparsepose {

// Scalar type of learnable state (weights, activations, gradients).
// Geometry outside the tape is always double.
#ifdef SPARSEPOSE_REAL_FLOAT
using Real = float;
#else
using Real = double;
#endif

inline constexpr bool kRealIsDouble = sizeof(Real) == sizeof(double);

}  // namespace sparsepose
