#pragma once

#include "meshforge/geometry.hpp"

namespace meshforge::predicates {

// Sign-exact geometric predicates: a floating-point filter with a
// rational-arithmetic fallback when the filter cannot certify the sign.

/// > 0 if (a, b, c) is counter-clockwise, < 0 if clockwise, 0 if collinear.
int orient2d(Point2 a, Point2 b, Point2 c);

/// > 0 if d lies strictly inside the circle through the CCW triangle (a, b, c).
int incircle(Point2 a, Point2 b, Point2 c, Point2 d);

}  // namespace meshforge::predicates
