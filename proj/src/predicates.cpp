#include "meshforge/predicates.hpp"

#include <cmath>
#include <limits>

#include <gmpxx.h>

namespace meshforge::predicates {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon() / 2.0;
constexpr double kCcwBound = (3.0 + 16.0 * kEps) * kEps;
constexpr double kIccBound = (10.0 + 96.0 * kEps) * kEps;

template <typename T>
int sign(const T& v) {
  return v > 0 ? 1 : (v < 0 ? -1 : 0);
}

int orient2d_exact(Point2 a, Point2 b, Point2 c) {
  const mpq_class acx = mpq_class(a.x) - mpq_class(c.x);
  const mpq_class bcx = mpq_class(b.x) - mpq_class(c.x);
  const mpq_class acy = mpq_class(a.y) - mpq_class(c.y);
  const mpq_class bcy = mpq_class(b.y) - mpq_class(c.y);
  const mpq_class det = acx * bcy - acy * bcx;
  return sgn(det);
}

int incircle_exact(Point2 a, Point2 b, Point2 c, Point2 d) {
  const mpq_class adx = mpq_class(a.x) - mpq_class(d.x), ady = mpq_class(a.y) - mpq_class(d.y);
  const mpq_class bdx = mpq_class(b.x) - mpq_class(d.x), bdy = mpq_class(b.y) - mpq_class(d.y);
  const mpq_class cdx = mpq_class(c.x) - mpq_class(d.x), cdy = mpq_class(c.y) - mpq_class(d.y);
  const mpq_class alift = adx * adx + ady * ady;
  const mpq_class blift = bdx * bdx + bdy * bdy;
  const mpq_class clift = cdx * cdx + cdy * cdy;
  const mpq_class det = alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) + clift * (adx * bdy - bdx * ady);
  return sgn(det);
}

}  // namespace

int orient2d(Point2 a, Point2 b, Point2 c) {
  const double left = (a.x - c.x) * (b.y - c.y);
  const double right = (a.y - c.y) * (b.x - c.x);
  const double det = left - right;
  const double bound = kCcwBound * (std::fabs(left) + std::fabs(right));
  if (det > bound || -det > bound) return sign(det);
  return orient2d_exact(a, b, c);
}

int incircle(Point2 a, Point2 b, Point2 c, Point2 d) {
  const double adx = a.x - d.x, ady = a.y - d.y;
  const double bdx = b.x - d.x, bdy = b.y - d.y;
  const double cdx = c.x - d.x, cdy = c.y - d.y;

  const double bdxcdy = bdx * cdy, cdxbdy = cdx * bdy;
  const double alift = adx * adx + ady * ady;
  const double cdxady = cdx * ady, adxcdy = adx * cdy;
  const double blift = bdx * bdx + bdy * bdy;
  const double adxbdy = adx * bdy, bdxady = bdx * ady;
  const double clift = cdx * cdx + cdy * cdy;

  const double det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) + clift * (adxbdy - bdxady);
  const double permanent = (std::fabs(bdxcdy) + std::fabs(cdxbdy)) * alift +
                           (std::fabs(cdxady) + std::fabs(adxcdy)) * blift +
                           (std::fabs(adxbdy) + std::fabs(bdxady)) * clift;
  const double bound = kIccBound * permanent;
  if (det > bound || -det > bound) return sign(det);
  return incircle_exact(a, b, c, d);
}

}  // namespace meshforge::predicates
