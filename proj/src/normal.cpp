#include "ddnerf/normal.hpp"

#include <boost/math/special_functions/erf.hpp>

namespace ddnerf::normal {

namespace {
constexpr double kSqrt2 = 1.41421356237309504880;
}

double quantile(double p) { return -kSqrt2 * boost::math::erfc_inv(2.0 * p); }

double upper_quantile(double q) { return kSqrt2 * boost::math::erfc_inv(2.0 * q); }

}  // namespace ddnerf::normal
