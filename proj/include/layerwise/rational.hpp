// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <string>
#include <string_view>

namespace layerwise {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

// Accepts integers ("12"), fractions ("5/8") and plain decimals ("0.5",
// "-1.25", "6e-4"); decimals are converted exactly.
Rational parse_rational(std::string_view text);

// "7", "-15/2".
std::string to_string(const Rational& r);

// Decimal rendering for humans, e.g. 5729.1666666667.
std::string to_decimal(const Rational& r, int digits = 10);

BigInt floor(const Rational& r);
BigInt ceil(const Rational& r);
// Nearest integer, halves rounded towards +infinity.
BigInt round_half_up(const Rational& r);

std::int64_t to_int64(const BigInt& v);
double to_double(const Rational& r);

}  // namespace layerwise
