// SPDX-License-Identifier: Apache-2.0
#include "layerwise/rational.hpp"

#include <cctype>
#include <limits>

#include "layerwise/errors.hpp"

namespace layerwise {
namespace {

BigInt parse_integer(std::string_view text, std::string_view whole) {
    if (text.empty()) throw ConfigError("malformed number '" + std::string(whole) + "'");
    std::size_t i = 0;
    bool negative = false;
    if (text[0] == '+' || text[0] == '-') {
        negative = text[0] == '-';
        i = 1;
    }
    if (i == text.size()) throw ConfigError("malformed number '" + std::string(whole) + "'");
    BigInt value = 0;
    for (; i < text.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
            throw ConfigError("malformed number '" + std::string(whole) + "'");
        }
        value = value * 10 + (text[i] - '0');
    }
    return negative ? BigInt(-value) : value;
}

BigInt pow10(long exponent) {
    BigInt p = 1;
    for (long i = 0; i < exponent; ++i) p *= 10;
    return p;
}

}  // namespace

Rational parse_rational(std::string_view text) {
    const std::string_view whole = text;
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
    if (text.empty()) throw ConfigError("empty number");

    if (const auto slash = text.find('/'); slash != std::string_view::npos) {
        const BigInt num = parse_integer(text.substr(0, slash), whole);
        const BigInt den = parse_integer(text.substr(slash + 1), whole);
        if (den == 0) throw ConfigError("zero denominator in '" + std::string(whole) + "'");
        return Rational(num, den);
    }

    long exponent = 0;
    if (const auto e = text.find_first_of("eE"); e != std::string_view::npos) {
        const BigInt exp_value = parse_integer(text.substr(e + 1), whole);
        if (exp_value > 400 || exp_value < -400) throw ConfigError("exponent out of range in '" + std::string(whole) + "'");
        exponent = exp_value.convert_to<long>();
        text = text.substr(0, e);
    }
    std::string digits;
    long fraction_digits = 0;
    bool seen_point = false;
    for (char ch : text) {
        if (ch == '.') {
            if (seen_point) throw ConfigError("malformed number '" + std::string(whole) + "'");
            seen_point = true;
            continue;
        }
        digits.push_back(ch);
        if (seen_point) ++fraction_digits;
    }
    Rational value(parse_integer(digits, whole));
    exponent -= fraction_digits;
    if (exponent >= 0) {
        value *= pow10(exponent);
    } else {
        value /= pow10(-exponent);
    }
    return value;
}

std::string to_string(const Rational& r) {
    if (denominator(r) == 1) return numerator(r).str();
    return numerator(r).str() + "/" + denominator(r).str();
}

std::string to_decimal(const Rational& r, int digits) {
    const bool negative = r < 0;
    const Rational a = negative ? Rational(-r) : r;
    const BigInt whole = numerator(a) / denominator(a);
    Rational frac = a - whole;
    std::string out = (negative ? "-" : "") + whole.str();
    if (frac == 0) return out;
    out += ".";
    for (int i = 0; i < digits && frac != 0; ++i) {
        frac *= 10;
        const BigInt digit = numerator(frac) / denominator(frac);
        out += digit.str();
        frac -= digit;
    }
    return out;
}

BigInt floor(const Rational& r) {
    BigInt q = numerator(r) / denominator(r);  // truncates toward zero
    if (r < 0 && Rational(q) != r) q -= 1;
    return q;
}

BigInt ceil(const Rational& r) {
    BigInt q = floor(r);
    if (Rational(q) != r) q += 1;
    return q;
}

BigInt round_half_up(const Rational& r) {
    return floor(r + Rational(1, 2));
}

std::int64_t to_int64(const BigInt& v) {
    if (v > std::numeric_limits<std::int64_t>::max() || v < std::numeric_limits<std::int64_t>::min()) {
        throw ConfigError("value " + v.str() + " does not fit in 64 bits");
    }
    return v.convert_to<std::int64_t>();
}

double to_double(const Rational& r) {
    return r.convert_to<double>();
}

}  // namespace layerwise
