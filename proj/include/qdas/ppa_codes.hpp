// Legendre perfect-periodic-autocorrelation codes.
//
// A Legendre sequence of prime length n = 3 (mod 4) has the two-level periodic
// autocorrelation {n, -1, ..., -1}. Correlating it against the mismatched
// reference taps = chips + 1 (values {0, 2}) removes the -1 floor entirely:
// the cross-correlation is n + 1 at lag 0 and exactly 0 elsewhere.

#pragma once

#include "qdas/error.hpp"
#include "qdas/fft.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace qdas {

struct LegendreCode {
    int n = 0;
    std::vector<int> chips;      // +1 / -1
    double chip_duration = 0.0;  // seconds

    double period_duration() const { return n * chip_duration; }
};

/// Zero-sidelobe periodic reference for a LegendreCode (values 0 or 2).
struct ReferenceCode {
    int n = 0;
    std::vector<int> taps;
};

enum class LagUnit { chips, samples };

template <class T>
struct CorrelationVector {
    std::vector<T> values;
    LagUnit lag_unit = LagUnit::chips;

    std::size_t size() const { return values.size(); }
};

inline bool is_prime(long long n) {
    if (n < 2) return false;
    if (n % 2 == 0) return n == 2;
    for (long long d = 3; d * d <= n; d += 2)
        if (n % d == 0) return false;
    return true;
}

/// True iff n is a prime of the form 4k - 1.
inline bool is_valid_length(long long n) {
    return n >= 3 && n % 4 == 3 && is_prime(n);
}

inline LegendreCode legendre_sequence(int n, double chip_duration = 20e-9) {
    if (!is_valid_length(n))
        throw InvalidLengthError("legendre length " + std::to_string(n) +
                                 " is not a prime congruent to 3 mod 4");
    std::vector<char> residue(static_cast<std::size_t>(n), 0);
    for (long long x = 1; x < n; ++x) residue[static_cast<std::size_t>(x * x % n)] = 1;

    LegendreCode code;
    code.n = n;
    code.chip_duration = chip_duration;
    code.chips.resize(static_cast<std::size_t>(n));
    code.chips[0] = +1;
    for (int k = 1; k < n; ++k) code.chips[k] = residue[k] ? +1 : -1;
    return code;
}

inline ReferenceCode perfect_reference(const LegendreCode& code) {
    ReferenceCode ref;
    ref.n = code.n;
    ref.taps.reserve(code.chips.size());
    for (int c : code.chips) ref.taps.push_back(c + 1);
    return ref;
}

namespace detail {

template <class T>
T conj_if_complex(const T& v) {
    if constexpr (std::is_arithmetic_v<T>)
        return v;
    else
        return std::conj(v);
}

template <class T>
double magnitude(const T& v) {
    if constexpr (std::is_arithmetic_v<T>)
        return std::abs(static_cast<double>(v));
    else
        return std::abs(v);
}

} // namespace detail

/// values[m] = sum_k a[(k + m) mod n] * conj(b[k]). O(n^2); exact for integer T.
template <class T>
CorrelationVector<T> periodic_correlation_naive(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size())
        throw LengthMismatchError("periodic correlation: input lengths differ");
    if (a.empty()) throw LengthMismatchError("periodic correlation: empty input");
    const std::size_t n = a.size();
    CorrelationVector<T> out;
    out.values.assign(n, T{});
    for (std::size_t m = 0; m < n; ++m) {
        T acc{};
        std::size_t idx = m;
        for (std::size_t k = 0; k < n; ++k) {
            acc += a[idx] * detail::conj_if_complex(b[k]);
            if (++idx == n) idx = 0;
        }
        out.values[m] = acc;
    }
    return out;
}

template <class T>
CorrelationVector<T> periodic_correlation_naive(const std::vector<T>& a, const std::vector<T>& b) {
    return periodic_correlation_naive<T>(std::span<const T>(a), std::span<const T>(b));
}

/// Transform-domain periodic correlation: IFFT(FFT(a) * conj(FFT(b))) / n.
inline CorrelationVector<std::complex<double>> periodic_correlation_fast(
    std::span<const std::complex<double>> a, std::span<const std::complex<double>> b) {
    if (a.size() != b.size())
        throw LengthMismatchError("periodic correlation: input lengths differ");
    if (a.empty()) throw LengthMismatchError("periodic correlation: empty input");
    const auto plan = fft::plan_for(a.size());
    std::vector<std::complex<double>> fa(a.begin(), a.end());
    std::vector<std::complex<double>> fb(b.begin(), b.end());
    plan->forward(fa);
    plan->forward(fb);
    const double scale = 1.0 / static_cast<double>(a.size());
    for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= std::conj(fb[k]) * scale;
    plan->backward(fa);
    return {std::move(fa), LagUnit::chips};
}

inline CorrelationVector<std::complex<double>> periodic_correlation_fast(
    const std::vector<std::complex<double>>& a, const std::vector<std::complex<double>>& b) {
    return periodic_correlation_fast(std::span<const std::complex<double>>(a),
                                     std::span<const std::complex<double>>(b));
}

/// Relative magnitude below which a sidelobe counts as exactly zero.
inline constexpr double kSidelobeExactness = 1e-9;

/// Peak magnitude over the largest non-peak magnitude; +inf when every
/// sidelobe is below kSidelobeExactness * peak.
template <class T>
double peak_to_sidelobe(std::span<const T> corr) {
    if (corr.size() < 2) throw DegenerateError("peak_to_sidelobe: need at least two lags");
    std::size_t peak_idx = 0;
    double peak = -1.0;
    for (std::size_t i = 0; i < corr.size(); ++i) {
        const double m = detail::magnitude(corr[i]);
        if (m > peak) {
            peak = m;
            peak_idx = i;
        }
    }
    if (peak <= 0.0) throw DegenerateError("peak_to_sidelobe: all-zero correlation");
    double side = 0.0;
    for (std::size_t i = 0; i < corr.size(); ++i)
        if (i != peak_idx) side = std::max(side, detail::magnitude(corr[i]));
    if (side < kSidelobeExactness * peak) return std::numeric_limits<double>::infinity();
    return peak / side;
}

template <class T>
double peak_to_sidelobe(const CorrelationVector<T>& corr) {
    return peak_to_sidelobe<T>(std::span<const T>(corr.values));
}

// --- chip file formats -------------------------------------------------------

/// One value per line, as a decimal integer.
inline void write_chips_text(std::ostream& os, std::span<const int> values) {
    for (int v : values) os << v << '\n';
}

inline std::vector<int> read_chips_text(std::istream& is) {
    std::vector<int> out;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(line, &used));
        } catch (const std::exception&) {
            throw ConfigError("chip file line " + std::to_string(line_no) + ": not an integer");
        }
    }
    return out;
}

/// Signed 8-bit, one byte per value, no header.
inline void write_chips_binary(std::ostream& os, std::span<const int> values) {
    for (int v : values) {
        const auto b = static_cast<std::int8_t>(v);
        os.put(static_cast<char>(b));
    }
}

inline std::vector<int> read_chips_binary(std::istream& is) {
    std::vector<int> out;
    char c;
    while (is.get(c)) out.push_back(static_cast<std::int8_t>(c));
    return out;
}

} // namespace qdas
