#include "segadapt/common.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

namespace segadapt {

std::uint64_t DetRng::below(std::uint64_t n) {
    if (n == 0) return 0;
    // rejection sampling to avoid modulo bias
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = gen_();
    while (x >= limit) x = gen_();
    return x % n;
}

double DetRng::uniform(double lo, double hi) {
    const double u = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
}

double DetRng::normal(double mean, double stddev) {
    if (have_spare_) {
        have_spare_ = false;
        return mean + stddev * spare_;
    }
    double u1 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return mean + stddev * r * std::cos(theta);
}

std::vector<std::size_t> DetRng::sample_indices(std::size_t n, std::size_t k) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    // partial Fisher-Yates: first k entries are the sample
    for (std::size_t i = 0; i < k && i < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(below(n - i));
        std::swap(all[i], all[j]);
    }
    all.resize(std::min(k, n));
    return all;
}

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string to_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

double percentile_linear(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw ShapeMismatch("percentile of empty set");
    if (sorted.size() == 1) return sorted.front();
    const double rank = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(rank);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = rank - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

std::string format_double(double v) {
    const auto round_trips = [v](const char* s) {
        double back = 0.0;
        std::sscanf(s, "%lf", &back);
        return back == v;
    };
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // trim to the shortest representation that round-trips
    std::string best = buf;
    for (int prec = 1; prec < 17; ++prec) {
        char shorter[64];
        std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
        if (round_trips(shorter)) {
            best = shorter;
            break;
        }
    }
    // %g switches to scientific once the exponent reaches the digit budget,
    // but for integral values like 100 the plain spelling is shorter
    if (best.find('e') != std::string::npos && std::floor(v) == v &&
        std::fabs(v) < 1e17) {
        char plain[64];
        std::snprintf(plain, sizeof(plain), "%.0f", v);
        if (std::strlen(plain) <= best.size() && round_trips(plain)) best = plain;
    }
    return best;
}

}  // namespace segadapt
