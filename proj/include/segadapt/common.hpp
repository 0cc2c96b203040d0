#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace segadapt {

// Every failure carries a stable machine-parsable class code; the CLI prints
// "<code>: <detail>" on a single line and exits non-zero.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& detail)
        : std::runtime_error(code + ": " + detail), code_(std::move(code)) {}
    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define SEGADAPT_ERROR(Name)                                        \
    struct Name : Error {                                           \
        explicit Name(const std::string& detail) : Error(#Name, detail) {} \
    }

SEGADAPT_ERROR(NonSquareImage);
SEGADAPT_ERROR(DegenerateBox);
SEGADAPT_ERROR(InvalidRate);
SEGADAPT_ERROR(EmptyMask);
SEGADAPT_ERROR(ShapeMismatch);
SEGADAPT_ERROR(InvalidTau);
SEGADAPT_ERROR(GridTooSmall);
SEGADAPT_ERROR(NonFiniteInput);
SEGADAPT_ERROR(OutOfFrame);
SEGADAPT_ERROR(FileNotFound);
SEGADAPT_ERROR(GeometryMismatch);
SEGADAPT_ERROR(DegenerateRange);
SEGADAPT_ERROR(NotEnoughData);
SEGADAPT_ERROR(FrozenViolation);
SEGADAPT_ERROR(NonFiniteLoss);
SEGADAPT_ERROR(InvalidCombination);
SEGADAPT_ERROR(InvalidConfig);
SEGADAPT_ERROR(PipelineOrder);
SEGADAPT_ERROR(IoError);

#undef SEGADAPT_ERROR

// Deterministic RNG used everywhere randomness must reproduce bit-for-bit
// from a seed. std::shuffle / std::uniform_*_distribution are
// implementation-defined, so the draw logic lives here.
class DetRng {
public:
    explicit DetRng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next() { return gen_(); }

    // uniform in [0, n)
    std::uint64_t below(std::uint64_t n);

    // uniform in [lo, hi)
    double uniform(double lo = 0.0, double hi = 1.0);

    double normal(double mean = 0.0, double stddev = 1.0);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
        }
    }

    // k distinct indices drawn uniformly from [0, n) without replacement
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string to_hex(std::uint64_t v);

// 95th-et-al percentile with linear interpolation between order statistics.
// `sorted` must be ascending and non-empty; q in [0, 1].
double percentile_linear(const std::vector<double>& sorted, double q);

std::string format_double(double v);  // shortest round-trip text, stable across runs

}  // namespace segadapt
