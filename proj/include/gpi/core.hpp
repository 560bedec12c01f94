#pragma once

// Shared value types: row-major matrices, errors and seeded random streams.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gpi {

using Vec = std::vector<double>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles. Rows are exposed as spans.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] bool empty() const noexcept { return rows_ == 0; }

    [[nodiscard]] std::span<double> row(std::size_t r) noexcept {
        return {data_.data() + r * cols_, cols_};
    }
    [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }
    [[nodiscard]] double& operator()(std::size_t r, std::size_t c) noexcept {
        return data_[r * cols_ + c];
    }
    [[nodiscard]] double operator()(std::size_t r, std::size_t c) const noexcept {
        return data_[r * cols_ + c];
    }

    void append_row(std::span<const double> values) {
        if (rows_ == 0 && cols_ == 0) cols_ = values.size();
        if (values.size() != cols_) throw Error("matrix row width mismatch");
        data_.insert(data_.end(), values.begin(), values.end());
        ++rows_;
    }

    void drop_last_row() {
        if (rows_ == 0) return;
        data_.resize(data_.size() - cols_);
        --rows_;
    }

    [[nodiscard]] const std::vector<double>& data() const noexcept { return data_; }
    [[nodiscard]] std::vector<double>& data() noexcept { return data_; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline constexpr double kPi = 3.14159265358979323846;

[[nodiscard]] inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

[[nodiscard]] inline double norm(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

[[nodiscard]] inline bool all_finite(std::span<const double> a) noexcept {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

// ── Seeded streams ──────────────────────────────────────────────────────────

[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

[[nodiscard]] constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Seed for a named sub-stream, so toggling one source of randomness never
/// reshuffles draws taken from another.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                                                  std::uint64_t index = 0) noexcept {
    return splitmix64(splitmix64(seed ^ fnv1a(stream)) + index);
}

using Rng = std::mt19937_64;

}  // namespace gpi
