#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace icmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

/// Deterministic uniform sampler. All randomness in the library goes through
/// this class so that a fixed seed produces identical results on every
/// platform (the mt19937_64 stream is standardized; the double conversion
/// below avoids the implementation-defined std:: distributions).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    /// Uniform double in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, bound), bound > 0.
    std::uint64_t integer(std::uint64_t bound)
    {
        // rejection sampling keeps the draw unbiased
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % bound;
    }

    Vec uniform_vec(const Vec& lo, const Vec& hi)
    {
        Vec v(lo.size());
        for (Eigen::Index i = 0; i < lo.size(); ++i) v[i] = uniform(lo[i], hi[i]);
        return v;
    }

    template <typename T>
    void shuffle(std::vector<T>& v)
    {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(integer(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

/// Axis-aligned box, the geometric primitive of the region partition.
struct Box {
    Vec lo;
    Vec hi;

    Box() = default;
    Box(Vec l, Vec h) : lo(std::move(l)), hi(std::move(h))
    {
        if (lo.size() != hi.size()) throw std::invalid_argument("Box: lo/hi size mismatch");
    }

    static Box unit(int dim)
    {
        return Box(Vec::Constant(dim, -1.0), Vec::Constant(dim, 1.0));
    }

    int dim() const { return static_cast<int>(lo.size()); }

    bool valid() const { return (lo.array() < hi.array()).all(); }

    /// Closed containment test.
    bool contains(const Vec& p) const
    {
        return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
    }

    double volume() const { return (hi - lo).prod(); }

    Vec center() const { return 0.5 * (lo + hi); }

    Vec sample(Rng& rng) const { return rng.uniform_vec(lo, hi); }

    Vec clamp(const Vec& p) const { return p.cwiseMax(lo).cwiseMin(hi); }

    Box scaled_about_center(double factor) const
    {
        Vec c = center(), half = 0.5 * factor * (hi - lo);
        return Box(c - half, c + half);
    }

    /// Sub-box over dimensions [begin, begin+count).
    Box slice(int begin, int count) const
    {
        return Box(lo.segment(begin, count), hi.segment(begin, count));
    }
};

/// FNV-1a over raw bytes, used to derive per-region seeds from box
/// coordinates so parallel and sequential tree builds are identical.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ull)
{
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, const Box& box)
{
    std::uint64_t h = fnv1a64(&base, sizeof(base));
    h = fnv1a64(box.lo.data(), sizeof(double) * box.lo.size(), h);
    h = fnv1a64(box.hi.data(), sizeof(double) * box.hi.size(), h);
    return h;
}

} // namespace icmpc
