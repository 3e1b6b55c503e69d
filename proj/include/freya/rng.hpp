#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>

namespace freya
{
    __extension__ typedef unsigned __int128 uint128_t;

    // Seed mixing for named sub-streams. Every random stream in a run is
    // derived from (base seed, stream id, purpose) so that streams never
    // depend on the order in which other streams were consumed.
    inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
    {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    inline constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                               std::uint64_t purpose) noexcept
    {
        return splitmix64(splitmix64(splitmix64(base) ^ stream) ^ (purpose * 0xd1342543de82ef95ULL));
    }

    enum class StreamPurpose : std::uint64_t
    {
        WorkerIndex = 1,
        WorkerTime = 2,
        Coin = 3,
        Sampler = 4,
        Problem = 5,
    };

    inline constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                               StreamPurpose purpose) noexcept
    {
        return derive_seed(base, stream, static_cast<std::uint64_t>(purpose));
    }

    // Reproducible random stream. The engine output is fixed by the standard;
    // all transforms below are our own so results do not depend on the
    // standard library's distribution implementations.
    class Rng
    {
    public:
        explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

        std::uint64_t next() { return engine_(); }

        // Uniform on [0, 1) with 53 random bits.
        double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

        // Uniform integer in [0, n), unbiased (Lemire's multiply-and-reject).
        std::uint64_t below(std::uint64_t n)
        {
            uint128_t product = static_cast<uint128_t>(next()) * n;
            auto low = static_cast<std::uint64_t>(product);
            if (low < n)
            {
                const std::uint64_t threshold = (0 - n) % n;
                while (low < threshold)
                {
                    product = static_cast<uint128_t>(next()) * n;
                    low = static_cast<std::uint64_t>(product);
                }
            }
            return static_cast<std::uint64_t>(product >> 64);
        }

        bool bernoulli(double p) { return uniform() < p; }

        // Box-Muller pair: radius from 1 - u1 in (0, 1], angle from u2.
        // first = r cos(theta), second = r sin(theta).
        std::pair<double, double> normal_pair()
        {
            const double u1 = 1.0 - uniform();
            const double u2 = uniform();
            const double r = std::sqrt(-2.0 * std::log(u1));
            const double theta = 2.0 * std::numbers::pi * u2;
            return {r * std::cos(theta), r * std::sin(theta)};
        }

        double normal() { return normal_pair().first; }

    private:
        std::mt19937_64 engine_;
    };
}
