#pragma once

#include "freya/objectives.hpp"
#include "freya/rng.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>

namespace freya::test
{
    inline std::filesystem::path scratch_file(const std::string& name, const std::string& contents)
    {
        static std::atomic<int> counter{0};
        const auto dir = std::filesystem::temp_directory_path() / "freya_tests";
        std::filesystem::create_directories(dir);
        const auto path = dir / (std::to_string(counter++) + "_" + name);
        std::ofstream(path) << contents;
        return path;
    }

    inline Vec random_point(std::size_t d, Rng& rng, double scale = 1.0)
    {
        Vec x(d);
        for (auto& v : x)
        {
            v = scale * (2.0 * rng.uniform() - 1.0);
        }
        return x;
    }

    inline double relative_error(std::span<const double> a, std::span<const double> b)
    {
        double diff = 0.0;
        double ref = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i)
        {
            diff += (a[i] - b[i]) * (a[i] - b[i]);
            ref += b[i] * b[i];
        }
        return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-300);
    }
}
