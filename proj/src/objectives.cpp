#include "freya/objectives.hpp"

#include "freya/rng.hpp"
#include "freya/tridiagonal.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string_view>

namespace freya
{
    double SmoothnessHints::L_bar() const
    {
        if (per_component.empty())
        {
            throw std::invalid_argument("smoothness hints: per-component constants are not available");
        }
        CompensatedScalar sum;
        for (double l : per_component)
        {
            sum.add(l);
        }
        return sum.value() / static_cast<double>(per_component.size());
    }

    double SmoothnessHints::L_max() const
    {
        if (per_component.empty())
        {
            throw std::invalid_argument("smoothness hints: per-component constants are not available");
        }
        return *std::max_element(per_component.begin(), per_component.end());
    }

    double SmoothnessHints::hessian_variance() const
    {
        if (L_pm)
        {
            return *L_pm;
        }
        if (L_plus)
        {
            return *L_plus;
        }
        throw std::invalid_argument("smoothness hints: neither L_pm nor L_plus is available");
    }

    void FiniteSumObjective::check_index(std::size_t i) const
    {
        if (i >= components())
        {
            throw std::out_of_range("component index " + std::to_string(i) + " out of range [0, " +
                                    std::to_string(components()) + ")");
        }
    }

    Vec FiniteSumObjective::component_gradient(std::size_t i, std::span<const double> x) const
    {
        Vec out(dimension(), 0.0);
        component_gradient(i, x, out);
        return out;
    }

    double FiniteSumObjective::value(std::span<const double> x) const { return full_value_reference(*this, x); }

    Vec FiniteSumObjective::gradient(std::span<const double> x) const { return full_gradient_reference(*this, x); }

    Vec full_gradient_reference(const FiniteSumObjective& objective, std::span<const double> x)
    {
        const std::size_t m = objective.components();
        CompensatedSum sum(objective.dimension());
        Vec scratch(objective.dimension());
        for (std::size_t i = 0; i < m; ++i)
        {
            objective.component_gradient(i, x, scratch);
            sum.add(scratch);
        }
        return sum.result(1.0 / static_cast<double>(m));
    }

    double full_value_reference(const FiniteSumObjective& objective, std::span<const double> x)
    {
        const std::size_t m = objective.components();
        CompensatedScalar sum;
        for (std::size_t i = 0; i < m; ++i)
        {
            sum.add(objective.component_value(i, x));
        }
        return sum.value() / static_cast<double>(m);
    }

    // ------------------------------------------------------------------

    void to_json(nlohmann::json& j, const QuadraticSpec& spec)
    {
        j = nlohmann::json{{"kind", "quadratic"}, {"m", spec.m},         {"d", spec.d},
                           {"lambda", spec.lambda}, {"s", spec.noise}, {"seed", spec.seed}};
    }

    void from_json(const nlohmann::json& j, QuadraticSpec& spec)
    {
        if (j.contains("kind") && j.at("kind") != "quadratic")
        {
            throw std::invalid_argument("quadratic spec: unexpected kind " + j.at("kind").dump());
        }
        spec.m = j.at("m").get<std::size_t>();
        spec.d = j.at("d").get<std::size_t>();
        spec.lambda = j.at("lambda").get<double>();
        spec.noise = j.value("s", 0.0);
        spec.seed = j.value("seed", std::uint64_t{0});
    }

    namespace
    {
        // Extreme eigenvalues of tridiag(-1, 2, -1) in dimension d.
        std::pair<double, double> template_spectrum(std::size_t d)
        {
            SymmetricTridiagonal t{std::vector<double>(d, 2.0), std::vector<double>(d - 1, -1.0)};
            return {tridiagonal_min_eigenvalue(t), tridiagonal_max_eigenvalue(t)};
        }

        double shifted_norm(double scale, double shift, std::pair<double, double> spectrum)
        {
            return std::max(std::abs(scale * spectrum.first + shift), std::abs(scale * spectrum.second + shift));
        }
    }

    QuadraticProblem::QuadraticProblem(QuadraticSpec spec, std::vector<double> scales, std::vector<double> b_first,
                                       double lambda_min_unshifted)
        : spec_(spec), scales_(std::move(scales)), b_first_(std::move(b_first)),
          lambda_min_unshifted_(lambda_min_unshifted), shift_(spec.lambda - lambda_min_unshifted)
    {
        if (scales_.empty() || scales_.size() != b_first_.size())
        {
            throw std::invalid_argument("QuadraticProblem: scales and b_first must be nonempty and equal length");
        }
        CompensatedScalar s;
        CompensatedScalar b;
        for (std::size_t i = 0; i < scales_.size(); ++i)
        {
            s.add(scales_[i]);
            b.add(b_first_[i]);
        }
        const double m = static_cast<double>(scales_.size());
        mean_scale_ = s.value() / m;
        mean_b_first_ = b.value() / m;
    }

    void QuadraticProblem::apply(double scale, std::span<const double> x, std::span<double> out) const
    {
        const std::size_t d = spec_.d;
        for (std::size_t k = 0; k < d; ++k)
        {
            double tx = 2.0 * x[k];
            if (k > 0)
            {
                tx -= x[k - 1];
            }
            if (k + 1 < d)
            {
                tx -= x[k + 1];
            }
            out[k] = scale * tx + shift_ * x[k];
        }
    }

    double QuadraticProblem::component_value(std::size_t i, std::span<const double> x) const
    {
        check_index(i);
        Vec ax(spec_.d);
        apply(scales_[i], x, ax);
        return 0.5 * dot(x, ax) - b_first_[i] * x[0];
    }

    void QuadraticProblem::component_gradient(std::size_t i, std::span<const double> x, std::span<double> out) const
    {
        check_index(i);
        apply(scales_[i], x, out);
        out[0] -= b_first_[i];
    }

    double QuadraticProblem::value(std::span<const double> x) const
    {
        Vec ax(spec_.d);
        apply(mean_scale_, x, ax);
        return 0.5 * dot(x, ax) - mean_b_first_ * x[0];
    }

    Vec QuadraticProblem::gradient(std::span<const double> x) const
    {
        Vec out(spec_.d);
        apply(mean_scale_, x, out);
        out[0] -= mean_b_first_;
        return out;
    }

    SmoothnessHints QuadraticProblem::smoothness() const
    {
        const auto spectrum = template_spectrum(spec_.d);
        SmoothnessHints hints;
        hints.per_component.reserve(scales_.size());
        CompensatedScalar sq;
        for (double c : scales_)
        {
            const double l = shifted_norm(c, shift_, spectrum);
            hints.per_component.push_back(l);
            sq.add(l * l);
        }
        hints.L_minus = shifted_norm(mean_scale_, shift_, spectrum);
        hints.L_plus = std::sqrt(sq.value() / static_cast<double>(scales_.size()));
        return hints;
    }

    Vec QuadraticProblem::minimizer() const
    {
        const auto mean = mean_matrix();
        SymmetricTridiagonal a{std::vector<double>(spec_.d, mean.diagonal),
                               std::vector<double>(spec_.d - 1, mean.off_diagonal)};
        Vec rhs(spec_.d, 0.0);
        rhs[0] = mean_b_first_;
        return tridiagonal_solve(a, rhs);
    }

    std::optional<double> QuadraticProblem::optimal_value() const
    {
        if (!(spec_.lambda > 0.0))
        {
            return std::nullopt;
        }
        const Vec x = minimizer();
        return -0.5 * mean_b_first_ * x[0];
    }

    Vec QuadraticProblem::initial_point() const
    {
        Vec x(spec_.d, 0.0);
        x[0] = std::sqrt(static_cast<double>(spec_.d));
        return x;
    }

    QuadraticProblem generate_quadratic(const QuadraticSpec& spec)
    {
        if (spec.m < 1)
        {
            throw std::invalid_argument("generate_quadratic: m must be at least 1");
        }
        if (spec.d < 2)
        {
            throw std::invalid_argument("generate_quadratic: d must be at least 2");
        }
        if (!(spec.lambda > 0.0))
        {
            throw std::invalid_argument("generate_quadratic: lambda must be positive");
        }

        Rng rng(derive_seed(spec.seed, 0, StreamPurpose::Problem));
        std::vector<double> scales(spec.m);
        std::vector<double> b_first(spec.m);
        CompensatedScalar scale_sum;
        for (std::size_t i = 0; i < spec.m; ++i)
        {
            // One Box-Muller pair per component: cos branch -> xi_s, sin branch -> xi_b.
            const auto [xi_s, xi_b] = rng.normal_pair();
            const double nu_s = 1.0 + spec.noise * xi_s;
            const double nu_b = spec.noise * xi_b;
            scales[i] = nu_s / 4.0;
            b_first[i] = (nu_s / 4.0) * (-1.0 + nu_b);
            scale_sum.add(scales[i]);
        }
        const double mean_scale = scale_sum.value() / static_cast<double>(spec.m);
        SymmetricTridiagonal mean{std::vector<double>(spec.d, 2.0 * mean_scale),
                                  std::vector<double>(spec.d - 1, -mean_scale)};
        const double lambda_min = tridiagonal_min_eigenvalue(mean);
        return QuadraticProblem(spec, std::move(scales), std::move(b_first), lambda_min);
    }

    // ------------------------------------------------------------------

    LogisticProblem::LogisticProblem(std::size_t d, std::vector<double> features, std::vector<int> labels, double l2)
        : d_(d), features_(std::move(features)), labels_(std::move(labels)), l2_(l2)
    {
        if (d_ == 0 || labels_.empty() || features_.size() != d_ * labels_.size())
        {
            throw std::invalid_argument("LogisticProblem: inconsistent feature matrix");
        }
        if (l2_ < 0.0)
        {
            throw std::invalid_argument("LogisticProblem: l2 coefficient must be nonnegative");
        }
        for (int y : labels_)
        {
            if (y != 0 && y != 1)
            {
                throw std::invalid_argument("LogisticProblem: labels must be 0 or 1");
            }
        }
    }

    double LogisticProblem::component_value(std::size_t i, std::span<const double> x) const
    {
        check_index(i);
        const double signed_label = 2.0 * labels_[i] - 1.0;
        const double z = signed_label * dot(row(i), x);
        // log(1 + exp(-z)) without overflow.
        const double loss = std::max(-z, 0.0) + std::log1p(std::exp(-std::abs(z)));
        return loss + 0.5 * l2_ * norm_sq(x);
    }

    void LogisticProblem::component_gradient(std::size_t i, std::span<const double> x, std::span<double> out) const
    {
        check_index(i);
        const double signed_label = 2.0 * labels_[i] - 1.0;
        const double z = signed_label * dot(row(i), x);
        // sigma(-z) = 1 / (1 + exp(z))
        double sigma_neg;
        if (z >= 0.0)
        {
            const double e = std::exp(-z);
            sigma_neg = e / (1.0 + e);
        }
        else
        {
            sigma_neg = 1.0 / (1.0 + std::exp(z));
        }
        const double coef = -signed_label * sigma_neg;
        const auto a = row(i);
        for (std::size_t k = 0; k < d_; ++k)
        {
            out[k] = coef * a[k] + l2_ * x[k];
        }
    }

    SmoothnessHints LogisticProblem::smoothness() const
    {
        SmoothnessHints hints;
        hints.per_component.reserve(labels_.size());
        CompensatedScalar sq;
        for (std::size_t i = 0; i < labels_.size(); ++i)
        {
            const double l = 0.25 * norm_sq(row(i)) + l2_;
            hints.per_component.push_back(l);
            sq.add(l * l);
        }
        hints.L_minus = hints.L_bar();
        hints.L_plus = std::sqrt(sq.value() / static_cast<double>(labels_.size()));
        return hints;
    }

    namespace
    {
        std::string_view trim(std::string_view s)
        {
            const auto first = s.find_first_not_of(" \t\r\n");
            if (first == std::string_view::npos)
            {
                return {};
            }
            const auto last = s.find_last_not_of(" \t\r\n");
            return s.substr(first, last - first + 1);
        }

        [[noreturn]] void fail_line(const std::filesystem::path& path, std::size_t line, const std::string& what)
        {
            throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + what);
        }
    }

    LogisticProblem load_csv_dataset(const std::filesystem::path& path, const CsvOptions& options)
    {
        std::ifstream in(path);
        if (!in)
        {
            throw std::runtime_error("cannot open dataset " + path.string());
        }

        std::vector<double> features;
        std::vector<int> labels;
        std::size_t columns = 0;
        std::size_t line_no = 0;
        std::string line;
        std::vector<double> fields;
        bool header_pending = options.has_header;
        while (std::getline(in, line))
        {
            ++line_no;
            if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
            {
                line.erase(0, 3);
            }
            if (trim(line).empty())
            {
                continue;
            }
            if (header_pending)
            {
                header_pending = false;
                continue;
            }

            fields.clear();
            std::string_view rest(line);
            while (true)
            {
                const auto comma = rest.find(',');
                const std::string_view token = trim(rest.substr(0, comma));
                double value = 0.0;
                const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
                if (token.empty() || ec != std::errc() || ptr != token.data() + token.size())
                {
                    fail_line(path, line_no, "malformed numeric field '" + std::string(token) + "'");
                }
                fields.push_back(value);
                if (comma == std::string_view::npos)
                {
                    break;
                }
                rest.remove_prefix(comma + 1);
            }

            if (columns == 0)
            {
                columns = fields.size();
                if (columns < 2)
                {
                    fail_line(path, line_no, "need at least one feature and one label column");
                }
            }
            else if (fields.size() != columns)
            {
                fail_line(path, line_no,
                          "expected " + std::to_string(columns) + " fields, found " + std::to_string(fields.size()));
            }

            const int ncols = static_cast<int>(columns);
            const int label_col = options.label_column < 0 ? ncols + options.label_column : options.label_column;
            if (label_col < 0 || label_col >= ncols)
            {
                throw std::invalid_argument("label column " + std::to_string(options.label_column) +
                                            " out of range for " + std::to_string(columns) + " columns");
            }
            const double label = fields[static_cast<std::size_t>(label_col)];
            if (label != 0.0 && label != 1.0)
            {
                fail_line(path, line_no, "label must be 0 or 1");
            }
            labels.push_back(static_cast<int>(label));
            for (std::size_t c = 0; c < columns; ++c)
            {
                if (static_cast<int>(c) != label_col)
                {
                    features.push_back(fields[c]);
                }
            }
        }

        if (labels.empty())
        {
            throw std::runtime_error("dataset " + path.string() + " contains no rows");
        }
        return LogisticProblem(columns - 1, std::move(features), std::move(labels), options.l2);
    }
}
