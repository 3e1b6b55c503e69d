#pragma once

#include "freya/vector_ops.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace freya
{
    /// Smoothness constants of a finite-sum problem, where known.
    /// L_minus: smoothness of f. L_plus: mean-square smoothness of the
    /// components. L_pm: Hessian variance. per_component: L_i of each f_i.
    struct SmoothnessHints
    {
        std::optional<double> L_minus;
        std::optional<double> L_plus;
        std::optional<double> L_pm;
        std::vector<double> per_component;

        double L_bar() const;
        double L_max() const;
        /// L_pm if supplied, otherwise L_plus (always a valid choice).
        double hessian_variance() const;
    };

    /// f(x) = (1/m) sum_i f_i(x) with m components in dimension d.
    /// Implementations are immutable after construction and every method is
    /// safe to call concurrently.
    class FiniteSumObjective
    {
    public:
        virtual ~FiniteSumObjective() = default;

        virtual std::size_t components() const = 0;
        virtual std::size_t dimension() const = 0;

        virtual double component_value(std::size_t i, std::span<const double> x) const = 0;

        /// Writes grad f_i(x) into `out` (size d). Must be a pure function.
        virtual void component_gradient(std::size_t i, std::span<const double> x,
                                        std::span<double> out) const = 0;

        Vec component_gradient(std::size_t i, std::span<const double> x) const;

        /// f(x). The default sums the components; subclasses may provide a
        /// closed form.
        virtual double value(std::span<const double> x) const;

        /// grad f(x). The default is full_gradient_reference.
        virtual Vec gradient(std::span<const double> x) const;

        virtual SmoothnessHints smoothness() const { return {}; }

        /// Known global minimum value f*, if the problem has a trusted closed form.
        virtual std::optional<double> optimal_value() const { return std::nullopt; }

        virtual Vec initial_point() const { return Vec(dimension(), 0.0); }

    protected:
        void check_index(std::size_t i) const;
    };

    /// Sequential (1/m) sum_i grad f_i(x): the verification oracle every
    /// collector is checked against.
    Vec full_gradient_reference(const FiniteSumObjective& objective, std::span<const double> x);

    double full_value_reference(const FiniteSumObjective& objective, std::span<const double> x);

    // ------------------------------------------------------------------
    // Tridiagonal quadratic benchmark
    // ------------------------------------------------------------------

    struct QuadraticSpec
    {
        std::size_t m = 0;
        std::size_t d = 0;
        double lambda = 0.0;
        double noise = 0.0;
        std::uint64_t seed = 0;
    };

    void to_json(nlohmann::json& j, const QuadraticSpec& spec);
    void from_json(const nlohmann::json& j, QuadraticSpec& spec);

    /// f_i(x) = 1/2 x^T A_i x - b_i^T x with
    ///   A_i = scale_i * T + shift * I,  T = tridiag(-1, 2, -1),
    ///   b_i = (b_first_i, 0, ..., 0).
    /// Stored in O(m + d) memory; gradients cost O(d).
    class QuadraticProblem final : public FiniteSumObjective
    {
    public:
        QuadraticProblem(QuadraticSpec spec, std::vector<double> scales, std::vector<double> b_first,
                         double lambda_min_unshifted);

        std::size_t components() const override { return scales_.size(); }
        std::size_t dimension() const override { return spec_.d; }

        using FiniteSumObjective::component_gradient;
        double component_value(std::size_t i, std::span<const double> x) const override;
        void component_gradient(std::size_t i, std::span<const double> x,
                                std::span<double> out) const override;

        double value(std::span<const double> x) const override;
        Vec gradient(std::span<const double> x) const override;
        SmoothnessHints smoothness() const override;
        std::optional<double> optimal_value() const override;
        Vec initial_point() const override;

        const QuadraticSpec& spec() const noexcept { return spec_; }
        double scale(std::size_t i) const { return scales_.at(i); }
        double b_first(std::size_t i) const { return b_first_.at(i); }
        double shift() const noexcept { return shift_; }
        double mean_scale() const noexcept { return mean_scale_; }
        double mean_b_first() const noexcept { return mean_b_first_; }
        /// lambda_min of the mean matrix before the shift was applied.
        double lambda_min_unshifted() const noexcept { return lambda_min_unshifted_; }

        /// The mean matrix (1/m) sum A_i in tridiagonal form.
        struct Tridiagonal
        {
            double diagonal;
            double off_diagonal;
        };
        Tridiagonal mean_matrix() const noexcept
        {
            return {2.0 * mean_scale_ + shift_, -mean_scale_};
        }

        /// argmin f, available because the shifted mean matrix is positive definite.
        Vec minimizer() const;

    private:
        // out = (scale * T + shift * I) x
        void apply(double scale, std::span<const double> x, std::span<double> out) const;

        QuadraticSpec spec_;
        std::vector<double> scales_;
        std::vector<double> b_first_;
        double lambda_min_unshifted_;
        double shift_;
        double mean_scale_;
        double mean_b_first_;
    };

    /// Generates the benchmark quadratic: per component nu_s = 1 + s * xi_s,
    /// nu_b = s * xi_b, A_i = (nu_s / 4) T, b_i = (nu_s / 4)(-1 + nu_b) e_1,
    /// then every A_i is shifted by (lambda - lambda_min(mean A)) I.
    /// Start point is (sqrt(d), 0, ..., 0).
    QuadraticProblem generate_quadratic(const QuadraticSpec& spec);

    inline QuadraticProblem generate_quadratic(std::size_t m, std::size_t d, double lambda, double noise,
                                               std::uint64_t seed)
    {
        return generate_quadratic(QuadraticSpec{m, d, lambda, noise, seed});
    }

    // ------------------------------------------------------------------
    // Binary logistic regression
    // ------------------------------------------------------------------

    /// f_i(x) = log(1 + exp(-yhat_i a_i^T x)) + (mu / 2) ||x||^2, yhat_i = 2 y_i - 1.
    class LogisticProblem final : public FiniteSumObjective
    {
    public:
        LogisticProblem(std::size_t d, std::vector<double> features, std::vector<int> labels, double l2 = 0.0);

        std::size_t components() const override { return labels_.size(); }
        std::size_t dimension() const override { return d_; }

        using FiniteSumObjective::component_gradient;
        double component_value(std::size_t i, std::span<const double> x) const override;
        void component_gradient(std::size_t i, std::span<const double> x,
                                std::span<double> out) const override;
        SmoothnessHints smoothness() const override;

        std::span<const double> row(std::size_t i) const
        {
            return std::span<const double>(features_).subspan(i * d_, d_);
        }
        int label(std::size_t i) const { return labels_.at(i); }
        double l2() const noexcept { return l2_; }

    private:
        std::size_t d_;
        std::vector<double> features_;
        std::vector<int> labels_;
        double l2_;
    };

    struct CsvOptions
    {
        /// Column holding the 0/1 label; negative counts from the end (-1 = last).
        int label_column = -1;
        bool has_header = false;
        double l2 = 0.0;
    };

    /// Reads a comma-separated file, one component per row.
    LogisticProblem load_csv_dataset(const std::filesystem::path& path, const CsvOptions& options = {});
}
