#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "iotad/dataset.hpp"
#include "iotad/matrix.hpp"

namespace iotad::ocsvm {

struct OcSvmParams {
    double nu = 0.05;
    // nullopt means "scale": 1 / (d * mean per-column variance of the training data).
    std::optional<double> gamma;
    double tolerance = 1e-3;
    // Pairwise update budget; 0 means 10 * n.
    std::uint64_t max_passes = 0;
    std::uint64_t seed = 0;

    void validate() const;
};

// Fitted nu-one-class SVM with RBF kernel. Immutable after fit.
struct OcSvmModel {
    OcSvmParams params;
    double gamma = 0.0;           // resolved kernel width
    std::uint32_t train_count = 0;
    Matrix support_vectors;       // rows with nonzero dual coefficient, training order
    std::vector<double> alphas;   // one per support vector
    double rho = 0.0;

    std::uint32_t dimension() const noexcept { return static_cast<std::uint32_t>(support_vectors.cols()); }
    // Upper bound on each dual coefficient, 1 / (nu * n).
    double alpha_bound() const noexcept { return 1.0 / (params.nu * train_count); }
};

// Solver state exposed for verification.
struct FitDiagnostics {
    std::vector<double> alphas;           // all n coefficients, training order
    std::vector<double> decision_values;  // f(x_i) at every training point
    std::uint64_t iterations = 0;
    bool converged = false;
    double max_violation = 0.0;           // final maximal KKT pair violation
    double objective = 0.0;               // 1/2 a^T K a
};

double rbf_kernel(std::span<const double> x, std::span<const double> y, double gamma);

double resolve_gamma(const Matrix& train, const OcSvmParams& params);

// 1/2 sum_ij a_i a_j k(x_i, x_j).
double dual_objective(const Matrix& train, std::span<const double> alphas, double gamma);

OcSvmModel fit_ocsvm(const Matrix& train, const OcSvmParams& params, FitDiagnostics* diagnostics = nullptr);

// Exhaustive grid over the feasible set, refined by cyclic pair descent.
// Verification oracle for small problems (n <= 6).
std::vector<double> brute_force_dual(const Matrix& train, const OcSvmParams& params, int grid_steps);

// f(x) = sum_i a_i k(sv_i, x) - rho; f >= 0 inside the boundary.
double decision_value(const OcSvmModel& model, std::span<const double> point);
std::vector<double> decision_values(const OcSvmModel& model, const Matrix& points);

// 1 iff f(x) < 0.
Labels predict(const OcSvmModel& model, const Matrix& points);

std::vector<std::uint8_t> serialize(const OcSvmModel& model);
OcSvmModel deserialize(std::span<const std::uint8_t> bytes);

}  // namespace iotad::ocsvm
