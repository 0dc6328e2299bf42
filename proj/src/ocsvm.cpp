#include "iotad/ocsvm.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <list>
#include <string>
#include <unordered_map>

#include "iotad/binary_io.hpp"
#include "iotad/errors.hpp"

namespace iotad::ocsvm {

namespace {

constexpr std::string_view kMagic = "OSv1";
constexpr std::size_t kFullKernelLimit = 4096;
constexpr std::size_t kCacheBudgetBytes = std::size_t{256} << 20;
constexpr double kMinCurvature = 1e-12;

void check_dimension(std::size_t got, std::size_t want) {
    if (got != want) {
        throw DataError("dimension mismatch: point has " + std::to_string(got) + " features, model expects " +
                        std::to_string(want));
    }
}

double squared_distance(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double diff = x[k] - y[k];
        s += diff * diff;
    }
    return s;
}

// Kernel rows on demand: the whole matrix up to kFullKernelLimit points,
// otherwise an LRU cache of rows within kCacheBudgetBytes.
class KernelRows {
public:
    KernelRows(const Matrix& data, double gamma) : data_(data), gamma_(gamma), n_(data.rows()) {
        if (n_ <= kFullKernelLimit) {
            full_.resize(n_ * n_);
            for (std::size_t i = 0; i < n_; ++i) {
                full_[i * n_ + i] = 1.0;
                for (std::size_t j = 0; j < i; ++j) {
                    const double k = std::exp(-gamma_ * squared_distance(data_.row(i), data_.row(j)));
                    full_[i * n_ + j] = k;
                    full_[j * n_ + i] = k;
                }
            }
        } else {
            capacity_ = std::max<std::size_t>(2, kCacheBudgetBytes / (n_ * sizeof(double)));
        }
    }

    // Valid until two further distinct rows have been requested.
    std::span<const double> row(std::size_t i) {
        if (!full_.empty()) return {full_.data() + i * n_, n_};
        if (auto it = index_.find(i); it != index_.end()) {
            lru_.splice(lru_.begin(), lru_, it->second);
            return it->second->values;
        }
        if (lru_.size() >= capacity_) {
            index_.erase(lru_.back().index);
            lru_.pop_back();
        }
        lru_.push_front({i, std::vector<double>(n_)});
        auto& values = lru_.front().values;
        for (std::size_t j = 0; j < n_; ++j) values[j] = std::exp(-gamma_ * squared_distance(data_.row(i), data_.row(j)));
        index_[i] = lru_.begin();
        return values;
    }

private:
    struct CachedRow {
        std::size_t index;
        std::vector<double> values;
    };

    const Matrix& data_;
    double gamma_;
    std::size_t n_;
    std::vector<double> full_;
    std::size_t capacity_ = 0;
    std::list<CachedRow> lru_;
    std::unordered_map<std::size_t, std::list<CachedRow>::iterator> index_;
};

void check_finite(const Matrix& train) {
    for (double v : train.values()) {
        if (!std::isfinite(v)) throw DataError("non-finite training value");
    }
}

}  // namespace

void OcSvmParams::validate() const {
    if (!(nu > 0.0 && nu <= 1.0)) throw ConfigError("ocsvm nu must lie in (0, 1]");
    if (gamma && !(*gamma > 0.0 && std::isfinite(*gamma))) throw ConfigError("ocsvm gamma must be positive");
    if (!(tolerance > 0.0)) throw ConfigError("ocsvm tolerance must be positive");
}

double rbf_kernel(std::span<const double> x, std::span<const double> y, double gamma) {
    check_dimension(y.size(), x.size());
    return std::exp(-gamma * squared_distance(x, y));
}

double resolve_gamma(const Matrix& train, const OcSvmParams& params) {
    if (params.gamma) return *params.gamma;
    const std::size_t n = train.rows();
    const std::size_t d = train.cols();
    if (n == 0 || d == 0) return 1.0;
    double variance_sum = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += train(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (train(i, j) - mean) * (train(i, j) - mean);
        variance_sum += var / static_cast<double>(n);
    }
    const double mean_variance = variance_sum / static_cast<double>(d);
    return mean_variance > 0.0 ? 1.0 / (static_cast<double>(d) * mean_variance) : 1.0;
}

double dual_objective(const Matrix& train, std::span<const double> alphas, double gamma) {
    double total = 0.0;
    for (std::size_t i = 0; i < train.rows(); ++i) {
        if (alphas[i] == 0.0) continue;
        for (std::size_t j = 0; j < train.rows(); ++j) {
            if (alphas[j] == 0.0) continue;
            total += alphas[i] * alphas[j] * rbf_kernel(train.row(i), train.row(j), gamma);
        }
    }
    return 0.5 * total;
}

OcSvmModel fit_ocsvm(const Matrix& train, const OcSvmParams& params, FitDiagnostics* diagnostics) {
    params.validate();
    const std::size_t n = train.rows();
    if (n < 2) throw DataError("one-class SVM needs at least 2 training rows, got " + std::to_string(n));
    if (params.nu * static_cast<double>(n) < 1.0) {
        throw ConfigError("infeasible nu: nu * n = " + std::to_string(params.nu * static_cast<double>(n)) +
                          " < 1, so the bound 1/(nu n) cannot reach sum(alpha) = 1");
    }
    check_finite(train);

    const double gamma = resolve_gamma(train, params);
    const double bound = 1.0 / (params.nu * static_cast<double>(n));
    KernelRows kernel(train, gamma);

    // Feasible start: fill coefficients up to the bound in index order.
    std::vector<double> alpha(n, 0.0);
    double remaining = 1.0;
    for (std::size_t i = 0; i < n && remaining > 0.0; ++i) {
        alpha[i] = std::min(bound, remaining);
        remaining -= alpha[i];
        if (remaining < 1e-15) remaining = 0.0;
    }

    std::vector<double> grad(n, 0.0);  // (K a)_i
    for (std::size_t i = 0; i < n; ++i) {
        if (alpha[i] == 0.0) continue;
        auto ki = kernel.row(i);
        for (std::size_t t = 0; t < n; ++t) grad[t] += alpha[i] * ki[t];
    }

    const std::uint64_t max_iter = params.max_passes != 0 ? params.max_passes : 10 * static_cast<std::uint64_t>(n);
    std::uint64_t iter = 0;
    bool converged = false;
    double violation = 0.0;
    for (;; ++iter) {
        // Maximal violating pair; strict comparisons keep the lowest index on ties.
        std::size_t up = n, low = n;
        double up_value = -std::numeric_limits<double>::infinity();
        double low_value = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < n; ++t) {
            if (alpha[t] < bound && -grad[t] > up_value) {
                up_value = -grad[t];
                up = t;
            }
            if (alpha[t] > 0.0 && -grad[t] < low_value) {
                low_value = -grad[t];
                low = t;
            }
        }
        violation = (up == n || low == n) ? 0.0 : up_value - low_value;
        if (violation <= params.tolerance) {
            converged = true;
            break;
        }
        if (iter >= max_iter) break;

        auto ki = kernel.row(up);
        auto kj = kernel.row(low);
        const double curvature = std::max(ki[up] + kj[low] - 2.0 * ki[low], kMinCurvature);
        const double room_up = bound - alpha[up];
        const double room_low = alpha[low];
        const double step = std::min({violation / curvature, room_up, room_low});
        // Land exactly on the box faces so the free/bound tests stay exact.
        alpha[up] = step == room_up ? bound : alpha[up] + step;
        alpha[low] = step == room_low ? 0.0 : alpha[low] - step;
        for (std::size_t t = 0; t < n; ++t) grad[t] += step * (ki[t] - kj[t]);
    }

    // Offset: mean gradient over free vectors, else the midpoint between the
    // bound groups' extremes.
    double free_sum = 0.0;
    std::size_t free_count = 0;
    double zero_min = std::numeric_limits<double>::infinity();   // rho <= this
    double bound_max = -std::numeric_limits<double>::infinity(); // rho >= this
    for (std::size_t t = 0; t < n; ++t) {
        if (alpha[t] > 0.0 && alpha[t] < bound) {
            free_sum += grad[t];
            ++free_count;
        } else if (alpha[t] == 0.0) {
            zero_min = std::min(zero_min, grad[t]);
        } else {
            bound_max = std::max(bound_max, grad[t]);
        }
    }
    double rho = 0.0;
    if (free_count > 0) {
        rho = free_sum / static_cast<double>(free_count);
    } else if (std::isfinite(zero_min) && std::isfinite(bound_max)) {
        rho = 0.5 * (zero_min + bound_max);
    } else {
        rho = std::isfinite(zero_min) ? zero_min : bound_max;
    }

    OcSvmModel model;
    model.params = params;
    model.gamma = gamma;
    model.train_count = static_cast<std::uint32_t>(n);
    model.rho = rho;
    model.support_vectors.reset_columns(train.cols());
    for (std::size_t t = 0; t < n; ++t) {
        if (alpha[t] == 0.0) continue;
        model.support_vectors.append_row(train.row(t));
        model.alphas.push_back(alpha[t]);
    }

    if (diagnostics) {
        diagnostics->decision_values.resize(n);
        double objective = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            diagnostics->decision_values[t] = grad[t] - rho;
            objective += alpha[t] * grad[t];
        }
        diagnostics->objective = 0.5 * objective;
        diagnostics->alphas = std::move(alpha);
        diagnostics->iterations = iter;
        diagnostics->converged = converged;
        diagnostics->max_violation = violation;
    }
    return model;
}

std::vector<double> brute_force_dual(const Matrix& train, const OcSvmParams& params, int grid_steps) {
    params.validate();
    const std::size_t n = train.rows();
    if (n > 6) throw ConfigError("brute_force_dual is limited to n <= 6, got " + std::to_string(n));
    if (n == 0) throw DataError("brute_force_dual needs at least one row");
    if (grid_steps < 1) throw ConfigError("grid_steps must be positive");
    if (params.nu * static_cast<double>(n) < 1.0) throw ConfigError("infeasible nu for brute_force_dual");

    const double gamma = resolve_gamma(train, params);
    const double bound = 1.0 / (params.nu * static_cast<double>(n));
    std::vector<double> k(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) k[i * n + j] = rbf_kernel(train.row(i), train.row(j), gamma);
    }
    const auto objective = [&](const std::vector<double>& a) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) s += a[i] * a[j] * k[i * n + j];
        }
        return 0.5 * s;
    };

    // Grid on the first n-1 coordinates; the last closes the simplex.
    std::vector<double> best;
    double best_value = std::numeric_limits<double>::infinity();
    std::vector<int> digits(n - 1, 0);
    std::vector<double> a(n);
    const double cell = bound / grid_steps;
    while (true) {
        double partial = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            a[i] = digits[i] * cell;
            partial += a[i];
        }
        double last = 1.0 - partial;
        if (last > -1e-12 && last < bound + 1e-12) {
            a[n - 1] = std::clamp(last, 0.0, bound);
            const double v = objective(a);
            if (v < best_value) {
                best_value = v;
                best = a;
            }
        }
        std::size_t pos = 0;
        while (pos < digits.size() && ++digits[pos] > grid_steps) digits[pos++] = 0;
        if (pos == digits.size()) break;
    }
    if (best.empty()) throw RuntimeError("brute_force_dual found no feasible grid point");

    // Cyclic exact minimisation along every pair direction e_i - e_j.
    for (int sweep = 0; sweep < 100000; ++sweep) {
        double largest_step = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double curvature = k[i * n + i] + k[j * n + j] - 2.0 * k[i * n + j];
                if (curvature <= 1e-15) continue;
                double gi = 0.0, gj = 0.0;
                for (std::size_t t = 0; t < n; ++t) {
                    gi += k[i * n + t] * best[t];
                    gj += k[j * n + t] * best[t];
                }
                const double lo = std::max(-best[i], best[j] - bound);
                const double hi = std::min(bound - best[i], best[j]);
                const double step = std::clamp((gj - gi) / curvature, lo, hi);
                best[i] += step;
                best[j] -= step;
                largest_step = std::max(largest_step, std::abs(step));
            }
        }
        if (largest_step < 1e-12) break;
    }
    return best;
}

double decision_value(const OcSvmModel& model, std::span<const double> point) {
    check_dimension(point.size(), model.dimension());
    double s = 0.0;
    for (std::size_t i = 0; i < model.alphas.size(); ++i) {
        s += model.alphas[i] * std::exp(-model.gamma * squared_distance(model.support_vectors.row(i), point));
    }
    return s - model.rho;
}

std::vector<double> decision_values(const OcSvmModel& model, const Matrix& points) {
    check_dimension(points.cols(), model.dimension());
    std::vector<double> out(points.rows());
    for (std::size_t i = 0; i < points.rows(); ++i) out[i] = decision_value(model, points.row(i));
    return out;
}

Labels predict(const OcSvmModel& model, const Matrix& points) {
    const auto values = decision_values(model, points);
    Labels out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] < 0.0 ? 1 : 0;
    return out;
}

// Layout: "OSv1" | f64 nu | u8 gamma_is_scale | f64 gamma param | f64 tolerance |
// u64 max_passes | u64 seed | f64 resolved gamma | u32 n_train | u32 d | u32 m |
// m*d f64 support vectors | m f64 alphas | f64 rho.
std::vector<std::uint8_t> serialize(const OcSvmModel& model) {
    ByteWriter out;
    out.put_tag(kMagic);
    out.put_f64(model.params.nu);
    out.put_u8(model.params.gamma ? 0 : 1);
    out.put_f64(model.params.gamma.value_or(0.0));
    out.put_f64(model.params.tolerance);
    out.put_u64(model.params.max_passes);
    out.put_u64(model.params.seed);
    out.put_f64(model.gamma);
    out.put_u32(model.train_count);
    out.put_u32(static_cast<std::uint32_t>(model.support_vectors.cols()));
    out.put_u32(static_cast<std::uint32_t>(model.alphas.size()));
    for (double v : model.support_vectors.values()) out.put_f64(v);
    for (double a : model.alphas) out.put_f64(a);
    out.put_f64(model.rho);
    return std::move(out).bytes();
}

OcSvmModel deserialize(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.expect_tag(kMagic);
    OcSvmModel model;
    model.params.nu = in.get_f64();
    const std::uint8_t is_scale = in.get_u8();
    const double gamma_param = in.get_f64();
    if (is_scale > 1) throw DataError("malformed one-class SVM header: gamma flag");
    if (!is_scale) model.params.gamma = gamma_param;
    model.params.tolerance = in.get_f64();
    model.params.max_passes = in.get_u64();
    model.params.seed = in.get_u64();
    model.gamma = in.get_f64();
    model.train_count = in.get_u32();
    const std::uint32_t d = in.get_u32();
    const std::uint32_t m = in.get_u32();
    if (d == 0) throw DataError("malformed one-class SVM header: zero dimension");
    const std::uint64_t payload = (static_cast<std::uint64_t>(m) * d + m + 1) * 8;
    if (payload != in.remaining()) throw DataError("truncated model bytes: support vector payload size mismatch");
    model.support_vectors = Matrix(m, d);
    for (std::uint32_t i = 0; i < m; ++i) {
        for (auto& v : model.support_vectors.row(i)) v = in.get_f64();
    }
    model.alphas.resize(m);
    for (auto& a : model.alphas) a = in.get_f64();
    model.rho = in.get_f64();
    in.expect_end();
    return model;
}

}  // namespace iotad::ocsvm
