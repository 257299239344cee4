#include "nlrecon/constraints.hpp"

#include "nlrecon/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

namespace nlrecon {

namespace {

constexpr double kValueDenominatorFloor = 1e-300;
constexpr double kJacobianDenominatorFloor = 1e-10;

std::string format_point(std::span<const double> b) {
    std::ostringstream os;
    os.precision(17);
    os << '(';
    for (std::size_t k = 0; k < b.size(); ++k) {
        if (k) os << ", ";
        os << b[k];
    }
    os << ')';
    return os.str();
}

double checked_denominator(double d, double floor, std::span<const double> b, const char* what) {
    if (!(std::abs(d) >= floor)) {
        throw DomainError(std::string(what) + ": denominator " + std::to_string(d) +
                          " too close to zero at b = " + format_point(b));
    }
    return d;
}

std::vector<std::pair<int, int>> index_pairs(std::string_view name, const std::vector<double>& params) {
    std::vector<double> p = params.empty() ? std::vector<double>{0.0, 1.0} : params;
    if (p.size() % 2 != 0) {
        throw ConfigError(std::string(name) + ": params must be index pairs, got " +
                          std::to_string(p.size()) + " values");
    }
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t k = 0; k < p.size(); k += 2) {
        for (double v : {p[k], p[k + 1]}) {
            if (v < 0 || v != std::floor(v)) {
                throw ConfigError(std::string(name) + ": index " + std::to_string(v) +
                                  " is not a non-negative integer");
            }
        }
        int i = static_cast<int>(p[k]);
        int j = static_cast<int>(p[k + 1]);
        if (i == j) throw ConfigError(std::string(name) + ": pair uses the same index twice");
        pairs.emplace_back(i, j);
    }
    return pairs;
}

int pairs_arity(const std::vector<std::pair<int, int>>& pairs) {
    int n_b = 0;
    for (auto [i, j] : pairs) n_b = std::max({n_b, i + 1, j + 1});
    return n_b;
}

void require_no_params(std::string_view name, const std::vector<double>& params) {
    if (!params.empty()) throw ConfigError(std::string(name) + " takes no params");
}

int positive_int_param(std::string_view name, double v) {
    if (v < 1 || v != std::floor(v)) {
        throw ConfigError(std::string(name) + ": expected a positive integer, got " + std::to_string(v));
    }
    return static_cast<int>(v);
}

ConstraintFn make_ratio(const std::vector<double>& params) {
    auto pairs = index_pairs("ratio", params);
    const int n_b = pairs_arity(pairs);
    const int n_u = static_cast<int>(pairs.size());
    auto value = [pairs](std::span<const double> b, std::span<double> u) {
        for (std::size_t r = 0; r < pairs.size(); ++r) {
            auto [i, j] = pairs[r];
            u[r] = b[i] / checked_denominator(b[j], kValueDenominatorFloor, b, "ratio");
        }
    };
    auto jac = [pairs](std::span<const double> b, Eigen::Ref<Eigen::MatrixXd> J) {
        J.setZero();
        for (std::size_t r = 0; r < pairs.size(); ++r) {
            auto [i, j] = pairs[r];
            const double d = checked_denominator(b[j], kJacobianDenominatorFloor, b, "ratio jacobian");
            J(r, i) = 1.0 / d;
            J(r, j) = -b[i] / (d * d);
        }
    };
    return ConstraintFn("ratio", n_b, n_u, params, value, jac);
}

ConstraintFn make_product(const std::vector<double>& params) {
    auto pairs = index_pairs("product", params);
    const int n_b = pairs_arity(pairs);
    const int n_u = static_cast<int>(pairs.size());
    auto value = [pairs](std::span<const double> b, std::span<double> u) {
        for (std::size_t r = 0; r < pairs.size(); ++r) u[r] = b[pairs[r].first] * b[pairs[r].second];
    };
    auto jac = [pairs](std::span<const double> b, Eigen::Ref<Eigen::MatrixXd> J) {
        J.setZero();
        for (std::size_t r = 0; r < pairs.size(); ++r) {
            auto [i, j] = pairs[r];
            J(r, i) = b[j];
            J(r, j) = b[i];
        }
    };
    return ConstraintFn("product", n_b, n_u, params, value, jac);
}

ConstraintFn make_sum(const std::vector<double>& params) {
    if (params.size() > 1) throw ConfigError("sum: params = {n_b}");
    const int n_b = params.empty() ? 2 : positive_int_param("sum", params[0]);
    auto value = [](std::span<const double> b, std::span<double> u) {
        double s = 0.0;
        for (double v : b) s += v;
        u[0] = s;
    };
    auto jac = [](std::span<const double>, Eigen::Ref<Eigen::MatrixXd> J) { J.setOnes(); };
    return ConstraintFn("sum", n_b, 1, params, value, jac);
}

// Swiss-style structure: numerator and denominator counts per region with
// national totals and rates.
ConstraintFn make_ratio_block_paired(int K, const std::vector<double>& params) {
    auto value = [K](std::span<const double> b, std::span<double> u) {
        double num = 0.0;
        double den = 0.0;
        for (int k = 0; k < K; ++k) {
            num += b[k];
            den += b[K + k];
        }
        u[0] = num;
        u[1] = den;
        u[2] = num / checked_denominator(den, kValueDenominatorFloor, b, "ratio_block");
        for (int k = 0; k < K; ++k) {
            u[3 + k] = b[k] / checked_denominator(b[K + k], kValueDenominatorFloor, b, "ratio_block");
        }
    };
    auto jac = [K](std::span<const double> b, Eigen::Ref<Eigen::MatrixXd> J) {
        J.setZero();
        double num = 0.0;
        double den = 0.0;
        for (int k = 0; k < K; ++k) {
            num += b[k];
            den += b[K + k];
        }
        checked_denominator(den, kJacobianDenominatorFloor, b, "ratio_block jacobian");
        for (int k = 0; k < K; ++k) {
            J(0, k) = 1.0;
            J(1, K + k) = 1.0;
            J(2, k) = 1.0 / den;
            J(2, K + k) = -num / (den * den);
            const double d = checked_denominator(b[K + k], kJacobianDenominatorFloor, b, "ratio_block jacobian");
            J(3 + k, k) = 1.0 / d;
            J(3 + k, K + k) = -b[k] / (d * d);
        }
    };
    return ConstraintFn("ratio_block", 2 * K, K + 3, params, value, jac);
}

// Tourism-style structure: regional counts, their total, and regional shares.
ConstraintFn make_ratio_block_shares(int K, const std::vector<double>& params) {
    auto value = [K](std::span<const double> b, std::span<double> u) {
        double total = 0.0;
        for (int k = 0; k < K; ++k) total += b[k];
        u[0] = total;
        checked_denominator(total, kValueDenominatorFloor, b, "ratio_block");
        for (int k = 0; k < K; ++k) u[1 + k] = b[k] / total;
    };
    auto jac = [K](std::span<const double> b, Eigen::Ref<Eigen::MatrixXd> J) {
        double total = 0.0;
        for (int k = 0; k < K; ++k) total += b[k];
        checked_denominator(total, kJacobianDenominatorFloor, b, "ratio_block jacobian");
        const double inv2 = 1.0 / (total * total);
        for (int k = 0; k < K; ++k) {
            J(0, k) = 1.0;
            for (int m = 0; m < K; ++m) J(1 + k, m) = -b[k] * inv2;
            J(1 + k, k) += 1.0 / total;
        }
    };
    return ConstraintFn("ratio_block", K, K + 1, params, value, jac);
}

ConstraintFn make_ratio_block(const std::vector<double>& params) {
    if (params.size() > 2) throw ConfigError("ratio_block: params = {K} or {K, mode}");
    const int K = params.empty() ? 2 : positive_int_param("ratio_block", params[0]);
    const double mode = params.size() == 2 ? params[1] : 0.0;
    if (mode == 0.0) return make_ratio_block_paired(K, params);
    if (mode == 1.0) return make_ratio_block_shares(K, params);
    throw ConfigError("ratio_block: mode must be 0 (paired counts) or 1 (shares)");
}

}  // namespace

ConstraintFn::ConstraintFn(std::string name, int arity_in, int arity_out, std::vector<double> params,
                           ValueKernel value, JacobianKernel jacobian)
    : name_(std::move(name)),
      arity_in_(arity_in),
      arity_out_(arity_out),
      params_(std::move(params)),
      value_(std::move(value)),
      jacobian_(std::move(jacobian)) {
    if (arity_in_ < 1 || arity_out_ < 1) {
        throw ConfigError(name_ + ": arities must be positive");
    }
    if (!value_) throw ConfigError(name_ + ": missing value kernel");
}

void ConstraintFn::evaluate_into(std::span<const double> b, std::span<double> u) const {
    if (static_cast<int>(b.size()) != arity_in_ || static_cast<int>(u.size()) != arity_out_) {
        throw DimensionError(name_ + ": expected " + std::to_string(arity_in_) + " inputs and " +
                             std::to_string(arity_out_) + " outputs");
    }
    value_(b, u);
    for (double v : u) {
        if (!std::isfinite(v)) {
            throw DomainError(name_ + ": non-finite value at b = " + format_point(b));
        }
    }
}

Eigen::VectorXd ConstraintFn::operator()(const Eigen::VectorXd& b) const {
    Eigen::VectorXd u(arity_out_);
    evaluate_into({b.data(), static_cast<std::size_t>(b.size())}, {u.data(), static_cast<std::size_t>(u.size())});
    return u;
}

void ConstraintFn::jacobian_into(std::span<const double> b, Eigen::Ref<Eigen::MatrixXd> jac) const {
    if (static_cast<int>(b.size()) != arity_in_ || jac.rows() != arity_out_ || jac.cols() != arity_in_) {
        throw DimensionError(name_ + ": jacobian shape mismatch");
    }
    if (jacobian_) {
        jacobian_(b, jac);
    } else {
        Eigen::Map<const Eigen::VectorXd> bv(b.data(), arity_in_);
        jac = finite_difference_jacobian(bv);
    }
}

Eigen::MatrixXd ConstraintFn::jacobian(const Eigen::VectorXd& b) const {
    Eigen::MatrixXd J(arity_out_, arity_in_);
    jacobian_into({b.data(), static_cast<std::size_t>(b.size())}, J);
    return J;
}

Eigen::MatrixXd ConstraintFn::finite_difference_jacobian(const Eigen::VectorXd& b) const {
    if (b.size() != arity_in_) throw DimensionError(name_ + ": jacobian input size mismatch");
    Eigen::MatrixXd J(arity_out_, arity_in_);
    Eigen::VectorXd x = b;
    Eigen::VectorXd up(arity_out_);
    Eigen::VectorXd down(arity_out_);
    const std::span<const double> xs(x.data(), x.size());
    for (int k = 0; k < arity_in_; ++k) {
        const double h = 1e-6 * std::max(1.0, std::abs(b[k]));
        x[k] = b[k] + h;
        evaluate_into(xs, {up.data(), static_cast<std::size_t>(arity_out_)});
        x[k] = b[k] - h;
        evaluate_into(xs, {down.data(), static_cast<std::size_t>(arity_out_)});
        x[k] = b[k];
        J.col(k) = (up - down) / (2.0 * h);
    }
    return J;
}

const std::vector<std::string>& builtin_names() {
    static const std::vector<std::string> names{"paraboloid", "saddle", "ripples", "ratio",
                                                "ratio_block", "sum", "product"};
    return names;
}

ConstraintFn builtin(std::string_view name, const std::vector<double>& params) {
    if (name == "paraboloid") {
        require_no_params(name, params);
        return ConstraintFn(
            "paraboloid", 2, 1, {},
            [](std::span<const double> b, std::span<double> u) { u[0] = b[0] * b[0] + b[1] * b[1]; },
            [](std::span<const double> b, Eigen::Ref<Eigen::MatrixXd> J) {
                J(0, 0) = 2.0 * b[0];
                J(0, 1) = 2.0 * b[1];
            });
    }
    if (name == "saddle") {
        require_no_params(name, params);
        return ConstraintFn(
            "saddle", 2, 1, {},
            [](std::span<const double> b, std::span<double> u) { u[0] = b[0] * b[0] - b[1] * b[1]; },
            [](std::span<const double> b, Eigen::Ref<Eigen::MatrixXd> J) {
                J(0, 0) = 2.0 * b[0];
                J(0, 1) = -2.0 * b[1];
            });
    }
    if (name == "ripples") {
        require_no_params(name, params);
        return ConstraintFn(
            "ripples", 2, 1, {},
            [](std::span<const double> b, std::span<double> u) { u[0] = std::sin(b[0]) + std::cos(b[1]); },
            [](std::span<const double> b, Eigen::Ref<Eigen::MatrixXd> J) {
                J(0, 0) = std::cos(b[0]);
                J(0, 1) = -std::sin(b[1]);
            });
    }
    if (name == "ratio") return make_ratio(params);
    if (name == "product") return make_product(params);
    if (name == "sum") return make_sum(params);
    if (name == "ratio_block") return make_ratio_block(params);
    throw ConfigError("unknown constraint '" + std::string(name) + "'");
}

ConstraintFn linear_map(const Eigen::MatrixXd& A) {
    if (A.rows() < 1 || A.cols() < 1) throw ConfigError("linear: empty matrix");
    const int n_u = static_cast<int>(A.rows());
    const int n_b = static_cast<int>(A.cols());
    return ConstraintFn(
        "linear", n_b, n_u, {},
        [A](std::span<const double> b, std::span<double> u) {
            Eigen::Map<Eigen::VectorXd>(u.data(), A.rows()).noalias() =
                A * Eigen::Map<const Eigen::VectorXd>(b.data(), A.cols());
        },
        [A](std::span<const double>, Eigen::Ref<Eigen::MatrixXd> J) { J = A; });
}

ConstraintFn from_callable(std::string name, int arity_in, int arity_out, ConstraintFn::ValueKernel value) {
    return ConstraintFn(std::move(name), arity_in, arity_out, {}, std::move(value));
}

}  // namespace nlrecon
