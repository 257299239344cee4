#include "nlrecon/projection.hpp"

#include "nlrecon/errors.hpp"
#include "nlrecon/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace nlrecon {

void ProjectionConfig::validate() const {
    if (max_iter < 1 || !(grad_tol > 0) || !(step_tol > 0) || !(damping > 0) || max_backtracks < 1 ||
        !(line_search_shrink > 0 && line_search_shrink < 1)) {
        throw ConfigError("invalid projection config");
    }
}

namespace {

constexpr double kMaxDamping = 1e16;
constexpr double kMinDamping = 1e-12;
constexpr double kFlatTol = 1e-13;
// Safety factor on the rounding error of the whitened residual.
constexpr double kNoiseFactor = 16.0;

// Per-worker scratch space so that the inner loop does not allocate.
class Projector {
public:
    Projector(const HierarchySpec& spec, const WeightSpec& W, const ProjectionConfig& cfg)
        : spec_(spec),
          cfg_(cfg),
          n_(spec.n()),
          n_u_(spec.n_u()),
          n_b_(spec.n_b()),
          Gt_(W.W_inv_chol().transpose()),
          gt_norm_(Gt_.norm()),
          y_hat_(n_),
          y_(n_),
          e_(n_),
          e_try_(n_),
          b_(n_b_),
          b_try_(n_b_),
          delta_(n_b_),
          grad_(n_b_),
          grad_try_(n_b_),
          J_u_(n_u_, n_b_),
          A_(n_, n_b_),
          A_try_(n_, n_b_),
          H_(n_b_, n_b_),
          ldlt_(n_b_) {}

    PointProjection run(std::span<const double> y_hat) {
        y_hat_ = Eigen::Map<const Eigen::VectorXd>(y_hat.data(), n_);
        b_ = y_hat_.tail(n_b_);
        // Rounding error of e = G'(y_hat - f(b)) is about eps ||G|| ||y_hat||_inf.
        e_noise_ = kNoiseFactor * std::numeric_limits<double>::epsilon() * gt_norm_ *
                   std::max(1.0, y_hat_.cwiseAbs().maxCoeff());

        PointProjection out;
        double g = objective_at(b_, e_);
        if (!std::isfinite(g)) {
            throw DomainError("projection: constraint undefined at the warm start");
        }
        double mu = cfg_.damping;
        double grad_norm = gradient();
        int accepted = 0;
        bool converged = grad_norm <= cfg_.grad_tol * std::max(1.0, g);

        for (int it = 0; it < cfg_.max_iter && !converged; ++it) {
            H_.noalias() = A_.transpose() * A_;
            bool stepped = false;
            bool stalled = false;
            while (!stepped && mu <= kMaxDamping) {
                H_.diagonal().array() += mu;
                ldlt_.compute(H_);
                delta_ = ldlt_.solve(grad_);
                H_.diagonal().array() -= mu;
                // A large W^{-1} makes H large and the step short, so a short
                // step is still tried; only a rejected one counts as a stall.
                const bool tiny = delta_.norm() <= cfg_.step_tol * (b_.norm() + cfg_.step_tol);
                double t = 1.0;
                for (int k = 0; k < cfg_.max_backtracks; ++k) {
                    b_try_ = b_ + t * delta_;
                    const double g_try = objective_at(b_try_, e_try_);
                    // Close to a minimizer the decrease in g drops below its
                    // rounding error; there a step counts if it shrinks the gradient.
                    const bool decrease = g_try < g;
                    const double slack = std::max(kFlatTol * g, 2.0 * std::sqrt(g) * e_noise_);
                    const bool flat = !decrease && g_try <= g + slack && gradient_at(b_try_, e_try_) < grad_norm;
                    if (decrease || flat) {
                        b_.swap(b_try_);
                        e_.swap(e_try_);
                        g = g_try;
                        stepped = true;
                        break;
                    }
                    t *= cfg_.line_search_shrink;
                }
                if (stepped) {
                    mu = std::max(mu * 0.1, kMinDamping);
                } else if (tiny) {
                    stalled = true;
                    break;
                } else {
                    mu *= 10.0;
                }
            }
            if (!stepped || stalled) break;
            ++accepted;
            grad_norm = gradient();
            converged = grad_norm <= cfg_.grad_tol * std::max(1.0, g);
        }

        out.iterations = accepted;
        out.converged = converged;
        out.grad_norm = grad_norm;
        if (converged) {
            out.b_star = b_;
            out.objective = g;
        } else {
            out.fell_back = true;
            out.b_star = y_hat_.tail(n_b_);
            out.objective = objective_at(out.b_star, e_try_);
        }
        return out;
    }

private:
    // g(b) with the whitened residual G'(y_hat - f(b)) written to `e`;
    // +inf outside the constraint's domain.
    double objective_at(const Eigen::VectorXd& b, Eigen::VectorXd& e) {
        try {
            fta_into(spec_, {b.data(), static_cast<std::size_t>(n_b_)}, {y_.data(), static_cast<std::size_t>(n_)});
        } catch (const DomainError&) {
            return std::numeric_limits<double>::infinity();
        }
        e.noalias() = Gt_ * (y_hat_ - y_);
        return e.squaredNorm();
    }

    // Refreshes A = G' J_f at b_ and grad = A' e = J_f' W^{-1} (y_hat - f(b)).
    double gradient() { return gradient_into(b_, e_, A_, grad_); }

    // Gradient norm at a trial point, leaving the current state untouched.
    double gradient_at(const Eigen::VectorXd& b, const Eigen::VectorXd& e) {
        return gradient_into(b, e, A_try_, grad_try_);
    }

    double gradient_into(const Eigen::VectorXd& b, const Eigen::VectorXd& e, Eigen::MatrixXd& A,
                         Eigen::VectorXd& grad) {
        spec_.ftc().jacobian_into({b.data(), static_cast<std::size_t>(n_b_)}, J_u_);
        A.noalias() = Gt_.leftCols(n_u_) * J_u_;
        A += Gt_.rightCols(n_b_);
        grad.noalias() = A.transpose() * e;
        return grad.norm();
    }

    const HierarchySpec& spec_;
    const ProjectionConfig& cfg_;
    int n_;
    int n_u_;
    int n_b_;
    Eigen::MatrixXd Gt_;
    double gt_norm_;
    double e_noise_ = 0.0;
    Eigen::VectorXd y_hat_, y_, e_, e_try_, b_, b_try_, delta_, grad_, grad_try_;
    Eigen::MatrixXd J_u_, A_, A_try_, H_;
    Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

void check_inputs(const HierarchySpec& spec, const WeightSpec& W, int n) {
    if (n != spec.n()) throw DimensionError("projection: input has wrong number of series");
    if (W.dim() != spec.n()) throw DimensionError("projection: weight matrix has wrong size");
}

}  // namespace

PointProjection project_point(const HierarchySpec& spec, const WeightSpec& W, const Eigen::VectorXd& y_hat,
                              const ProjectionConfig& cfg) {
    cfg.validate();
    check_inputs(spec, W, static_cast<int>(y_hat.size()));
    if (!y_hat.allFinite()) throw DomainError("projection: non-finite query point");
    Projector projector(spec, W, cfg);
    return projector.run({y_hat.data(), static_cast<std::size_t>(y_hat.size())});
}

ProjectedCloud project_cloud(const HierarchySpec& spec, const WeightSpec& W, const SampleCloud& base_cloud,
                             const ProjectionConfig& cfg, int threads) {
    cfg.validate();
    check_inputs(spec, W, base_cloud.n());
    const auto M = static_cast<std::size_t>(base_cloud.size());
    const auto n = static_cast<std::size_t>(spec.n());
    const auto n_b = static_cast<std::size_t>(spec.n_b());

    RowMatrix out(base_cloud.size(), spec.n());
    ProjectionDiagnostics diag;
    diag.iterations.resize(M);
    diag.converged.resize(M);
    diag.objective.resize(M);
    diag.grad_norm.resize(M);
    std::vector<char> fell_back(M, 0);

    parallel_for(M, threads, [&](std::size_t begin, std::size_t end) {
        Projector projector(spec, W, cfg);
        for (std::size_t i = begin; i < end; ++i) {
            PointProjection p;
            try {
                p = projector.run(base_cloud.row(static_cast<int>(i)));
                fta_into(spec, {p.b_star.data(), n_b}, {out.data() + i * n, n});
            } catch (const DomainError& e) {
                throw DomainError("projection row " + std::to_string(i) + ": " + e.what());
            }
            diag.iterations[i] = p.iterations;
            diag.converged[i] = p.converged ? 1 : 0;
            diag.objective[i] = p.objective;
            diag.grad_norm[i] = p.grad_norm;
            fell_back[i] = p.fell_back ? 1 : 0;
        }
    });

    diag.fallback_count = static_cast<int>(std::count(fell_back.begin(), fell_back.end(), 1));
    if (2 * static_cast<std::size_t>(diag.fallback_count) > M) {
        throw NumericalError("projection: " + std::to_string(diag.fallback_count) + " of " + std::to_string(M) +
                             " samples failed to converge");
    }
    return {SampleCloud(std::move(out), spec.n_u()), std::move(diag)};
}

}  // namespace nlrecon
