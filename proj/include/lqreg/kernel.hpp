#pragma once

// Gaussian kernel, Gram matrices and models living in the sample dependent
// hypothesis space span{G_sigma(x_i, .)}.
//
// Points are stored row-wise: an m x d matrix holds m points of dimension d.
// Squared distances are accumulated coordinate by coordinate in index order,
// so G(x, x') and G(x', x) are bitwise identical. Entries whose exponent
// falls below the double underflow threshold round to 0; the diagonal of a
// Gram matrix is set to exactly 1.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "error.hpp"

namespace lqreg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct KernelParams {
    double sigma = 1.0;

    explicit KernelParams(double width = 1.0) : sigma(width) {
        if (!(sigma > 0.0) || !std::isfinite(sigma)) {
            throw ConfigError("kernel width sigma must be positive and finite");
        }
    }
};

/// Sample z = (x_i, y_i), i = 1..m, with outputs bounded by M.
struct Dataset {
    Points X;
    Vector y;
    double M = 1.0;

    std::size_t size() const noexcept { return static_cast<std::size_t>(X.rows()); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(X.cols()); }

    /// Throws InputError unless m >= 1, |y_i| <= M and (unless skipped) every x_i lies in [0,1]^d.
    void validate(bool check_domain = true) const {
        if (X.rows() < 1 || X.cols() < 1) {
            throw InputError("dataset must contain at least one point of dimension >= 1");
        }
        if (y.size() != X.rows()) {
            throw InputError("dataset has " + std::to_string(X.rows()) + " inputs but " +
                             std::to_string(y.size()) + " outputs");
        }
        if (!(M > 0.0) || !std::isfinite(M)) {
            throw InputError("output bound M must be positive");
        }
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            if (!std::isfinite(y[i]) || std::abs(y[i]) > M) {
                throw InputError("output y_" + std::to_string(i) + " = " + std::to_string(y[i]) +
                                 " violates |y| <= M = " + std::to_string(M));
            }
        }
        if (!X.allFinite()) {
            throw InputError("dataset inputs must be finite");
        }
        if (check_domain && (X.minCoeff() < 0.0 || X.maxCoeff() > 1.0)) {
            throw InputError("dataset inputs must lie in [0,1]^d");
        }
    }
};

/// f = sum_i a_i G_sigma(c_i, .)
struct CoefficientModel {
    KernelParams params;
    Points centers;
    Vector coeffs;

    CoefficientModel(KernelParams p, Points c, Vector a)
        : params(p), centers(std::move(c)), coeffs(std::move(a)) {
        if (centers.rows() != coeffs.size()) {
            throw InputError("model has " + std::to_string(centers.rows()) + " centers but " +
                             std::to_string(coeffs.size()) + " coefficients");
        }
    }

    std::size_t dim() const noexcept { return static_cast<std::size_t>(centers.cols()); }
};

namespace detail {

template <class A, class B>
double squared_distance(const A& x, const B& x2) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double diff = x[k] - x2[k];
        s += diff * diff;
    }
    return s;
}

inline void require_same_dim(Eigen::Index a, Eigen::Index b) {
    if (a != b) {
        throw InputError("dimension mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
    }
}

} // namespace detail

/// exp(-|x - x2|^2 / sigma^2)
template <class A, class B>
double eval_kernel(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& x2, const KernelParams& params) {
    detail::require_same_dim(x.size(), x2.size());
    return std::exp(-detail::squared_distance(x.derived(), x2.derived()) / (params.sigma * params.sigma));
}

inline Matrix gram_matrix(const Points& X, const KernelParams& params) {
    const Eigen::Index m = X.rows();
    if (m < 1) {
        throw InputError("gram_matrix needs at least one point");
    }
    const double inv_s2 = 1.0 / (params.sigma * params.sigma);
    Matrix G(m, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        G(j, j) = 1.0;
        for (Eigen::Index i = j + 1; i < m; ++i) {
            const double v = std::exp(-detail::squared_distance(X.row(i), X.row(j)) * inv_s2);
            G(i, j) = v;
            G(j, i) = v;
        }
    }
    return G;
}

/// Cross-kernel matrix K(i, j) = G_sigma(A_i, B_j).
inline Matrix cross_kernel(const Points& A, const Points& B, const KernelParams& params) {
    detail::require_same_dim(A.cols(), B.cols());
    const double inv_s2 = 1.0 / (params.sigma * params.sigma);
    Matrix K(A.rows(), B.rows());
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
        for (Eigen::Index i = 0; i < A.rows(); ++i) {
            K(i, j) = std::exp(-detail::squared_distance(A.row(i), B.row(j)) * inv_s2);
        }
    }
    return K;
}

template <class P>
double predict(const CoefficientModel& model, const Eigen::MatrixBase<P>& x) {
    detail::require_same_dim(x.size(), model.centers.cols());
    const double inv_s2 = 1.0 / (model.params.sigma * model.params.sigma);
    double f = 0.0;
    for (Eigen::Index i = 0; i < model.coeffs.size(); ++i) {
        if (model.coeffs[i] == 0.0) {
            continue;
        }
        f += model.coeffs[i] * std::exp(-detail::squared_distance(model.centers.row(i), x.derived()) * inv_s2);
    }
    return f;
}

/// Predictions at every row of X.
inline Vector predict_all(const CoefficientModel& model, const Points& X) {
    detail::require_same_dim(X.cols(), model.centers.cols());
    return cross_kernel(X, model.centers, model.params) * model.coeffs;
}

/// pi_M(t) = min(M, |t|) sgn(t)
inline double clip(double t, double M) {
    if (!(M > 0.0)) {
        throw ConfigError("clip bound M must be positive");
    }
    if (t > M) {
        return M;
    }
    if (t < -M) {
        return -M;
    }
    return t;
}

/// (1/m) sum (y_i - f(x_i))^2, optionally with f replaced by pi_M f.
inline double empirical_risk(const CoefficientModel& model, const Dataset& data, bool clipped) {
    if (data.size() == 0) {
        throw InputError("empirical risk of an empty dataset");
    }
    detail::require_same_dim(data.X.cols(), model.centers.cols());
    const Vector f = predict_all(model, data.X);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
        const double fi = clipped ? clip(f[i], data.M) : f[i];
        const double r = data.y[i] - fi;
        sum += r * r;
    }
    return sum / static_cast<double>(data.size());
}

} // namespace lqreg
