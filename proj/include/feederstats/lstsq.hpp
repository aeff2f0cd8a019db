#pragma once

#include "feederstats/error.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

namespace feederstats {

enum class RankPolicy {
    Error,        // rank-deficient design -> SingularFit naming the dependent columns
    MinimumNorm,  // minimum-norm least-squares solution
};

/// Least-squares solution B of X B ~= Y (one column of B per column of Y)
/// through column-pivoted Householder QR on the column-equilibrated design.
/// Columns whose pivot falls below 1e-10 of the largest pivot are treated as
/// linearly dependent.
inline Eigen::MatrixXd solve_least_squares(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                                           const std::vector<std::string>& column_names,
                                           RankPolicy policy = RankPolicy::Error) {
    if (X.rows() != Y.rows()) throw ContractError("solve_least_squares: row count mismatch");
    if (X.rows() < X.cols())
        throw SingularFit("underdetermined regression: " + std::to_string(X.rows()) + " rows for " +
                          std::to_string(X.cols()) + " columns");

    Eigen::VectorXd scale = X.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < scale.size(); ++j)
        if (scale(j) == 0.0) scale(j) = 1.0;  // all-zero column; QR reports it as dependent
    const Eigen::MatrixXd Xs = X * scale.cwiseInverse().asDiagonal();

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xs);
    qr.setThreshold(1e-10);
    if (qr.rank() < Xs.cols()) {
        if (policy == RankPolicy::MinimumNorm) {
            Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Xs);
            cod.setThreshold(1e-10);
            return scale.cwiseInverse().asDiagonal() * cod.solve(Y);
        }
        std::string names;
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index j = qr.rank(); j < Xs.cols(); ++j) {
            const auto c = static_cast<std::size_t>(perm(j));
            if (!names.empty()) names += ", ";
            names += c < column_names.size() ? column_names[c] : "col" + std::to_string(c);
        }
        throw SingularFit("rank-deficient regressors (rank " + std::to_string(qr.rank()) + " of " +
                          std::to_string(Xs.cols()) + "); collinear columns: " + names);
    }
    return scale.cwiseInverse().asDiagonal() * qr.solve(Y);
}

}  // namespace feederstats
