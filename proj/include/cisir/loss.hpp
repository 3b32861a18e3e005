#pragma once

#include <span>
#include <vector>

#include "cisir/importance.hpp"

namespace cisir {

/// Scalar knobs of the combined objective wMSE + lambda * (1 - wPCC).
struct LossParams {
    double lambda = 0.5;
    /// Below this weighted sd (target units) the correlation is treated as
    /// zero: the regularizer evaluates to 1 and its gradient pushes the
    /// predictions along (y - mean y).
    double sd_epsilon = 1e-8;
    /// Importance-weighted means in the correlation (true) or plain means.
    bool weighted_means = true;

    void validate() const;
};

struct LossConfig {
    LossParams params;
    ImportanceVector re; // wMSE importances
    ImportanceVector rc; // wPCC importances

    void validate() const;
};

struct MseDecomposition {
    double mean_term = 0.0; // (mean y - mean yhat)^2
    double sd_term = 0.0;   // (sd yhat - sd y)^2
    double corr_term = 0.0; // 2 sd(yhat) sd(y) (1 - PCC)

    double sum() const noexcept { return mean_term + sd_term + corr_term; }
};

struct LossBreakdown {
    double wmse = 0.0;
    double wpcc_loss = 0.0;
    double total = 0.0;
    MseDecomposition decomposition;
};

/// sum_i w_i (y_i - yhat_i)^2. Weights need not sum to one (mini-batches
/// pass rescaled global importances).
double wmse(std::span<const double> y, std::span<const double> yhat, std::span<const double> re);

/// 1 - weighted Pearson correlation, in [0, 2]. Invariant to the scale of
/// the weights.
double wpcc_loss(std::span<const double> y,
                 std::span<const double> yhat,
                 std::span<const double> rc,
                 double sd_epsilon = 1e-8,
                 bool weighted_means = true);

/// Unweighted sum of squares split into mean, spread and correlation
/// terms using population moments.
MseDecomposition mse_decomposition(std::span<const double> y, std::span<const double> yhat);

LossBreakdown combined_loss(std::span<const double> y,
                            std::span<const double> yhat,
                            std::span<const double> re,
                            std::span<const double> rc,
                            const LossParams& params);
LossBreakdown combined_loss(std::span<const double> y, std::span<const double> yhat, const LossConfig& config);

/// d total / d yhat_i.
std::vector<double> loss_gradient(std::span<const double> y,
                                  std::span<const double> yhat,
                                  std::span<const double> re,
                                  std::span<const double> rc,
                                  const LossParams& params);
std::vector<double> loss_gradient(std::span<const double> y, std::span<const double> yhat, const LossConfig& config);

} // namespace cisir
