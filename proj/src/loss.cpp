#include "cisir/loss.hpp"

#include <algorithm>
#include <cmath>

#include "cisir/common.hpp"

namespace cisir {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what)
{
    if (a != b) {
        throw ConfigError(std::string(what) + ": length mismatch");
    }
}

struct CorrelationMoments {
    double weight_sum = 0.0;
    double mean_y = 0.0;
    double mean_p = 0.0;
    double s_ab = 0.0;     // sum w (y - my)(p - mp)
    double s_aa = 0.0;     // sum w (y - my)^2
    double s_bb = 0.0;     // sum w (p - mp)^2
    double sum_wa = 0.0;   // sum w (y - my), zero for weighted means
    double sum_wb = 0.0;   // sum w (p - mp)
    double sd_y = 0.0;
    double sd_p = 0.0;
};

CorrelationMoments correlation_moments(std::span<const double> y,
                                       std::span<const double> p,
                                       std::span<const double> w,
                                       bool weighted_means)
{
    CorrelationMoments m;
    const std::size_t n = y.size();
    CompensatedSum sw, swy, swp;
    for (std::size_t i = 0; i < n; ++i) {
        sw.add(w[i]);
        swy.add(w[i] * y[i]);
        swp.add(w[i] * p[i]);
    }
    m.weight_sum = sw.value();
    if (weighted_means) {
        m.mean_y = swy.value() / m.weight_sum;
        m.mean_p = swp.value() / m.weight_sum;
    } else {
        m.mean_y = compensated_sum(y) / static_cast<double>(n);
        m.mean_p = compensated_sum(p) / static_cast<double>(n);
    }
    CompensatedSum ab, aa, bb, wa, wb;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = y[i] - m.mean_y;
        const double b = p[i] - m.mean_p;
        ab.add(w[i] * a * b);
        aa.add(w[i] * a * a);
        bb.add(w[i] * b * b);
        wa.add(w[i] * a);
        wb.add(w[i] * b);
    }
    m.s_ab = ab.value();
    m.s_aa = aa.value();
    m.s_bb = bb.value();
    m.sum_wa = wa.value();
    m.sum_wb = wb.value();
    m.sd_y = std::sqrt(std::max(m.s_aa, 0.0) / m.weight_sum);
    m.sd_p = std::sqrt(std::max(m.s_bb, 0.0) / m.weight_sum);
    return m;
}

void check_pcc_inputs(std::span<const double> y, std::span<const double> p, std::span<const double> w)
{
    require_same_length(y.size(), p.size(), "wpcc_loss");
    require_same_length(y.size(), w.size(), "wpcc_loss");
    if (y.size() < 2) {
        throw ConfigError("wpcc_loss: need at least 2 instances");
    }
}

bool guarded(const CorrelationMoments& m, double sd_epsilon)
{
    return m.sd_p < sd_epsilon || m.sd_y < sd_epsilon;
}

} // namespace

void LossParams::validate() const
{
    require(std::isfinite(lambda) && lambda >= 0.0, "loss: lambda must be finite and non-negative");
    require(sd_epsilon > 0.0, "loss: sd_epsilon must be positive");
}

void LossConfig::validate() const
{
    params.validate();
    require(re.size() == rc.size(), "loss: re and rc must have the same length");
}

double wmse(std::span<const double> y, std::span<const double> yhat, std::span<const double> re)
{
    require_same_length(y.size(), yhat.size(), "wmse");
    require_same_length(y.size(), re.size(), "wmse");
    if (y.empty()) {
        throw ConfigError("wmse: empty input");
    }
    CompensatedSum s;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double e = y[i] - yhat[i];
        s.add(re[i] * e * e);
    }
    return s.value();
}

double wpcc_loss(std::span<const double> y,
                 std::span<const double> yhat,
                 std::span<const double> rc,
                 double sd_epsilon,
                 bool weighted_means)
{
    check_pcc_inputs(y, yhat, rc);
    const auto m = correlation_moments(y, yhat, rc, weighted_means);
    if (guarded(m, sd_epsilon)) {
        return 1.0;
    }
    const double r = std::clamp(m.s_ab / std::sqrt(m.s_aa * m.s_bb), -1.0, 1.0);
    return 1.0 - r;
}

MseDecomposition mse_decomposition(std::span<const double> y, std::span<const double> yhat)
{
    require_same_length(y.size(), yhat.size(), "mse_decomposition");
    if (y.size() < 2) {
        throw ConfigError("mse_decomposition: need at least 2 instances");
    }
    const double n = static_cast<double>(y.size());
    const double my = compensated_sum(y) / n;
    const double mp = compensated_sum(yhat) / n;
    CompensatedSum vy, vp, cv;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double a = y[i] - my;
        const double b = yhat[i] - mp;
        vy.add(a * a);
        vp.add(b * b);
        cv.add(a * b);
    }
    const double sd_y = std::sqrt(vy.value() / n);
    const double sd_p = std::sqrt(vp.value() / n);
    const double cov = cv.value() / n;
    MseDecomposition d;
    d.mean_term = (my - mp) * (my - mp);
    d.sd_term = (sd_p - sd_y) * (sd_p - sd_y);
    if (sd_y > 0.0 && sd_p > 0.0) {
        const double pcc = cov / (sd_p * sd_y);
        d.corr_term = 2.0 * sd_p * sd_y * (1.0 - pcc);
    }
    return d;
}

LossBreakdown combined_loss(std::span<const double> y,
                            std::span<const double> yhat,
                            std::span<const double> re,
                            std::span<const double> rc,
                            const LossParams& params)
{
    params.validate();
    LossBreakdown out;
    out.wmse = wmse(y, yhat, re);
    out.wpcc_loss = wpcc_loss(y, yhat, rc, params.sd_epsilon, params.weighted_means);
    out.total = params.lambda == 0.0 ? out.wmse : out.wmse + params.lambda * out.wpcc_loss;
    out.decomposition = mse_decomposition(y, yhat);
    return out;
}

LossBreakdown combined_loss(std::span<const double> y, std::span<const double> yhat, const LossConfig& config)
{
    config.validate();
    return combined_loss(y, yhat, config.re.values(), config.rc.values(), config.params);
}

std::vector<double> loss_gradient(std::span<const double> y,
                                  std::span<const double> yhat,
                                  std::span<const double> re,
                                  std::span<const double> rc,
                                  const LossParams& params)
{
    params.validate();
    require_same_length(y.size(), yhat.size(), "loss_gradient");
    require_same_length(y.size(), re.size(), "loss_gradient");
    const std::size_t n = y.size();
    std::vector<double> grad(n);
    for (std::size_t i = 0; i < n; ++i) {
        grad[i] = 2.0 * re[i] * (yhat[i] - y[i]);
    }
    if (params.lambda == 0.0) {
        return grad;
    }
    check_pcc_inputs(y, yhat, rc);
    const auto m = correlation_moments(y, yhat, rc, params.weighted_means);
    const double lambda = params.lambda;
    if (guarded(m, params.sd_epsilon)) {
        if (m.sd_y < params.sd_epsilon) {
            return grad; // nothing to correlate with
        }
        // Outward subgradient: descending it moves yhat along (y - mean y).
        const double scale = lambda / std::sqrt(m.weight_sum * m.s_aa);
        for (std::size_t i = 0; i < n; ++i) {
            grad[i] -= scale * rc[i] * (y[i] - m.mean_y);
        }
        return grad;
    }
    const double norm = std::sqrt(m.s_aa * m.s_bb);
    const double r = m.s_ab / norm;
    for (std::size_t i = 0; i < n; ++i) {
        const double dmean = params.weighted_means ? rc[i] / m.weight_sum : 1.0 / static_cast<double>(n);
        const double a = y[i] - m.mean_y;
        const double b = yhat[i] - m.mean_p;
        const double d_sab = rc[i] * a - dmean * m.sum_wa;
        const double d_sbb = 2.0 * (rc[i] * b - dmean * m.sum_wb);
        const double d_r = d_sab / norm - r * d_sbb / (2.0 * m.s_bb);
        grad[i] -= lambda * d_r;
    }
    return grad;
}

std::vector<double> loss_gradient(std::span<const double> y, std::span<const double> yhat, const LossConfig& config)
{
    config.validate();
    return loss_gradient(y, yhat, config.re.values(), config.rc.values(), config.params);
}

} // namespace cisir
