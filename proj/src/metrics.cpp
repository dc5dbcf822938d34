#include "mortsmooth/metrics.hpp"

#include <cmath>

#include <fmt/format.h>

#include "mortsmooth/errors.hpp"

namespace mortsmooth {

namespace {

struct Accumulator {
    double rel = 0.0;
    double abs_rel = 0.0;
    double sq = 0.0;
    int n = 0;

    void add(int age, double truth, double estimate) {
        if (truth == 0.0) {
            throw DegenerateDenominator(fmt::format("true log-rate at age {} is exactly 0", age));
        }
        const double err = truth - estimate;
        rel += err / truth;
        abs_rel += std::fabs(err / truth);
        sq += err * err;
        ++n;
    }

    MetricsRow row() const {
        MetricsRow r;
        r.n_ages_used = n;
        if (n == 0) return r;
        r.rbias = rel / n;
        r.rmse = std::sqrt(sq / n);
        r.mape = abs_rel / n;
        return r;
    }
};

}  // namespace

MetricsRow evaluate(const Eigen::VectorXd& true_log_rates, const Eigen::VectorXd& estimated_log_rates) {
    if (true_log_rates.size() != estimated_log_rates.size()) {
        throw InvalidArgument(fmt::format("metrics: {} true ages vs {} estimated", true_log_rates.size(),
                                          estimated_log_rates.size()));
    }
    Accumulator acc;
    for (Eigen::Index x = 0; x < true_log_rates.size(); ++x) {
        acc.add(static_cast<int>(x), true_log_rates(x), estimated_log_rates(x));
    }
    return acc.row();
}

MetricsRow evaluate_observed(const std::vector<std::optional<double>>& observed_log_rates,
                             const Eigen::VectorXd& estimated_log_rates) {
    if (static_cast<Eigen::Index>(observed_log_rates.size()) != estimated_log_rates.size()) {
        throw InvalidArgument("metrics: observed and estimated schedules differ in length");
    }
    Accumulator acc;
    for (std::size_t x = 0; x < observed_log_rates.size(); ++x) {
        if (observed_log_rates[x]) {
            acc.add(static_cast<int>(x), *observed_log_rates[x], estimated_log_rates(static_cast<Eigen::Index>(x)));
        }
    }
    return acc.row();
}

}  // namespace mortsmooth
