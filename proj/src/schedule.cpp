#include "cfdiff/schedule.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cfdiff {

std::string to_string(ScheduleKind kind) {
    return kind == ScheduleKind::LinearBeta ? "linear-beta" : "cosine";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
    if (name == "linear-beta") return ScheduleKind::LinearBeta;
    if (name == "cosine") return ScheduleKind::Cosine;
    throw std::invalid_argument("unknown schedule kind '" + name + "'");
}

double NoiseSchedule::sigma(double alpha_bar_t, double alpha_bar_prev) const {
    if (ddim_eta == 0.0) return 0.0;
    const double ratio = (1.0 - alpha_bar_prev) / (1.0 - alpha_bar_t);
    const double step = 1.0 - alpha_bar_t / alpha_bar_prev;
    return ddim_eta * std::sqrt(std::max(0.0, ratio * step));
}

NoiseSchedule make_schedule(ScheduleKind kind, int base_steps, double ddim_eta) {
    if (base_steps < 2) throw std::invalid_argument("make_schedule: base_steps must be >= 2");
    if (!(ddim_eta >= 0.0 && ddim_eta <= 1.0)) throw std::invalid_argument("make_schedule: ddim_eta must lie in [0,1]");

    NoiseSchedule s;
    s.kind = kind;
    s.base_steps = base_steps;
    s.ddim_eta = ddim_eta;
    s.alpha_bar.resize(static_cast<std::size_t>(base_steps) + 1);
    s.alpha_bar[0] = 1.0;

    const double T = base_steps;
    if (kind == ScheduleKind::LinearBeta) {
        constexpr double beta_lo = 1e-4;
        constexpr double beta_hi = 0.02;
        for (int t = 1; t <= base_steps; ++t) {
            const double beta = beta_lo + (beta_hi - beta_lo) * (t - 1) / (T - 1);
            s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - beta);
        }
    } else {
        constexpr double offset = 0.008;
        auto f = [&](double t) {
            const double c = std::cos((t / T + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
            return c * c;
        };
        for (int t = 1; t <= base_steps; ++t) {
            const double beta = std::min(1.0 - f(t) / f(t - 1), 0.999);
            s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - beta);
        }
    }

    s.timesteps.resize(static_cast<std::size_t>(base_steps));
    for (int t = 0; t < base_steps; ++t) s.timesteps[t] = t;
    return s;
}

NoiseSchedule respace(const NoiseSchedule& schedule, int factor) {
    if (factor < 1 || factor > schedule.base_steps) {
        throw std::invalid_argument("respace: factor must lie in [1, base_steps]");
    }
    NoiseSchedule out = schedule;
    out.timesteps.clear();
    for (std::size_t i = 0; i < schedule.timesteps.size(); i += static_cast<std::size_t>(factor)) {
        out.timesteps.push_back(schedule.timesteps[i]);
    }
    out.respace_factor = schedule.respace_factor * factor;
    return out;
}

}  // namespace cfdiff
