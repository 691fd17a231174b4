#pragma once

#include <string>
#include <vector>

namespace cfdiff {

enum class ScheduleKind { LinearBeta, Cosine };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

/// Cumulative signal coefficients and the sampling ladder.
///
/// alpha_bar[t] is the signal level after t base steps; alpha_bar[0] == 1 is
/// clean data. `timesteps` holds the base indices the sampler visits, in
/// increasing order, always starting at 0.
struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::LinearBeta;
    int base_steps = 0;
    std::vector<double> alpha_bar;
    std::vector<int> timesteps;
    double ddim_eta = 0.0;
    int respace_factor = 1;

    std::size_t ladder_size() const { return timesteps.size(); }
    double alpha_bar_at(std::size_t position) const { return alpha_bar.at(timesteps.at(position)); }

    /// DDIM noise scale for the transition alpha_bar_t -> alpha_bar_prev.
    /// Zero whenever ddim_eta == 0.
    double sigma(double alpha_bar_t, double alpha_bar_prev) const;
};

/// Linear-beta uses beta in [1e-4, 0.02]; cosine uses offset 0.008 with
/// per-step beta clipped at 0.999. The initial ladder is 0..base_steps-1.
NoiseSchedule make_schedule(ScheduleKind kind, int base_steps, double ddim_eta = 0.0);

/// Keeps every `factor`-th entry of the current ladder (always including 0).
NoiseSchedule respace(const NoiseSchedule& schedule, int factor);

}  // namespace cfdiff
