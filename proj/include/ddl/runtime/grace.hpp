#pragma once

namespace ddl::runtime {

struct GraceConfig {
    bool enabled = true;
    double gamma = 0.8;      // safety margin, 0 < gamma < 1
    double ema_decay = 0.2;  // weight of a new observation in the EMAs
    double cap_s = -1.0;     // max grace; <= 0 means one step (the EMA of it)
};

/// Extra wait after quorum, funded by the overlap slack:
/// slack = tau * xi_step - (xi_quorum + xi_sync), grace = min(gamma *
/// max(slack, 0), cap). All durations in seconds.
double grace_window(const GraceConfig& grace, double xi_step_s, double xi_quorum_s,
                    double xi_sync_s, int tau);

/// EMA update helper: decay * observed + (1 - decay) * previous.
double ema_update(double previous, double observed, double decay, bool initialized);

}  // namespace ddl::runtime
