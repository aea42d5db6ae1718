#include "ddl/runtime/grace.hpp"

#include <algorithm>

#include "ddl/errors.hpp"

namespace ddl::runtime {

double grace_window(const GraceConfig& grace, double xi_step_s, double xi_quorum_s,
                    double xi_sync_s, int tau) {
    if (tau < 1) throw ConfigError("grace window needs tau >= 1");
    if (!(grace.gamma > 0.0 && grace.gamma < 1.0))
        throw ConfigError("grace gamma must satisfy 0 < gamma < 1");
    double slack = static_cast<double>(tau) * xi_step_s - (xi_quorum_s + xi_sync_s);
    double cap = grace.cap_s > 0.0 ? grace.cap_s : xi_step_s;
    return std::min(grace.gamma * std::max(slack, 0.0), cap);
}

double ema_update(double previous, double observed, double decay, bool initialized) {
    if (!initialized) return observed;
    return decay * observed + (1.0 - decay) * previous;
}

}  // namespace ddl::runtime
