// Build the Y-shape dataset, roll out one episode from an off-curve start and
// print a coarse flow field.

#include <cstdio>

#include "gpi/gpi.hpp"

int main() {
    const auto ds = gpi::generate_y_shape();
    gpi::MetricConfig metric;
    gpi::PolicyConfig policy;
    policy.mode = gpi::AttractionMode::polyline;

    const auto env = gpi::point_mass_for(ds, 0.1);
    const gpi::Vec x0{0.637, 0.28};
    const auto tr = gpi::run_episode(env, ds, metric, policy, x0, 2000, 0.01);
    std::printf("start d=%.4f  final d=%.6f  success=%d after %zu steps\n", tr.d_min.front(), tr.d_min.back(),
                tr.success ? 1 : 0, tr.steps_to_success.value_or(0));

    gpi::GridSpec grid;
    grid.resolution = 6;
    for (const auto& s : gpi::field_grid(ds, metric, policy, grid))
        std::printf("(%.2f, %.2f)  d=%.3f  flow=(%+.3f, %+.3f)\n", s.gx, s.gy, s.d_min, s.flow_x, s.flow_y);
}
