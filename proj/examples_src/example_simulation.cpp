// Small Monte Carlo study: repeatedly sample partly interval-censored data
// from a known model, refit with automatic smoothing, and report bias,
// coverage, and baseline-hazard recovery.
#include <cstdio>

#include <survmpl/survmpl.hpp>

int main(int argc, char** argv) {
    using namespace survmpl;

    const int reps = argc > 1 ? std::atoi(argv[1]) : 50;
    const ScenarioConfig cfg = scenario(1, 0.0); // h0(t) = t, beta = 2, no exact events
    FitSpec spec;                                // cubic M-splines, auto smoothing
    spec.n_interior = 5;

    std::printf("scenario 1, n = 200, %d replications...\n", reps);
    const SimSummary s = run_replications(cfg, 200, reps, spec, 42, 1);

    std::printf("usable fits: %d/%d\n\n", s.n_usable, s.n_requested);
    for (const auto& b : s.beta)
        std::printf("beta (true %.2f): bias %+.4f, MC sd %.4f, mean SE %.4f, coverage %.3f\n",
                    b.beta_true, b.bias, b.sd, b.mean_se, b.coverage);

    std::printf("\nbaseline hazard at the true quartiles of the event time:\n");
    for (const auto& h : s.hazard)
        std::printf("  t = %.3f: true %.3f, bias %+.4f, coverage %.3f\n", h.t, h.h0_true, h.bias,
                    h.coverage);

    std::printf("\nintegrated |h0_hat - h0| on [0, t90]: mean %.4f (sd %.4f)\n", s.D_mean, s.D_sd);
    std::printf("smoothing: %.1f iterations on average, %.0f%% within 20\n",
                s.mean_smooth_iterations, 100.0 * s.frac_smooth_le_20);
    return 0;
}
