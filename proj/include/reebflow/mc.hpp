#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "reebflow/common.hpp"
#include "reebflow/parallel.hpp"
#include "reebflow/reeb.hpp"
#include "reebflow/rng.hpp"
#include "reebflow/stats.hpp"

namespace reebflow {

/// Uniform samples from the thin shell {|H - z0| < half_width} restricted to
/// the level component of one edge. By the coarea formula this realizes the
/// 1/|grad H| surface density as half_width -> 0, i.e. the invariant level
/// density used by all averaging.
class ShellSampler {
public:
    ShellSampler(const ReebGraph& graph, int edge, double z0, double half_width)
        : g_(graph), edge_(edge), z0_(z0), hw_(half_width) {}

    /// Draws one point; throws EmptyShell when acceptance stalls.
    Vec draw(Rng& rng, long long max_tries = 2000000) const {
        const Box& box = g_.field->box();
        Vec x(box.dim());
        for (long long k = 0; k < max_tries; ++k) {
            for (int i = 0; i < box.dim(); ++i) x[i] = rng.uniform(box.lo[i], box.hi[i]);
            double z = g_.field->value(x);
            if (std::fabs(z - z0_) >= hw_) continue;
            if (g_.index->edge_at(x, z) != edge_) continue;
            return x;
        }
        throw EmptyShell("no acceptance in shell z0=" + fmt_g17(z0_) + " width=" + fmt_g17(hw_) +
                         " edge=" + fmt_int(edge_));
    }

    const ReebGraph& g_;
    int edge_;
    double z0_;
    double hw_;
};

struct MeanResult {
    double mean = 0.0;
    double se = 0.0;
    long long n = 0;
};

/// Level average of f over the component (edge, z0) by thin-shell Monte
/// Carlo, chunked for thread-count-independent results.
inline MeanResult shell_average(const ReebGraph& g, int edge, double z0, double half_width,
                                const std::function<double(const Vec&)>& f, long long n_samples,
                                std::uint64_t seed, int threads = 0, int chunks = 32) {
    std::vector<RunningStat> stats(chunks);
    long long per = std::max<long long>(1, n_samples / chunks);
    parallel_for(chunks, threads, [&](long long c) {
        Rng rng(seed, "shell", static_cast<std::uint64_t>(edge) * 131 + c);
        ShellSampler sampler(g, edge, z0, half_width);
        for (long long i = 0; i < per; ++i) stats[c].add(f(sampler.draw(rng)));
    });
    RunningStat all;
    for (const auto& s : stats) {
        all.n += s.n;
        all.sum += s.sum;
        all.sumsq += s.sumsq;
    }
    return {all.mean(), all.stderr_mean(), all.n};
}

}  // namespace reebflow
