#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace reebflow {

// Dense vectors/matrices with stack storage; state dimension is capped so the
// integrator hot loops never allocate.
constexpr int kMaxDim = 8;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

/// Axis-aligned box in R^d.
struct Box {
    Vec lo, hi;

    int dim() const { return static_cast<int>(lo.size()); }

    double volume() const {
        double v = 1.0;
        for (int i = 0; i < dim(); ++i) v *= hi[i] - lo[i];
        return v;
    }

    bool contains(const Vec& x, double margin = 0.0) const {
        for (int i = 0; i < dim(); ++i)
            if (x[i] < lo[i] - margin || x[i] > hi[i] + margin) return false;
        return true;
    }
};

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define REEBFLOW_ERROR(Name)                                       \
    struct Name : Error {                                          \
        explicit Name(const std::string& w) : Error(#Name ": " + w) {} \
    }

REEBFLOW_ERROR(DegenerateCritical);
REEBFLOW_ERROR(OddDimension);
REEBFLOW_ERROR(NotATree);
REEBFLOW_ERROR(VertexCountMismatch);
REEBFLOW_ERROR(UnsupportedKinetic);
REEBFLOW_ERROR(PDimTooSmall);
REEBFLOW_ERROR(DegenerateDiffusion);
REEBFLOW_ERROR(EmptyDomain);
REEBFLOW_ERROR(ExtrapolationUnstable);
REEBFLOW_ERROR(AssumptionA6Violated);
REEBFLOW_ERROR(AssumptionA8Violated);
REEBFLOW_ERROR(AmbiguousSign);
REEBFLOW_ERROR(CycleDetected);
REEBFLOW_ERROR(StepTooLarge);
REEBFLOW_ERROR(BoxExit);
REEBFLOW_ERROR(LevelDrift);
REEBFLOW_ERROR(CoefficientGap);
REEBFLOW_ERROR(ClockStall);
REEBFLOW_ERROR(SolverSingular);
REEBFLOW_ERROR(StuckAtZero);
REEBFLOW_ERROR(EmptyShell);
REEBFLOW_ERROR(ConfigInvalid);

#undef REEBFLOW_ERROR

/// Round-trip-exact double formatting, used by every CSV/JSON writer so that
/// reruns with equal seeds produce byte-identical files.
inline std::string fmt_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string fmt_int(long long x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld", x);
    return buf;
}

}  // namespace reebflow
