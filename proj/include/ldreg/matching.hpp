#pragma once

#include <optional>
#include <vector>

#include "ldreg/grid.hpp"

namespace ldreg {

/// Intensity-axis binning: [lo, hi] is the raw intensity range, padded by one
/// bin width on each side before bin edges are laid out.
struct AxisRange {
    double lo = 0.0;
    double hi = 0.0;
};

struct HistogramRanges {
    AxisRange template_axis;
    AxisRange target_axis;
};

/// Parzen joint histogram: cubic B-spline window on the template axis, zero
/// order (nearest bin, edge values to the lower bin) on the target axis.
struct JointHistogram {
    int bins = 0;
    bool degenerate = false;          // constant template or target
    std::vector<double> joint;        // bins*bins, template axis slowest
    std::vector<double> p_template;   // marginal over target axis
    std::vector<double> p_target;     // marginal over template axis
    double template_origin = 0.0, template_width = 1.0;
    double target_origin = 0.0, target_width = 1.0;

    double& at(int eta, int xi) { return joint[static_cast<std::size_t>(eta) * bins + xi]; }
    double at(int eta, int xi) const { return joint[static_cast<std::size_t>(eta) * bins + xi]; }
};

/// Matching value and its Gateaux derivative w.r.t. the deformed template,
/// expressed as an L2 density: dM(dI) = sum_x gradient_image(x) dI(x) * voxvol.
struct MatchResult {
    double value = 0.0;
    ImageVolume gradient_image;
};

/// Volume-weighted sum of squared differences; gradient = 2(I - J).
MatchResult ssd(const ImageVolume& deformed, const ImageVolume& target);

JointHistogram build_joint_histogram(const ImageVolume& deformed, const ImageVolume& target,
                                     int bins,
                                     const std::optional<HistogramRanges>& ranges = std::nullopt);

/// Negative mutual information (Mattes-style) and its derivative through the
/// cubic B-spline window. Degenerate (constant) input: value 0, zero gradient.
MatchResult mutual_information(const ImageVolume& deformed, const ImageVolume& target, int bins,
                               const std::optional<HistogramRanges>& ranges = std::nullopt);

/// 1.0 where value >= threshold else 0.0.
ImageVolume binarize(const ImageVolume& img, double threshold);

/// Cubic B-spline kernel and its derivative (support |t| < 2).
double bspline3(double t);
double bspline3_derivative(double t);

enum class MatcherKind { kSsd, kMi };

struct MatcherConfig {
    MatcherKind kind = MatcherKind::kSsd;
    int bins = 32;
};

///// Stateful matcher wrapper: for MI the histogram ranges are frozen on the
/// first evaluation so the objective stays comparable across iterations.
class Matcher {
public:
    explicit Matcher(const MatcherConfig& cfg) : cfg_(cfg) {}

    MatchResult evaluate(const ImageVolume& deformed, const ImageVolume& target);
    void freeze_ranges(const ImageVolume& deformed, const ImageVolume& target);
    const MatcherConfig& config() const { return cfg_; }

private:
    MatcherConfig cfg_;
    std::optional<HistogramRanges> frozen_;
};

}  // namespace ldreg
