#include "ldreg/matching.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ldreg {

MatchResult ssd(const ImageVolume& deformed, const ImageVolume& target) {
    if (!(deformed.grid == target.grid))
        throw std::invalid_argument("ssd: images on mismatched grids");
    const double vol = deformed.grid.voxel_volume();
    MatchResult r;
    r.gradient_image = ImageVolume(deformed.grid);
    double acc = 0.0;
    for (std::size_t v = 0; v < deformed.data.size(); ++v) {
        double d = deformed.data[v] - target.data[v];
        acc += d * d;
        r.gradient_image.data[v] = 2.0 * d;
    }
    r.value = acc * vol;
    return r;
}

double bspline3(double t) {
    t = std::abs(t);
    if (t >= 2.0) return 0.0;
    if (t >= 1.0) {
        double u = 2.0 - t;
        return u * u * u / 6.0;
    }
    return 2.0 / 3.0 - t * t + 0.5 * t * t * t;
}

double bspline3_derivative(double t) {
    double s = t < 0.0 ? -1.0 : 1.0;
    t = std::abs(t);
    if (t >= 2.0) return 0.0;
    if (t >= 1.0) {
        double u = 2.0 - t;
        return s * (-0.5 * u * u);
    }
    return s * (-2.0 * t + 1.5 * t * t);
}

namespace {

struct Binning {
    double origin;  // intensity of the lower edge of bin 0 (after padding)
    double width;
};

// Pad the raw range by one bin width on each side, then split into `bins`.
Binning make_binning(const AxisRange& raw, int bins) {
    double span = raw.hi - raw.lo;
    double pad = span / bins;
    Binning b;
    b.origin = raw.lo - pad;
    b.width = (span + 2.0 * pad) / bins;
    return b;
}

// Continuous template-axis bin coordinate, clamped so the 4-bin spline window
// stays inside [0, bins-1]. clamped=true means the derivative w.r.t. intensity
// is zero there.
double template_coord(double intensity, const Binning& b, int bins, bool* clamped) {
    double c = (intensity - b.origin) / b.width;
    double lo = 1.0, hi = static_cast<double>(bins - 2);
    *clamped = (c < lo || c > hi);
    return std::clamp(c, lo, hi);
}

int target_bin(double intensity, const Binning& b, int bins) {
    double c = (intensity - b.origin) / b.width;
    int idx = static_cast<int>(std::floor(c));
    if (c == static_cast<double>(idx) && idx > 0) idx -= 1;  // edge values to the lower bin
    return std::clamp(idx, 0, bins - 1);
}

}  // namespace

JointHistogram build_joint_histogram(const ImageVolume& deformed, const ImageVolume& target,
                                     int bins, const std::optional<HistogramRanges>& ranges) {
    if (!(deformed.grid == target.grid))
        throw std::invalid_argument("histogram: images on mismatched grids");
    if (bins < 4) throw std::invalid_argument("histogram: need at least 4 bins");

    HistogramRanges rng;
    if (ranges) {
        rng = *ranges;
    } else {
        rng.template_axis = {deformed.min_value(), deformed.max_value()};
        rng.target_axis = {target.min_value(), target.max_value()};
    }

    JointHistogram h;
    h.bins = bins;
    h.joint.assign(static_cast<std::size_t>(bins) * bins, 0.0);
    h.p_template.assign(bins, 0.0);
    h.p_target.assign(bins, 0.0);

    if (!(rng.template_axis.hi > rng.template_axis.lo) ||
        !(rng.target_axis.hi > rng.target_axis.lo)) {
        h.degenerate = true;
        return h;
    }

    Binning bt = make_binning(rng.template_axis, bins);
    Binning bj = make_binning(rng.target_axis, bins);
    h.template_origin = bt.origin;
    h.template_width = bt.width;
    h.target_origin = bj.origin;
    h.target_width = bj.width;

    const std::size_t n = deformed.data.size();
    const double mass = 1.0 / static_cast<double>(n);
    for (std::size_t v = 0; v < n; ++v) {
        bool clamped;
        double c = template_coord(deformed.data[v], bt, bins, &clamped);
        int xi = target_bin(target.data[v], bj, bins);
        int k0 = std::clamp(static_cast<int>(std::floor(c)), 1, bins - 3);
        for (int eta = k0 - 1; eta <= k0 + 2; ++eta)
            h.at(eta, xi) += mass * bspline3(c - eta);
    }
    for (int eta = 0; eta < bins; ++eta)
        for (int xi = 0; xi < bins; ++xi) {
            h.p_template[eta] += h.at(eta, xi);
            h.p_target[xi] += h.at(eta, xi);
        }
    return h;
}

MatchResult mutual_information(const ImageVolume& deformed, const ImageVolume& target, int bins,
                               const std::optional<HistogramRanges>& ranges) {
    JointHistogram h = build_joint_histogram(deformed, target, bins, ranges);
    MatchResult r;
    r.gradient_image = ImageVolume(deformed.grid);
    if (h.degenerate) return r;  // independence by definition: value 0, gradient 0

    double mi = 0.0;
    for (int eta = 0; eta < bins; ++eta)
        for (int xi = 0; xi < bins; ++xi) {
            double p = h.at(eta, xi);
            if (p > 0.0) mi += p * std::log(p / (h.p_template[eta] * h.p_target[xi]));
        }
    r.value = -mi;

    // dM/dI(x) through the spline window; expressed as an L2 density.
    const std::size_t n = deformed.data.size();
    const double scale = 1.0 / (static_cast<double>(n) * h.template_width *
                                deformed.grid.voxel_volume());
    Binning bt{h.template_origin, h.template_width};
    Binning bj{h.target_origin, h.target_width};
    for (std::size_t v = 0; v < n; ++v) {
        bool clamped;
        double c = template_coord(deformed.data[v], bt, bins, &clamped);
        if (clamped) continue;
        int xi = target_bin(target.data[v], bj, bins);
        int k0 = std::clamp(static_cast<int>(std::floor(c)), 1, bins - 3);
        double acc = 0.0;
        for (int eta = k0 - 1; eta <= k0 + 2; ++eta) {
            double p = h.at(eta, xi);
            if (p > 0.0)
                acc += bspline3_derivative(c - eta) * std::log(p / h.p_template[eta]);
        }
        r.gradient_image.data[v] = -scale * acc;
    }
    return r;
}

ImageVolume binarize(const ImageVolume& img, double threshold) {
    if (!std::isfinite(threshold)) throw std::invalid_argument("binarize: non-finite threshold");
    ImageVolume out(img.grid);
    for (std::size_t v = 0; v < img.data.size(); ++v)
        out.data[v] = img.data[v] >= threshold ? 1.0 : 0.0;
    return out;
}

MatchResult Matcher::evaluate(const ImageVolume& deformed, const ImageVolume& target) {
    if (cfg_.kind == MatcherKind::kSsd) return ssd(deformed, target);
    if (!frozen_) freeze_ranges(deformed, target);
    return mutual_information(deformed, target, cfg_.bins, frozen_);
}

void Matcher::freeze_ranges(const ImageVolume& deformed, const ImageVolume& target) {
    frozen_ = HistogramRanges{{deformed.min_value(), deformed.max_value()},
                              {target.min_value(), target.max_value()}};
}

}  // namespace ldreg
