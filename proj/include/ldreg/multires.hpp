#pragma once

#include <string>
#include <vector>

#include "ldreg/lddmm.hpp"

namespace ldreg {

struct ScheduleLevel {
    std::vector<double> spacing;  // physical, per axis; empty = native spacing
    double alpha = 0.01;
    int max_iterations = 200;
};

/// Coarse-to-fine cascade; spacings non-increasing across levels per axis.
/// sigma, gamma, T and the matcher are shared via RegistrationConfig.
struct Schedule {
    std::vector<ScheduleLevel> levels;

    void validate(int ndim) const;
};

/// Grid at the requested spacing covering the native physical extent (spacing
/// re-stretched so the last node lands on the extent; dims never below 2).
ImageGrid grid_for_spacing(const ImageGrid& native, const std::vector<double>& spacing);

/// Per-slice multilinear interpolation onto a finer grid with the same
/// physical extent; values unchanged (velocities are in physical units).
TimeVaryingVelocity upsample_velocity(const TimeVaryingVelocity& v, const ImageGrid& target);

struct MultiresResult {
    RegistrationResult result;           // finest level
    std::vector<IterationRecord> trace;  // concatenated, annotated by level
    std::vector<double> level_seconds;   // wall time per level
};

/// Resample both images per level (anti-aliased), run the deformable
/// registration with the level's alpha, and hand the velocity up the cascade.
MultiresResult run_schedule(const ImageVolume& I0, const ImageVolume& J1,
                            const Schedule& schedule, const RegistrationConfig& cfg);

// Schedule JSON: [{"spacing": [...], "alpha": 0.05, "iterations": 100}, ...];
// "spacing_factor": f is accepted as shorthand for f times the native spacing.
Schedule read_schedule_json(const std::string& text, const ImageGrid& native);

/// Default desk-scale cascade: 8x, 4x, 2x, 1x of native spacing.
Schedule default_schedule(const ImageGrid& native, double alpha, int iterations_per_level);

}  // namespace ldreg
