#pragma once

#include <vector>

#include "ldreg/grid.hpp"

namespace ldreg {

/// T uniformly spaced time slices of v over [0,1], dt = 1/(T-1).
struct TimeVaryingVelocity {
    std::vector<VectorField> slices;

    TimeVaryingVelocity() = default;
    TimeVaryingVelocity(const ImageGrid& grid, int time_steps);

    int time_steps() const { return static_cast<int>(slices.size()); }
    double dt() const { return 1.0 / (time_steps() - 1); }
    const ImageGrid& grid() const { return slices.front().grid; }

    void validate() const;  // T >= 2, common grid
};

/// phi_{t_j,0}: semi-Lagrangian backward recursion
///   phi_{t_0,0} = id,  phi_{t_{k+1},0}(x) = phi_{t_k,0}(x - dt * v(t_{k+1}, x)).
DeformationMap integrate_backward(const TimeVaryingVelocity& v, int j);

/// phi_{t_j,1}: mirrored recursion from t_{T-1}
///   phi_{t_{T-1},1} = id,  phi_{t_k,1}(x) = phi_{t_{k+1},1}(x + dt * v(t_k, x)).
DeformationMap integrate_forward(const TimeVaryingVelocity& v, int j);

/// All of phi_{t_j,0} for j = 0..T-1 in one sweep.
std::vector<DeformationMap> integrate_backward_all(const TimeVaryingVelocity& v);

/// All of phi_{t_j,1} for j = 0..T-1 in one sweep.
std::vector<DeformationMap> integrate_forward_all(const TimeVaryingVelocity& v);

/// (outer o inner)(x) = outer(inner(x)); outer's displacement interpolated at
/// inner's output points.
DeformationMap compose(const DeformationMap& outer, const DeformationMap& inner);

/// output(x) = interpolate(img, map(x)) on the map's grid.
ImageVolume deform_image(const ImageVolume& img, const DeformationMap& map);

/// Same with nearest-neighbor sampling (label images).
ImageVolume deform_image_nearest(const ImageVolume& img, const DeformationMap& map);

}  // namespace ldreg
