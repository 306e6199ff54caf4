#include "ldreg/flow.hpp"

#include <stdexcept>

namespace ldreg {

TimeVaryingVelocity::TimeVaryingVelocity(const ImageGrid& grid, int time_steps) {
    if (time_steps < 2) throw std::invalid_argument("velocity: need at least 2 time steps");
    slices.assign(time_steps, VectorField(grid));
}

void TimeVaryingVelocity::validate() const {
    if (slices.size() < 2) throw std::invalid_argument("velocity: need at least 2 time steps");
    for (const VectorField& s : slices)
        if (!(s.grid == slices.front().grid))
            throw std::invalid_argument("velocity: slices on mismatched grids");
}

namespace {

// One semi-Lagrangian step: out(x) = prev(x + sign * dt * v(x)) as a
// displacement update, velocity sampled at the arrival point x.
DeformationMap advect(const DeformationMap& prev, const VectorField& vel, double step) {
    const ImageGrid& g = prev.grid();
    DeformationMap out(g);
    const std::size_t n = g.voxel_count();
#pragma omp parallel for schedule(static)
    for (long long v = 0; v < static_cast<long long>(n); ++v) {
        std::array<int, kMaxDim> idx = g.unlinear(static_cast<std::size_t>(v));
        std::array<double, kMaxDim> x = g.point(idx);
        std::array<double, kMaxDim> y{};
        for (int i = 0; i < g.ndim; ++i) y[i] = x[i] + step * vel.at(static_cast<std::size_t>(v), i);
        std::array<double, kMaxDim> u = interpolate_vector(prev.displacement, y);
        for (int i = 0; i < g.ndim; ++i)
            out.displacement.at(static_cast<std::size_t>(v), i) = (y[i] + u[i]) - x[i];
    }
    return out;
}

}  // namespace

std::vector<DeformationMap> integrate_backward_all(const TimeVaryingVelocity& v) {
    v.validate();
    const double dt = v.dt();
    std::vector<DeformationMap> maps;
    maps.reserve(v.time_steps());
    maps.emplace_back(v.grid());  // phi_{t_0,0} = id
    for (int k = 0; k + 1 < v.time_steps(); ++k)
        maps.push_back(advect(maps.back(), v.slices[k + 1], -dt));
    return maps;
}

std::vector<DeformationMap> integrate_forward_all(const TimeVaryingVelocity& v) {
    v.validate();
    const double dt = v.dt();
    const int T = v.time_steps();
    std::vector<DeformationMap> maps(T);
    maps[T - 1] = DeformationMap(v.grid());  // phi_{t_{T-1},1} = id
    for (int k = T - 2; k >= 0; --k) maps[k] = advect(maps[k + 1], v.slices[k], dt);
    return maps;
}

DeformationMap integrate_backward(const TimeVaryingVelocity& v, int j) {
    if (j < 0 || j >= v.time_steps())
        throw std::out_of_range("integrate_backward: time index out of range");
    v.validate();
    const double dt = v.dt();
    DeformationMap map(v.grid());
    for (int k = 0; k < j; ++k) map = advect(map, v.slices[k + 1], -dt);
    return map;
}

DeformationMap integrate_forward(const TimeVaryingVelocity& v, int j) {
    if (j < 0 || j >= v.time_steps())
        throw std::out_of_range("integrate_forward: time index out of range");
    v.validate();
    const double dt = v.dt();
    DeformationMap map(v.grid());
    for (int k = v.time_steps() - 2; k >= j; --k) map = advect(map, v.slices[k], dt);
    return map;
}

DeformationMap compose(const DeformationMap& outer, const DeformationMap& inner) {
    if (!(outer.grid() == inner.grid()))
        throw std::invalid_argument("compose: maps on mismatched grids");
    const ImageGrid& g = inner.grid();
    DeformationMap out(g);
    const std::size_t n = g.voxel_count();
#pragma omp parallel for schedule(static)
    for (long long v = 0; v < static_cast<long long>(n); ++v) {
        std::array<int, kMaxDim> idx = g.unlinear(static_cast<std::size_t>(v));
        std::array<double, kMaxDim> x = g.point(idx);
        std::array<double, kMaxDim> y{};
        for (int i = 0; i < g.ndim; ++i)
            y[i] = x[i] + inner.displacement.at(static_cast<std::size_t>(v), i);
        std::array<double, kMaxDim> u = interpolate_vector(outer.displacement, y);
        for (int i = 0; i < g.ndim; ++i)
            out.displacement.at(static_cast<std::size_t>(v), i) = (y[i] + u[i]) - x[i];
    }
    return out;
}

ImageVolume deform_image(const ImageVolume& img, const DeformationMap& map) {
    const ImageGrid& g = map.grid();
    ImageVolume out(g);
    const std::size_t n = g.voxel_count();
#pragma omp parallel for schedule(static)
    for (long long v = 0; v < static_cast<long long>(n); ++v) {
        std::array<int, kMaxDim> idx = g.unlinear(static_cast<std::size_t>(v));
        std::array<double, kMaxDim> x = g.point(idx);
        for (int i = 0; i < g.ndim; ++i)
            x[i] += map.displacement.at(static_cast<std::size_t>(v), i);
        out.data[v] = interpolate(img, x);
    }
    return out;
}

ImageVolume deform_image_nearest(const ImageVolume& img, const DeformationMap& map) {
    const ImageGrid& g = map.grid();
    ImageVolume out(g);
    const std::size_t n = g.voxel_count();
#pragma omp parallel for schedule(static)
    for (long long v = 0; v < static_cast<long long>(n); ++v) {
        std::array<int, kMaxDim> idx = g.unlinear(static_cast<std::size_t>(v));
        std::array<double, kMaxDim> x = g.point(idx);
        for (int i = 0; i < g.ndim; ++i)
            x[i] += map.displacement.at(static_cast<std::size_t>(v), i);
        out.data[v] = interpolate_nearest(img, x);
    }
    return out;
}

}  // namespace ldreg
