#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace ldreg {

constexpr int kMaxDim = 3;

/// Regular grid in physical coordinates. origin is the physical position of
/// voxel (0,...,0); spacing is the physical length per voxel along each axis.
struct ImageGrid {
    int ndim = 0;
    std::array<int, kMaxDim> dims{};
    std::array<double, kMaxDim> spacing{};
    std::array<double, kMaxDim> origin{};

    ImageGrid() = default;
    ImageGrid(std::vector<int> d, std::vector<double> sp, std::vector<double> org);

    std::size_t voxel_count() const;
    double voxel_volume() const;

    /// Physical coordinate of the voxel at integer index `idx`.
    std::array<double, kMaxDim> point(const std::array<int, kMaxDim>& idx) const;

    /// Linear index, x fastest.
    std::size_t linear(const std::array<int, kMaxDim>& idx) const;

    /// Inverse of linear().
    std::array<int, kMaxDim> unlinear(std::size_t lin) const;

    bool same_dims(const ImageGrid& o) const;
    bool operator==(const ImageGrid& o) const;

    void validate() const;  // throws std::invalid_argument on bad grids
};

/// Scalar image on a regular grid. Data is stored x-fastest.
struct ImageVolume {
    ImageGrid grid;
    std::vector<double> data;

    ImageVolume() = default;
    explicit ImageVolume(const ImageGrid& g, double fill = 0.0)
        : grid(g), data(g.voxel_count(), fill) {}

    double& at(const std::array<int, kMaxDim>& idx) { return data[grid.linear(idx)]; }
    double at(const std::array<int, kMaxDim>& idx) const { return data[grid.linear(idx)]; }

    double min_value() const;
    double max_value() const;
};

/// Per-voxel N-vector field, component-interleaved, physical units.
struct VectorField {
    ImageGrid grid;
    std::vector<double> data;

    VectorField() = default;
    explicit VectorField(const ImageGrid& g)
        : grid(g), data(g.voxel_count() * g.ndim, 0.0) {}

    double& at(std::size_t voxel, int comp) { return data[voxel * grid.ndim + comp]; }
    double at(std::size_t voxel, int comp) const { return data[voxel * grid.ndim + comp]; }

    double max_norm() const;
};

/// Sampled diffeomorphism phi(x) = x + u(x), u in physical units.
struct DeformationMap {
    VectorField displacement;

    DeformationMap() = default;
    explicit DeformationMap(const ImageGrid& g) : displacement(g) {}

    const ImageGrid& grid() const { return displacement.grid; }

    /// phi evaluated at an arbitrary physical point (displacement interpolated,
    /// clamp-to-edge).
    std::array<double, kMaxDim> apply(const std::array<double, kMaxDim>& p) const;
};

/// Multilinear interpolation with clamp-to-edge boundary policy.
/// Exact at grid nodes. Throws on non-finite points.
double interpolate(const ImageVolume& img, const std::array<double, kMaxDim>& point);

/// Nearest-neighbor lookup with the same clamp policy (label images).
double interpolate_nearest(const ImageVolume& img, const std::array<double, kMaxDim>& point);

/// Per-component multilinear interpolation of a vector field.
std::array<double, kMaxDim> interpolate_vector(const VectorField& f,
                                               const std::array<double, kMaxDim>& point);

/// Central differences in the interior, one-sided at boundaries, scaled by
/// physical spacing.
VectorField gradient(const ImageVolume& img);

/// Resample onto a target grid via multilinear interpolation at target voxel
/// centers. When downsampling, a Gaussian anti-alias blur with
/// std = 0.5 * (target_spacing / source_spacing) voxels per axis is applied
/// first (skipped when the target grid equals the source grid).
ImageVolume resample(const ImageVolume& img, const ImageGrid& target);

/// resample without the anti-alias blur.
ImageVolume resample_no_smoothing(const ImageVolume& img, const ImageGrid& target);

/// Separable Gaussian blur, sigma given in voxels per axis, clamped boundary.
ImageVolume gaussian_blur(const ImageVolume& img, const std::array<double, kMaxDim>& sigma_voxels);

/// Determinant of the spatial Jacobian of phi(x) = x + u(x), central
/// differences in the interior, one-sided at boundaries. Negative values are
/// reported as-is (they signal folding).
ImageVolume jacobian_determinant(const DeformationMap& map);

/// Grid with spacing scaled by `factor` (>= 1) covering the same physical
/// extent (dims shrink accordingly, never below 2).
ImageGrid coarsen_grid(const ImageGrid& g, double factor);

}  // namespace ldreg
