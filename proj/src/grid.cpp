#include "ldreg/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ldreg {

ImageGrid::ImageGrid(std::vector<int> d, std::vector<double> sp, std::vector<double> org) {
    if (d.size() != sp.size() || d.size() != org.size())
        throw std::invalid_argument("grid: dims/spacing/origin dimension mismatch");
    ndim = static_cast<int>(d.size());
    for (int i = 0; i < ndim; ++i) {
        dims[i] = d[i];
        spacing[i] = sp[i];
        origin[i] = org[i];
    }
    validate();
}

void ImageGrid::validate() const {
    if (ndim < 2 || ndim > kMaxDim)
        throw std::invalid_argument("grid: ndim must be 2 or 3");
    for (int i = 0; i < ndim; ++i) {
        if (dims[i] < 2) throw std::invalid_argument("grid: all dims must be >= 2");
        if (!(spacing[i] > 0.0)) throw std::invalid_argument("grid: spacing must be > 0");
        if (!std::isfinite(origin[i])) throw std::invalid_argument("grid: origin must be finite");
    }
}

std::size_t ImageGrid::voxel_count() const {
    std::size_t n = 1;
    for (int i = 0; i < ndim; ++i) n *= static_cast<std::size_t>(dims[i]);
    return n;
}

double ImageGrid::voxel_volume() const {
    double v = 1.0;
    for (int i = 0; i < ndim; ++i) v *= spacing[i];
    return v;
}

std::array<double, kMaxDim> ImageGrid::point(const std::array<int, kMaxDim>& idx) const {
    std::array<double, kMaxDim> p{};
    for (int i = 0; i < ndim; ++i) p[i] = origin[i] + idx[i] * spacing[i];
    return p;
}

std::size_t ImageGrid::linear(const std::array<int, kMaxDim>& idx) const {
    std::size_t lin = 0;
    for (int i = ndim - 1; i >= 0; --i) lin = lin * dims[i] + idx[i];
    return lin;
}

std::array<int, kMaxDim> ImageGrid::unlinear(std::size_t lin) const {
    std::array<int, kMaxDim> idx{};
    for (int i = 0; i < ndim; ++i) {
        idx[i] = static_cast<int>(lin % dims[i]);
        lin /= dims[i];
    }
    return idx;
}

bool ImageGrid::same_dims(const ImageGrid& o) const {
    if (ndim != o.ndim) return false;
    for (int i = 0; i < ndim; ++i)
        if (dims[i] != o.dims[i]) return false;
    return true;
}

bool ImageGrid::operator==(const ImageGrid& o) const {
    if (!same_dims(o)) return false;
    for (int i = 0; i < ndim; ++i)
        if (spacing[i] != o.spacing[i] || origin[i] != o.origin[i]) return false;
    return true;
}

double ImageVolume::min_value() const {
    return *std::min_element(data.begin(), data.end());
}

double ImageVolume::max_value() const {
    return *std::max_element(data.begin(), data.end());
}

double VectorField::max_norm() const {
    const int n = grid.ndim;
    double best = 0.0;
    for (std::size_t v = 0; v < grid.voxel_count(); ++v) {
        double s = 0.0;
        for (int c = 0; c < n; ++c) s += at(v, c) * at(v, c);
        best = std::max(best, s);
    }
    return std::sqrt(best);
}

namespace {

// Continuous voxel coordinate of a physical point, clamped to [0, dims-1].
struct VoxelCoord {
    std::array<int, kMaxDim> lo{};
    std::array<double, kMaxDim> frac{};
};

VoxelCoord locate(const ImageGrid& g, const std::array<double, kMaxDim>& point) {
    VoxelCoord c;
    for (int i = 0; i < g.ndim; ++i) {
        if (!std::isfinite(point[i]))
            throw std::invalid_argument("interpolate: non-finite point");
        double t = (point[i] - g.origin[i]) / g.spacing[i];
        t = std::clamp(t, 0.0, static_cast<double>(g.dims[i] - 1));
        // Snap within rounding noise of a node so node values reproduce exactly.
        double r = std::round(t);
        if (std::abs(t - r) < 1e-9) t = r;
        int lo = std::min(static_cast<int>(std::floor(t)), g.dims[i] - 2);
        c.lo[i] = lo;
        c.frac[i] = t - lo;
    }
    return c;
}

}  // namespace

double interpolate(const ImageVolume& img, const std::array<double, kMaxDim>& point) {
    const ImageGrid& g = img.grid;
    VoxelCoord c = locate(g, point);
    const int corners = 1 << g.ndim;
    double acc = 0.0;
    for (int m = 0; m < corners; ++m) {
        double w = 1.0;
        std::array<int, kMaxDim> idx{};
        for (int i = 0; i < g.ndim; ++i) {
            int bit = (m >> i) & 1;
            idx[i] = c.lo[i] + bit;
            w *= bit ? c.frac[i] : 1.0 - c.frac[i];
        }
        if (w != 0.0) acc += w * img.data[g.linear(idx)];
    }
    return acc;
}

double interpolate_nearest(const ImageVolume& img, const std::array<double, kMaxDim>& point) {
    const ImageGrid& g = img.grid;
    std::array<int, kMaxDim> idx{};
    for (int i = 0; i < g.ndim; ++i) {
        if (!std::isfinite(point[i]))
            throw std::invalid_argument("interpolate: non-finite point");
        double t = (point[i] - g.origin[i]) / g.spacing[i];
        idx[i] = std::clamp(static_cast<int>(std::lround(t)), 0, g.dims[i] - 1);
    }
    return img.data[g.linear(idx)];
}

std::array<double, kMaxDim> interpolate_vector(const VectorField& f,
                                               const std::array<double, kMaxDim>& point) {
    const ImageGrid& g = f.grid;
    VoxelCoord c = locate(g, point);
    const int corners = 1 << g.ndim;
    std::array<double, kMaxDim> acc{};
    for (int m = 0; m < corners; ++m) {
        double w = 1.0;
        std::array<int, kMaxDim> idx{};
        for (int i = 0; i < g.ndim; ++i) {
            int bit = (m >> i) & 1;
            idx[i] = c.lo[i] + bit;
            w *= bit ? c.frac[i] : 1.0 - c.frac[i];
        }
        if (w == 0.0) continue;
        std::size_t v = g.linear(idx);
        for (int i = 0; i < g.ndim; ++i) acc[i] += w * f.at(v, i);
    }
    return acc;
}

std::array<double, kMaxDim> DeformationMap::apply(const std::array<double, kMaxDim>& p) const {
    std::array<double, kMaxDim> u = interpolate_vector(displacement, p);
    std::array<double, kMaxDim> out{};
    for (int i = 0; i < grid().ndim; ++i) out[i] = p[i] + u[i];
    return out;
}

namespace {

// d/dx_i of a per-voxel scalar accessor, central in the interior, one-sided at
// the two boundary slices.
template <typename Get>
double axis_derivative(const ImageGrid& g, const std::array<int, kMaxDim>& idx, int axis,
                       Get&& get) {
    std::array<int, kMaxDim> a = idx, b = idx;
    double denom;
    if (idx[axis] == 0) {
        b[axis] = 1;
        denom = g.spacing[axis];
    } else if (idx[axis] == g.dims[axis] - 1) {
        a[axis] = idx[axis] - 1;
        denom = g.spacing[axis];
    } else {
        a[axis] = idx[axis] - 1;
        b[axis] = idx[axis] + 1;
        denom = 2.0 * g.spacing[axis];
    }
    return (get(b) - get(a)) / denom;
}

}  // namespace

VectorField gradient(const ImageVolume& img) {
    const ImageGrid& g = img.grid;
    VectorField out(g);
    const std::size_t n = g.voxel_count();
#pragma omp parallel for schedule(static)
    for (long long v = 0; v < static_cast<long long>(n); ++v) {
        std::array<int, kMaxDim> idx = g.unlinear(static_cast<std::size_t>(v));
        for (int axis = 0; axis < g.ndim; ++axis) {
            out.at(static_cast<std::size_t>(v), axis) = axis_derivative(
                g, idx, axis,
                [&](const std::array<int, kMaxDim>& q) { return img.data[g.linear(q)]; });
        }
    }
    return out;
}

ImageVolume gaussian_blur(const ImageVolume& img, const std::array<double, kMaxDim>& sigma_voxels) {
    const ImageGrid& g = img.grid;
    ImageVolume cur = img;
    for (int axis = 0; axis < g.ndim; ++axis) {
        double s = sigma_voxels[axis];
        if (s <= 0.0) continue;
        int radius = std::max(1, static_cast<int>(std::ceil(3.0 * s)));
        std::vector<double> w(2 * radius + 1);
        double sum = 0.0;
        for (int k = -radius; k <= radius; ++k) {
            w[k + radius] = std::exp(-0.5 * (k / s) * (k / s));
            sum += w[k + radius];
        }
        for (double& x : w) x /= sum;

        ImageVolume next(g);
        const std::size_t n = g.voxel_count();
#pragma omp parallel for schedule(static)
        for (long long v = 0; v < static_cast<long long>(n); ++v) {
            std::array<int, kMaxDim> idx = g.unlinear(static_cast<std::size_t>(v));
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                std::array<int, kMaxDim> q = idx;
                q[axis] = std::clamp(idx[axis] + k, 0, g.dims[axis] - 1);
                acc += w[k + radius] * cur.data[g.linear(q)];
            }
            next.data[v] = acc;
        }
        cur = std::move(next);
    }
    return cur;
}

ImageVolume resample_no_smoothing(const ImageVolume& img, const ImageGrid& target) {
    ImageVolume out(target);
    const std::size_t n = target.voxel_count();
#pragma omp parallel for schedule(static)
    for (long long v = 0; v < static_cast<long long>(n); ++v) {
        std::array<int, kMaxDim> idx = target.unlinear(static_cast<std::size_t>(v));
        out.data[v] = interpolate(img, target.point(idx));
    }
    return out;
}

ImageVolume resample(const ImageVolume& img, const ImageGrid& target) {
    if (img.grid == target) return img;
    std::array<double, kMaxDim> sigma{};
    bool blur = false;
    for (int i = 0; i < img.grid.ndim; ++i) {
        double ratio = target.spacing[i] / img.grid.spacing[i];
        if (ratio > 1.0) {
            sigma[i] = 0.5 * ratio;
            blur = true;
        }
    }
    if (!blur) return resample_no_smoothing(img, target);
    return resample_no_smoothing(gaussian_blur(img, sigma), target);
}

ImageVolume jacobian_determinant(const DeformationMap& map) {
    const ImageGrid& g = map.grid();
    const VectorField& u = map.displacement;
    ImageVolume out(g);
    const std::size_t n = g.voxel_count();
#pragma omp parallel for schedule(static)
    for (long long v = 0; v < static_cast<long long>(n); ++v) {
        std::array<int, kMaxDim> idx = g.unlinear(static_cast<std::size_t>(v));
        // J[r][c] = d phi_r / d x_c, phi(x) = x + u(x)
        double J[kMaxDim][kMaxDim] = {};
        for (int r = 0; r < g.ndim; ++r) {
            for (int c = 0; c < g.ndim; ++c) {
                double du = axis_derivative(g, idx, c, [&](const std::array<int, kMaxDim>& q) {
                    return u.at(g.linear(q), r);
                });
                J[r][c] = du + (r == c ? 1.0 : 0.0);
            }
        }
        double det;
        if (g.ndim == 2) {
            det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
        } else {
            det = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
                  J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
                  J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
        }
        out.data[v] = det;
    }
    return out;
}

ImageGrid coarsen_grid(const ImageGrid& g, double factor) {
    if (!(factor >= 1.0)) throw std::invalid_argument("coarsen_grid: factor must be >= 1");
    std::vector<int> dims(g.ndim);
    std::vector<double> spacing(g.ndim), origin(g.ndim);
    for (int i = 0; i < g.ndim; ++i) {
        double extent = (g.dims[i] - 1) * g.spacing[i];
        spacing[i] = g.spacing[i] * factor;
        dims[i] = std::max(2, static_cast<int>(std::floor(extent / spacing[i])) + 1);
        // Re-stretch spacing so the coarse grid spans the full extent.
        spacing[i] = extent / (dims[i] - 1);
        origin[i] = g.origin[i];
    }
    return ImageGrid(dims, spacing, origin);
}

}  // namespace ldreg
