#include "ldreg/validation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace ldreg {

namespace {

bool inside_extent(const ImageGrid& g, const std::array<double, kMaxDim>& p) {
    for (int i = 0; i < g.ndim; ++i) {
        double hi = g.origin[i] + (g.dims[i] - 1) * g.spacing[i];
        if (p[i] < g.origin[i] || p[i] > hi) return false;
    }
    return true;
}

}  // namespace

TransformedLandmarks transform_landmarks(const LandmarkSet& lm, const DeformationMap& map) {
    const ImageGrid& g = map.grid();
    if (lm.ndim != g.ndim)
        throw std::invalid_argument("transform_landmarks: dimension mismatch");
    TransformedLandmarks out;
    out.points.ndim = lm.ndim;
    for (const Landmark& p : lm.points) {
        if (!inside_extent(g, p.point)) {
            out.out_of_extent.push_back(p.label);
            continue;
        }
        Landmark q = p;
        q.point = map.apply(p.point);
        out.points.points.push_back(std::move(q));
    }
    return out;
}

LandmarkError landmark_error(const LandmarkSet& a, const LandmarkSet& b) {
    if (a.ndim != b.ndim) throw std::invalid_argument("landmark_error: dimension mismatch");
    std::map<std::string, const Landmark*> bm;
    for (const Landmark& p : b.points) {
        if (!bm.emplace(p.label, &p).second)
            throw std::invalid_argument("landmark_error: duplicate label " + p.label);
    }
    if (bm.size() != a.points.size())
        throw std::invalid_argument("landmark_error: label sets differ in size");
    LandmarkError e;
    for (const Landmark& p : a.points) {
        auto it = bm.find(p.label);
        if (it == bm.end())
            throw std::invalid_argument("landmark_error: label " + p.label + " missing");
        double acc = 0.0;
        for (int i = 0; i < a.ndim; ++i) {
            double d = p.point[i] - it->second->point[i];
            acc += d * d;
        }
        double dist = std::sqrt(acc);
        e.per_label.emplace_back(p.label, dist);
        e.mean += dist;
    }
    if (!e.per_label.empty()) e.mean /= static_cast<double>(e.per_label.size());
    return e;
}

ImageVolume checkerboard(const ImageVolume& a, const ImageVolume& b, int tile) {
    if (!(a.grid == b.grid)) throw std::invalid_argument("checkerboard: mismatched grids");
    if (tile < 1) throw std::invalid_argument("checkerboard: tile must be >= 1");
    ImageVolume out(a.grid);
    for (std::size_t v = 0; v < out.data.size(); ++v) {
        std::array<int, kMaxDim> idx = a.grid.unlinear(v);
        int parity = 0;
        for (int i = 0; i < a.grid.ndim; ++i) parity += idx[i] / tile;
        out.data[v] = (parity % 2 == 0) ? a.data[v] : b.data[v];
    }
    return out;
}

ImageVolume deformation_grid_image(const DeformationMap& map, int stride) {
    if (stride < 2) throw std::invalid_argument("deformation_grid_image: stride must be >= 2");
    const ImageGrid& g = map.grid();
    ImageVolume out(g);
    const int samples_per_voxel = 4;  // dense enough that mapped lines stay connected

    // For each axis, walk every stride-th line running along that axis and
    // rasterize its image under phi.
    for (int axis = 0; axis < g.ndim; ++axis) {
        // Iterate over the perpendicular index combinations restricted to
        // multiples of stride.
        std::array<int, kMaxDim> idx{};
        auto emit_line = [&](std::array<int, kMaxDim> base) {
            int n_samples = (g.dims[axis] - 1) * samples_per_voxel + 1;
            for (int s = 0; s < n_samples; ++s) {
                std::array<double, kMaxDim> p{};
                for (int i = 0; i < g.ndim; ++i)
                    p[i] = g.origin[i] + base[i] * g.spacing[i];
                p[axis] = g.origin[axis] +
                          (static_cast<double>(s) / samples_per_voxel) * g.spacing[axis];
                std::array<double, kMaxDim> q = map.apply(p);
                std::array<int, kMaxDim> vox{};
                bool ok = true;
                for (int i = 0; i < g.ndim; ++i) {
                    double t = (q[i] - g.origin[i]) / g.spacing[i];
                    int r = static_cast<int>(std::lround(t));
                    if (r < 0 || r >= g.dims[i]) {
                        ok = false;
                        break;
                    }
                    vox[i] = r;
                }
                if (ok) out.data[g.linear(vox)] = 1.0;
            }
        };

        // Recursive walk over perpendicular axes at multiples of stride.
        auto walk = [&](auto&& self, int dim) -> void {
            if (dim == g.ndim) {
                emit_line(idx);
                return;
            }
            if (dim == axis) {
                idx[dim] = 0;
                self(self, dim + 1);
                return;
            }
            for (int k = 0; k < g.dims[dim]; k += stride) {
                idx[dim] = k;
                self(self, dim + 1);
            }
        };
        walk(walk, 0);
    }
    return out;
}

}  // namespace ldreg
