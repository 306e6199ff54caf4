#include "ldreg/phantom.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace ldreg {

namespace {

ImageGrid unit_grid(int size, int ndim) {
    std::vector<int> dims(ndim, size);
    std::vector<double> sp(ndim, 1.0), org(ndim, 0.0);
    return ImageGrid(dims, sp, org);
}

double gauss(double r2, double sigma) { return std::exp(-0.5 * r2 / (sigma * sigma)); }

// Smooth multi-feature scene: a C-shaped annulus with a gap plus two blobs of
// different intensity. Feature points double as landmarks.
struct Scene {
    ImageVolume img;
    LandmarkSet landmarks;
};

double scene_value(const std::array<double, kMaxDim>& p, int ndim, double n) {
    double c = 0.5 * (n - 1);
    double dx = p[0] - c, dy = p[1] - c;
    double dz = ndim == 3 ? p[2] - c : 0.0;
    double val = 0.0;

    // annulus of radius 0.28n, thickness 0.05n, with a gap around +x
    double r = std::sqrt(dx * dx + dy * dy + dz * dz);
    double ring = gauss((r - 0.28 * n) * (r - 0.28 * n), 0.05 * n);
    double ang = std::atan2(dy, dx);
    double gap = 1.0 - gauss(ang * ang, 0.45);
    val += 0.9 * ring * gap;

    // two interior blobs
    double bx1 = -0.12 * n, by1 = 0.05 * n;
    double bx2 = 0.10 * n, by2 = -0.10 * n;
    val += 0.6 * gauss((dx - bx1) * (dx - bx1) + (dy - by1) * (dy - by1) + dz * dz, 0.06 * n);
    val += 1.0 * gauss((dx - bx2) * (dx - bx2) + (dy - by2) * (dy - by2) + dz * dz, 0.05 * n);
    return val;
}

Scene make_scene(const ImageGrid& g) {
    Scene s;
    s.img = ImageVolume(g);
    double n = g.dims[0];
    for (std::size_t v = 0; v < g.voxel_count(); ++v) {
        std::array<int, kMaxDim> idx = g.unlinear(v);
        std::array<double, kMaxDim> p{};
        for (int i = 0; i < g.ndim; ++i) p[i] = idx[i];
        s.img.data[v] = scene_value(p, g.ndim, n);
    }

    double c = 0.5 * (n - 1);
    s.landmarks.ndim = g.ndim;
    auto add = [&](const std::string& label, double x, double y) {
        Landmark lm;
        lm.label = label;
        lm.point = {x, y, g.ndim == 3 ? c : 0.0};
        s.landmarks.points.push_back(lm);
    };
    add("center", c, c);
    add("blob_a", c - 0.12 * n, c + 0.05 * n);
    add("blob_b", c + 0.10 * n, c - 0.10 * n);
    add("ring_top", c, c + 0.28 * n);
    add("ring_bottom", c, c - 0.28 * n);
    add("ring_left", c - 0.28 * n, c);
    return s;
}

ImageVolume invert(const ImageVolume& img) {
    double hi = img.max_value();
    ImageVolume out(img.grid);
    for (std::size_t v = 0; v < img.data.size(); ++v) out.data[v] = hi - img.data[v];
    return out;
}

}  // namespace

std::vector<std::string> phantom_kinds() {
    return {"blob", "cshape", "translate", "swirl", "invert-contrast"};
}

Phantom make_phantom(const std::string& kind, const PhantomParams& params) {
    if (params.ndim < 2 || params.ndim > 3)
        throw std::invalid_argument("phantom: ndim must be 2 or 3");
    if (params.size < 8) throw std::invalid_argument("phantom: size must be >= 8");
    ImageGrid g = unit_grid(params.size, params.ndim);
    const double n = params.size;
    const double c = 0.5 * (n - 1);

    std::array<double, kMaxDim> off{3.0, 0.0, 0.0};
    for (std::size_t i = 0; i < params.offset.size() && i < kMaxDim; ++i)
        off[i] = params.offset[i];

    Phantom ph;
    if (kind == "blob") {
        ph.template_img = ImageVolume(g);
        ph.target_img = ImageVolume(g);
        double sigma = 0.1 * n;
        for (std::size_t v = 0; v < g.voxel_count(); ++v) {
            std::array<int, kMaxDim> idx = g.unlinear(v);
            double r2t = 0.0, r2g = 0.0;
            for (int i = 0; i < g.ndim; ++i) {
                double d = idx[i] - c;
                r2t += d * d;
                double e = idx[i] - c - off[i];
                r2g += e * e;
            }
            ph.template_img.data[v] = gauss(r2t, sigma);
            ph.target_img.data[v] = gauss(r2g, sigma);
        }
        ph.template_landmarks.ndim = g.ndim;
        ph.target_landmarks.ndim = g.ndim;
        Landmark lm;
        lm.label = "center";
        for (int i = 0; i < g.ndim; ++i) lm.point[i] = c;
        ph.template_landmarks.points.push_back(lm);
        for (int i = 0; i < g.ndim; ++i) lm.point[i] = c + off[i];
        ph.target_landmarks.points.push_back(lm);
        DeformationMap m(g);
        for (std::size_t v = 0; v < g.voxel_count(); ++v)
            for (int i = 0; i < g.ndim; ++i) m.displacement.at(v, i) = -off[i];
        ph.true_map = std::move(m);
    } else if (kind == "cshape" || kind == "translate" || kind == "invert-contrast") {
        Scene s = make_scene(g);
        ph.template_img = s.img;
        ph.template_landmarks = s.landmarks;
        ph.target_landmarks = s.landmarks;
        if (kind == "translate") {
            DeformationMap m(g);
            for (std::size_t v = 0; v < g.voxel_count(); ++v)
                for (int i = 0; i < g.ndim; ++i) m.displacement.at(v, i) = -off[i];
            ph.target_img = deform_image(ph.template_img, m);
            for (Landmark& lm : ph.target_landmarks.points)
                for (int i = 0; i < g.ndim; ++i) lm.point[i] += off[i];
            ph.true_map = std::move(m);
        } else {
            ph.target_img = ph.template_img;
            DeformationMap id(g);
            ph.true_map = std::move(id);
            if (kind == "invert-contrast") ph.target_img = invert(ph.target_img);
        }
    } else if (kind == "swirl") {
        Scene s = make_scene(g);
        ph.template_img = s.img;
        ph.template_landmarks = s.landmarks;

        // Stationary rotation field about the image center; its unit-time flow
        // is a rotation by angle_deg in the xy plane.
        double theta = params.angle_deg * std::numbers::pi / 180.0;
        TimeVaryingVelocity v(g, params.time_steps);
        for (int j = 0; j < params.time_steps; ++j) {
            for (std::size_t vox = 0; vox < g.voxel_count(); ++vox) {
                std::array<int, kMaxDim> idx = g.unlinear(vox);
                double dx = idx[0] - c, dy = idx[1] - c;
                v.slices[j].at(vox, 0) = -theta * dy;
                v.slices[j].at(vox, 1) = theta * dx;
            }
        }
        DeformationMap psi = integrate_backward(v, params.time_steps - 1);
        ph.target_img = deform_image(ph.template_img, psi);
        ph.true_map = std::move(psi);

        ph.target_landmarks = ph.template_landmarks;
        double ct = std::cos(theta), st = std::sin(theta);
        for (Landmark& lm : ph.target_landmarks.points) {
            double dx = lm.point[0] - c, dy = lm.point[1] - c;
            lm.point[0] = c + ct * dx - st * dy;
            lm.point[1] = c + st * dx + ct * dy;
        }
    } else {
        std::string kinds;
        for (const std::string& k : phantom_kinds()) kinds += (kinds.empty() ? "" : ", ") + k;
        throw std::invalid_argument("phantom: unknown kind '" + kind + "' (kinds: " + kinds + ")");
    }

    if (params.invert_contrast && kind != "invert-contrast")
        ph.target_img = invert(ph.target_img);
    if (params.noise > 0.0) {
        std::mt19937 rng(params.seed);
        std::normal_distribution<double> dist(0.0, params.noise);
        for (double& x : ph.template_img.data) x += dist(rng);
        for (double& x : ph.target_img.data) x += dist(rng);
    }
    return ph;
}

}  // namespace ldreg
