#include "ldreg/affine.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "ldreg/grid.hpp"

namespace ldreg {

AffineTransform AffineTransform::identity(int ndim) {
    AffineTransform a;
    a.ndim = ndim;
    for (int i = 0; i < ndim; ++i) a.matrix[i][i] = 1.0;
    return a;
}

std::array<double, kMaxDim> AffineTransform::apply(const std::array<double, kMaxDim>& p) const {
    std::array<double, kMaxDim> out{};
    for (int r = 0; r < ndim; ++r) {
        double acc = translation[r];
        for (int c = 0; c < ndim; ++c) acc += matrix[r][c] * p[c];
        out[r] = acc;
    }
    return out;
}

double AffineTransform::determinant() const {
    const auto& m = matrix;
    if (ndim == 2) return m[0][0] * m[1][1] - m[0][1] * m[1][0];
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

AffineTransform AffineTransform::inverse() const {
    double det = determinant();
    if (det == 0.0 || !std::isfinite(det))
        throw std::invalid_argument("affine: singular matrix");
    AffineTransform inv;
    inv.ndim = ndim;
    const auto& m = matrix;
    if (ndim == 2) {
        inv.matrix[0][0] = m[1][1] / det;
        inv.matrix[0][1] = -m[0][1] / det;
        inv.matrix[1][0] = -m[1][0] / det;
        inv.matrix[1][1] = m[0][0] / det;
    } else {
        inv.matrix[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
        inv.matrix[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
        inv.matrix[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
        inv.matrix[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
        inv.matrix[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
        inv.matrix[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
        inv.matrix[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
        inv.matrix[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
        inv.matrix[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    }
    // inv(translation) = -M^-1 t
    for (int r = 0; r < ndim; ++r) {
        double acc = 0.0;
        for (int c = 0; c < ndim; ++c) acc += inv.matrix[r][c] * translation[c];
        inv.translation[r] = -acc;
    }
    return inv;
}

namespace {

// Pullback map y(x) = W (x - center) + center + shift; the optimized
// parameterization. The reported AffineTransform is its inverse.
struct Pullback {
    int ndim;
    std::array<double, kMaxDim> center{};
    std::array<std::array<double, kMaxDim>, kMaxDim> W{};
    std::array<double, kMaxDim> shift{};

    std::array<double, kMaxDim> apply(const std::array<double, kMaxDim>& x) const {
        std::array<double, kMaxDim> y{};
        for (int r = 0; r < ndim; ++r) {
            double acc = center[r] + shift[r];
            for (int c = 0; c < ndim; ++c) acc += W[r][c] * (x[c] - center[c]);
            y[r] = acc;
        }
        return y;
    }

    AffineTransform to_affine() const {
        AffineTransform pull;
        pull.ndim = ndim;
        for (int r = 0; r < ndim; ++r) {
            pull.matrix[r] = W[r];
            double acc = center[r] + shift[r];
            for (int c = 0; c < ndim; ++c) acc -= W[r][c] * center[c];
            pull.translation[r] = acc;
        }
        return pull.inverse();
    }

    double det() const {
        AffineTransform t;
        t.ndim = ndim;
        for (int r = 0; r < ndim; ++r) t.matrix[r] = W[r];
        return t.determinant();
    }
};

ImageVolume warp(const ImageVolume& img, const Pullback& p, const ImageGrid& target) {
    ImageVolume out(target);
    const std::size_t n = target.voxel_count();
#pragma omp parallel for schedule(static)
    for (long long v = 0; v < static_cast<long long>(n); ++v) {
        out.data[v] = interpolate(img, p.apply(target.point(target.unlinear(
                                           static_cast<std::size_t>(v)))));
    }
    return out;
}

std::array<double, kMaxDim> centroid(const ImageVolume& img) {
    const ImageGrid& g = img.grid;
    double lo = img.min_value();
    std::array<double, kMaxDim> acc{};
    double wsum = 0.0;
    for (std::size_t v = 0; v < img.data.size(); ++v) {
        double w = img.data[v] - lo;
        if (w <= 0.0) continue;
        std::array<double, kMaxDim> p = g.point(g.unlinear(v));
        for (int i = 0; i < g.ndim; ++i) acc[i] += w * p[i];
        wsum += w;
    }
    if (wsum <= 0.0) throw std::invalid_argument("affine_register: constant (degenerate) image");
    for (int i = 0; i < g.ndim; ++i) acc[i] /= wsum;
    return acc;
}

struct ParamGradient {
    std::array<std::array<double, kMaxDim>, kMaxDim> dW{};
    std::array<double, kMaxDim> dShift{};
};

ParamGradient objective_gradient(const ImageVolume& I0, const Pullback& p,
                                 const ImageVolume& match_grad, const ImageGrid& grid) {
    ParamGradient g{};
    const double vol = grid.voxel_volume();
    VectorField gradI0 = gradient(I0);
    for (std::size_t v = 0; v < grid.voxel_count(); ++v) {
        double gm = match_grad.data[v];
        if (gm == 0.0) continue;
        std::array<double, kMaxDim> x = grid.point(grid.unlinear(v));
        std::array<double, kMaxDim> y = p.apply(x);
        std::array<double, kMaxDim> gi = interpolate_vector(gradI0, y);
        for (int r = 0; r < grid.ndim; ++r) {
            double base = gm * gi[r] * vol;
            g.dShift[r] += base;
            for (int c = 0; c < grid.ndim; ++c) g.dW[r][c] += base * (x[c] - p.center[c]);
        }
    }
    return g;
}

}  // namespace

AffineTransform affine_register(const ImageVolume& I0, const ImageVolume& J1,
                                const AffineConfig& cfg) {
    if (cfg.bins < 4) throw std::invalid_argument("affine_register: need at least 4 bins");
    if (I0.grid.ndim != J1.grid.ndim)
        throw std::invalid_argument("affine_register: dimension mismatch");
    if (I0.min_value() == I0.max_value() || J1.min_value() == J1.max_value())
        throw std::invalid_argument("affine_register: constant (degenerate) image");

    const int nd = J1.grid.ndim;
    Pullback p;
    p.ndim = nd;
    for (int i = 0; i < nd; ++i) p.W[i][i] = 1.0;
    std::array<double, kMaxDim> cI = centroid(I0), cJ = centroid(J1);
    for (int i = 0; i < nd; ++i) {
        p.center[i] = J1.grid.origin[i] + 0.5 * (J1.grid.dims[i] - 1) * J1.grid.spacing[i];
        p.shift[i] = cI[i] - cJ[i];
    }

    double half_extent = 0.0;
    for (int i = 0; i < nd; ++i)
        half_extent = std::max(half_extent, 0.5 * (J1.grid.dims[i] - 1) * J1.grid.spacing[i]);
    double min_spacing = J1.grid.spacing[0];
    for (int i = 1; i < nd; ++i) min_spacing = std::min(min_spacing, J1.grid.spacing[i]);

    for (double factor : cfg.pyramid) {
        ImageGrid level = factor > 1.0 ? coarsen_grid(J1.grid, factor) : J1.grid;
        ImageVolume J = factor > 1.0 ? resample(J1, level) : J1;
        ImageVolume I = factor > 1.0 ? resample(I0, coarsen_grid(I0.grid, factor)) : I0;

        Matcher matcher({MatcherKind::kMi, cfg.bins});
        matcher.freeze_ranges(warp(I, p, level), J);

        MatchResult cur = matcher.evaluate(warp(I, p, level), J);
        double eps = 0.0;  // set from the first gradient
        ParamGradient grad{};
        bool have_grad = false;

        for (int it = 0; it < cfg.max_iterations; ++it) {
            if (!have_grad) {
                grad = objective_gradient(I, p, cur.gradient_image, level);
                have_grad = true;
                if (eps == 0.0) {
                    // Scale the first step to about epsilon0 * min_spacing of
                    // induced displacement.
                    double effect = 0.0;
                    for (int r = 0; r < nd; ++r) {
                        effect = std::max(effect, std::abs(grad.dShift[r]));
                        for (int c = 0; c < nd; ++c)
                            effect = std::max(effect, std::abs(grad.dW[r][c]) / half_extent);
                    }
                    if (effect == 0.0) break;  // stationary
                    eps = cfg.epsilon0 * min_spacing / effect;
                }
            }

            Pullback trial = p;
            for (int r = 0; r < nd; ++r) {
                trial.shift[r] -= eps * grad.dShift[r];
                for (int c = 0; c < nd; ++c)
                    trial.W[r][c] -= eps * grad.dW[r][c] / (half_extent * half_extent);
            }

            bool accept = false;
            MatchResult mt;
            if (trial.det() > 0.0) {  // reject steps that fold the transform
                mt = matcher.evaluate(warp(I, trial, level), J);
                accept = std::isfinite(mt.value) && mt.value < cur.value;
            }
            if (accept) {
                double rel = (cur.value - mt.value) / std::max(std::abs(cur.value), 1e-300);
                p = trial;
                cur = std::move(mt);
                have_grad = false;
                eps *= 1.05;
                if (rel < cfg.convergence_tol) break;
            } else {
                eps *= 0.5;
                if (eps < 1e-10) break;
            }
        }
    }
    return p.to_affine();
}

namespace {

template <typename Sampler>
ImageVolume apply_affine_impl(const ImageVolume& img, const AffineTransform& A,
                              const ImageGrid& target, Sampler&& sample) {
    AffineTransform inv = A.inverse();
    ImageVolume out(target);
    const std::size_t n = target.voxel_count();
#pragma omp parallel for schedule(static)
    for (long long v = 0; v < static_cast<long long>(n); ++v) {
        std::array<double, kMaxDim> x = target.point(target.unlinear(static_cast<std::size_t>(v)));
        out.data[v] = sample(img, inv.apply(x));
    }
    return out;
}

}  // namespace

ImageVolume apply_affine(const ImageVolume& img, const AffineTransform& A,
                         const ImageGrid& target) {
    return apply_affine_impl(img, A, target,
                             [](const ImageVolume& i, const std::array<double, kMaxDim>& p) {
                                 return interpolate(i, p);
                             });
}

ImageVolume apply_affine_nearest(const ImageVolume& img, const AffineTransform& A,
                                 const ImageGrid& target) {
    return apply_affine_impl(img, A, target,
                             [](const ImageVolume& i, const std::array<double, kMaxDim>& p) {
                                 return interpolate_nearest(i, p);
                             });
}

void write_affine(const std::string& path, const AffineTransform& A) {
    nlohmann::json j;
    std::vector<std::vector<double>> m(A.ndim, std::vector<double>(A.ndim));
    for (int r = 0; r < A.ndim; ++r)
        for (int c = 0; c < A.ndim; ++c) m[r][c] = A.matrix[r][c];
    j["matrix"] = m;
    j["translation"] = std::vector<double>(A.translation.begin(), A.translation.begin() + A.ndim);
    j["units"] = "physical";
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << j.dump(2) << "\n";
}

AffineTransform read_affine(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    nlohmann::json j;
    f >> j;
    auto m = j.at("matrix").get<std::vector<std::vector<double>>>();
    auto t = j.at("translation").get<std::vector<double>>();
    AffineTransform a;
    a.ndim = static_cast<int>(t.size());
    if (m.size() != t.size()) throw std::runtime_error("affine JSON shape mismatch: " + path);
    for (int r = 0; r < a.ndim; ++r)
        for (int c = 0; c < a.ndim; ++c) a.matrix[r][c] = m[r].at(c);
    for (int r = 0; r < a.ndim; ++r) a.translation[r] = t[r];
    if (a.determinant() == 0.0) throw std::runtime_error("affine JSON is singular: " + path);
    return a;
}

}  // namespace ldreg
