#pragma once

#include <string>
#include <vector>

#include "ldreg/grid.hpp"
#include "ldreg/matching.hpp"

namespace ldreg {

/// x -> matrix * x + translation, physical units. 12 free parameters in 3D,
/// 6 in 2D.
struct AffineTransform {
    int ndim = 0;
    std::array<std::array<double, kMaxDim>, kMaxDim> matrix{};  // identity-initialized via make
    std::array<double, kMaxDim> translation{};

    static AffineTransform identity(int ndim);

    std::array<double, kMaxDim> apply(const std::array<double, kMaxDim>& p) const;
    double determinant() const;
    AffineTransform inverse() const;  // throws on a singular matrix
};

struct AffineConfig {
    int bins = 32;
    int max_iterations = 200;
    double epsilon0 = 0.1;
    double convergence_tol = 1e-6;
    std::vector<double> pyramid = {4.0, 2.0, 1.0};  // spacing factors, coarse to fine
};

/// Gradient descent on the 12 (or 6) affine parameters minimizing negative MI
/// of I0 o A^-1 against J1, coarse to fine. Matrix starts at identity,
/// translation at the centroid offset.
AffineTransform affine_register(const ImageVolume& I0, const ImageVolume& J1,
                                const AffineConfig& cfg);

/// output(x) = interpolate(img, A^-1(x)) on the target grid.
ImageVolume apply_affine(const ImageVolume& img, const AffineTransform& A,
                         const ImageGrid& target);

/// Nearest-neighbor variant for label images.
ImageVolume apply_affine_nearest(const ImageVolume& img, const AffineTransform& A,
                                 const ImageGrid& target);

// JSON serialization: {"matrix": [[...]], "translation": [...], "units": "physical"}
void write_affine(const std::string& path, const AffineTransform& A);
AffineTransform read_affine(const std::string& path);

}  // namespace ldreg
