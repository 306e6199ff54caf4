#pragma once

#include <memory>
#include <vector>

#include "ldreg/grid.hpp"

namespace ldreg {

/// Parameters of the differential operator L = -alpha * laplacian + gamma,
/// applied per vector component.
struct KernelParams {
    double alpha = 0.01;
    double gamma = 1.0;
};

/// Precomputed DFT multipliers for L, L'L, and K = (L'L)^-1 on one grid.
/// L acts diagonally in the DFT basis with eigenvalue
///   A(k) = gamma + 2*alpha * sum_i (1 - cos(2*pi*k_i/n_i)) / h_i^2
/// (3-point periodic discrete Laplacian, spacing h_i). Immutable after
/// construction and shareable across threads; apply_* use private scratch.
class SpectralKernel {
public:
    SpectralKernel(const ImageGrid& grid, const KernelParams& params);
    ~SpectralKernel();

    SpectralKernel(const SpectralKernel&) = delete;
    SpectralKernel& operator=(const SpectralKernel&) = delete;

    const ImageGrid& grid() const;
    const KernelParams& params() const;

    /// L eigenvalue at an integer frequency index (full spectrum indexing).
    double l_multiplier(const std::array<int, kMaxDim>& k) const;

    struct Impl;

private:
    friend VectorField apply_K(const SpectralKernel&, const VectorField&);
    friend VectorField apply_LdagL(const SpectralKernel&, const VectorField&);

    VectorField apply_spectral(const VectorField& field, bool smooth) const;

    std::unique_ptr<Impl> impl_;
};

/// Componentwise K = (L'L)^-1: forward DFT, multiply by 1/A(k)^2, inverse DFT.
VectorField apply_K(const SpectralKernel& kernel, const VectorField& field);

/// Componentwise L'L: multiply by A(k)^2 in the DFT domain.
VectorField apply_LdagL(const SpectralKernel& kernel, const VectorField& field);

}  // namespace ldreg
