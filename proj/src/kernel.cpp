#include "ldreg/kernel.hpp"

#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include <fftw3.h>

namespace ldreg {

namespace {
// FFTW planning is not reentrant.
std::mutex g_plan_mutex;
}  // namespace

struct SpectralKernel::Impl {
    ImageGrid grid;
    KernelParams params;
    std::vector<double> a2;       // A(k)^2 on the r2c half spectrum
    std::size_t half_count = 0;   // voxels in the half spectrum
    fftw_plan forward = nullptr;  // r2c
    fftw_plan backward = nullptr; // c2r

    ~Impl() {
        std::lock_guard<std::mutex> lock(g_plan_mutex);
        if (forward) fftw_destroy_plan(forward);
        if (backward) fftw_destroy_plan(backward);
    }
};

SpectralKernel::SpectralKernel(const ImageGrid& grid, const KernelParams& params)
    : impl_(std::make_unique<Impl>()) {
    grid.validate();
    if (!(params.gamma > 0.0))
        throw std::invalid_argument("kernel: gamma must be > 0 (operator singular otherwise)");
    if (params.alpha < 0.0) throw std::invalid_argument("kernel: alpha must be >= 0");
    impl_->grid = grid;
    impl_->params = params;

    const int nd = grid.ndim;
    // FFTW is row-major; our layout is x fastest, so axis order is reversed.
    int n[kMaxDim];
    for (int i = 0; i < nd; ++i) n[i] = grid.dims[nd - 1 - i];

    const int nx_half = grid.dims[0] / 2 + 1;
    std::size_t half = static_cast<std::size_t>(nx_half);
    for (int i = 1; i < nd; ++i) half *= static_cast<std::size_t>(grid.dims[i]);
    impl_->half_count = half;

    impl_->a2.resize(half);
    std::array<int, kMaxDim> k{};
    for (std::size_t lin = 0; lin < half; ++lin) {
        std::size_t rem = lin;
        k[0] = static_cast<int>(rem % nx_half);
        rem /= nx_half;
        for (int i = 1; i < nd; ++i) {
            k[i] = static_cast<int>(rem % grid.dims[i]);
            rem /= grid.dims[i];
        }
        double a = l_multiplier(k);
        impl_->a2[lin] = a * a;
    }

    std::lock_guard<std::mutex> lock(g_plan_mutex);
    double* rbuf = fftw_alloc_real(grid.voxel_count());
    fftw_complex* cbuf = fftw_alloc_complex(half);
    impl_->forward = fftw_plan_dft_r2c(nd, n, rbuf, cbuf, FFTW_ESTIMATE);
    impl_->backward = fftw_plan_dft_c2r(nd, n, cbuf, rbuf, FFTW_ESTIMATE);
    fftw_free(rbuf);
    fftw_free(cbuf);
    if (!impl_->forward || !impl_->backward)
        throw std::runtime_error("kernel: FFTW plan creation failed");
}

SpectralKernel::~SpectralKernel() = default;

const ImageGrid& SpectralKernel::grid() const { return impl_->grid; }
const KernelParams& SpectralKernel::params() const { return impl_->params; }

double SpectralKernel::l_multiplier(const std::array<int, kMaxDim>& k) const {
    const ImageGrid& g = impl_->grid;
    const KernelParams& p = impl_->params;
    double acc = p.gamma;
    for (int i = 0; i < g.ndim; ++i) {
        double theta = 2.0 * std::numbers::pi * k[i] / g.dims[i];
        acc += 2.0 * p.alpha * (1.0 - std::cos(theta)) / (g.spacing[i] * g.spacing[i]);
    }
    return acc;
}

VectorField SpectralKernel::apply_spectral(const VectorField& field, bool smooth) const {
    const ImageGrid& g = impl_->grid;
    if (!(field.grid == g))
        throw std::invalid_argument("apply_K/apply_LdagL: field grid does not match kernel grid");

    struct Scratch {
        double* real;
        fftw_complex* cplx;
        ~Scratch() {
            fftw_free(real);
            fftw_free(cplx);
        }
    };

    const std::size_t half = impl_->half_count;
    const std::size_t nvox = g.voxel_count();
    const double inv_n = 1.0 / static_cast<double>(nvox);

    Scratch s{fftw_alloc_real(nvox), fftw_alloc_complex(half)};
    VectorField out(g);

    for (int c = 0; c < g.ndim; ++c) {
        for (std::size_t v = 0; v < nvox; ++v) s.real[v] = field.at(v, c);
        fftw_execute_dft_r2c(impl_->forward, s.real, s.cplx);
        for (std::size_t k = 0; k < half; ++k) {
            double m = smooth ? 1.0 / impl_->a2[k] : impl_->a2[k];
            s.cplx[k][0] *= m;
            s.cplx[k][1] *= m;
        }
        fftw_execute_dft_c2r(impl_->backward, s.cplx, s.real);
        for (std::size_t v = 0; v < nvox; ++v) out.at(v, c) = s.real[v] * inv_n;
    }
    return out;
}

VectorField apply_K(const SpectralKernel& kernel, const VectorField& field) {
    return kernel.apply_spectral(field, true);
}

VectorField apply_LdagL(const SpectralKernel& kernel, const VectorField& field) {
    return kernel.apply_spectral(field, false);
}

}  // namespace ldreg
