#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ldreg/flow.hpp"
#include "ldreg/grid.hpp"
#include "ldreg/kernel.hpp"
#include "ldreg/matching.hpp"

namespace ldreg {

struct RegistrationConfig {
    double sigma = 1.0;        // matching weight, E = R + M / (2 sigma^2)
    KernelParams kernel;       // alpha, gamma
    int time_steps = 10;
    double epsilon0 = 1.0;     // initial step size
    int max_iterations = 200;
    double convergence_tol = 1e-4;  // relative E change over an accepted step
    MatcherConfig matcher;

    void validate() const;
};

struct IterationRecord {
    int iteration = 0;
    double energy = 0.0;
    double regularization = 0.0;
    double matching = 0.0;
    double normalized_matching = 0.0;
    double epsilon = 0.0;
    bool accepted = false;
    int level = 0;  // multi-resolution level, 0 for single runs
};

struct RegistrationResult {
    TimeVaryingVelocity velocity;
    DeformationMap forward_map;   // phi_{1,0}: pullback used to deform the template
    DeformationMap inverse_map;   // phi_{0,1}
    std::vector<IterationRecord> energy_trace;
    ImageVolume deformed_template;
    bool converged = false;
    std::string stop_reason;
};

struct EnergyBreakdown {
    double total = 0.0;
    double regularization = 0.0;
    double matching = 0.0;
};

/// E(v) = R(v) + M(I(1), J1) / (2 sigma^2), with
/// R = 1/2 * trapezoid_t <v(t), L'L v(t)> * voxvol.
EnergyBreakdown energy(const TimeVaryingVelocity& v, const ImageVolume& I0,
                       const ImageVolume& J1, const RegistrationConfig& cfg,
                       const SpectralKernel& kernel, Matcher& matcher);

/// Kernel-preconditioned (Sobolev) gradient: per slice
///   grad(t_j) = v(t_j) + K(rho(t_j) * grad I(t_j)),
/// rho(t_j) = -1/(2 sigma^2) * (dM/dI(I(1),J1) o phi_{t_j,1}) * |D phi_{t_j,1}|.
TimeVaryingVelocity gradient(const TimeVaryingVelocity& v, const ImageVolume& I0,
                             const ImageVolume& J1, const RegistrationConfig& cfg,
                             const SpectralKernel& kernel, Matcher& matcher);

/// Adaptive-step gradient descent from v_init (zero when absent). Accepted
/// steps grow epsilon by 1.05; rejected steps halve it and restore v.
/// Terminates on the relative-energy tolerance over an accepted step, on
/// epsilon < 1e-8 * epsilon0, or at max_iterations.
RegistrationResult register_images(const ImageVolume& I0, const ImageVolume& J1,
                                   const RegistrationConfig& cfg,
                                   const std::optional<TimeVaryingVelocity>& v_init = std::nullopt);

/// (M_t - M_ref) / (M_0 - M_ref); throws when M_0 == M_ref.
double normalized_matching(double m_t, double m_0, double m_ref);

/// Discrete H1 seminorm of a velocity (per-slice finite-difference gradients,
/// trapezoidal in time); used to compare smoothness across alpha values.
double h1_seminorm(const TimeVaryingVelocity& v);

void write_energy_trace_csv(const std::string& path, const std::vector<IterationRecord>& trace);

}  // namespace ldreg
