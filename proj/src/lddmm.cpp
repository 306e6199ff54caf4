#include "ldreg/lddmm.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ldreg {

void RegistrationConfig::validate() const {
    if (!(sigma > 0.0)) throw std::invalid_argument("config: sigma must be > 0");
    if (!(epsilon0 > 0.0)) throw std::invalid_argument("config: epsilon0 must be > 0");
    if (max_iterations < 1) throw std::invalid_argument("config: max_iterations must be >= 1");
    if (convergence_tol < 0.0) throw std::invalid_argument("config: convergence_tol must be >= 0");
    if (time_steps < 2) throw std::invalid_argument("config: time_steps must be >= 2");
}

namespace {

// Trapezoidal quadrature weights over the T slices; sums to 1.
std::vector<double> time_weights(int T) {
    double dt = 1.0 / (T - 1);
    std::vector<double> w(T, dt);
    w.front() = 0.5 * dt;
    w.back() = 0.5 * dt;
    return w;
}

double field_inner(const VectorField& a, const VectorField& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) acc += a.data[i] * b.data[i];
    return acc;
}

double regularization(const TimeVaryingVelocity& v, const SpectralKernel& kernel) {
    const double vol = v.grid().voxel_volume();
    std::vector<double> w = time_weights(v.time_steps());
    double acc = 0.0;
    for (int j = 0; j < v.time_steps(); ++j) {
        VectorField lv = apply_LdagL(kernel, v.slices[j]);
        acc += w[j] * field_inner(v.slices[j], lv);
    }
    return 0.5 * acc * vol;
}

}  // namespace

EnergyBreakdown energy(const TimeVaryingVelocity& v, const ImageVolume& I0,
                       const ImageVolume& J1, const RegistrationConfig& cfg,
                       const SpectralKernel& kernel, Matcher& matcher) {
    EnergyBreakdown e;
    e.regularization = regularization(v, kernel);
    DeformationMap phi10 = integrate_backward(v, v.time_steps() - 1);
    ImageVolume I1 = deform_image(I0, phi10);
    e.matching = matcher.evaluate(I1, J1).value;
    e.total = e.regularization + e.matching / (2.0 * cfg.sigma * cfg.sigma);
    return e;
}

TimeVaryingVelocity gradient(const TimeVaryingVelocity& v, const ImageVolume& I0,
                             const ImageVolume& J1, const RegistrationConfig& cfg,
                             const SpectralKernel& kernel, Matcher& matcher) {
    const int T = v.time_steps();
    const ImageGrid& g = v.grid();
    std::vector<DeformationMap> back = integrate_backward_all(v);
    std::vector<DeformationMap> fwd = integrate_forward_all(v);

    ImageVolume I1 = deform_image(I0, back[T - 1]);
    ImageVolume match_grad = matcher.evaluate(I1, J1).gradient_image;
    const double costate_scale = -1.0 / (2.0 * cfg.sigma * cfg.sigma);

    TimeVaryingVelocity out(g, T);
    for (int j = 0; j < T; ++j) {
        ImageVolume Ij = deform_image(I0, back[j]);
        VectorField grad_I = gradient(Ij);
        ImageVolume pulled = deform_image(match_grad, fwd[j]);
        ImageVolume detJ = jacobian_determinant(fwd[j]);

        VectorField force(g);
        for (std::size_t vox = 0; vox < g.voxel_count(); ++vox) {
            double rho = costate_scale * pulled.data[vox] * detJ.data[vox];
            for (int c = 0; c < g.ndim; ++c) force.at(vox, c) = rho * grad_I.at(vox, c);
        }
        VectorField smoothed = apply_K(kernel, force);
        out.slices[j] = v.slices[j];
        for (std::size_t i = 0; i < smoothed.data.size(); ++i)
            out.slices[j].data[i] += smoothed.data[i];
    }
    return out;
}

double normalized_matching(double m_t, double m_0, double m_ref) {
    if (m_0 == m_ref)
        throw std::invalid_argument("normalized_matching: M_0 == M_ref (already matched)");
    return (m_t - m_ref) / (m_0 - m_ref);
}

RegistrationResult register_images(const ImageVolume& I0, const ImageVolume& J1,
                                   const RegistrationConfig& cfg,
                                   const std::optional<TimeVaryingVelocity>& v_init) {
    cfg.validate();
    if (!(I0.grid == J1.grid))
        throw std::invalid_argument("register: images on mismatched grids");
    const ImageGrid& g = I0.grid;

    SpectralKernel kernel(g, cfg.kernel);
    Matcher matcher(cfg.matcher);

    TimeVaryingVelocity v = v_init ? *v_init : TimeVaryingVelocity(g, cfg.time_steps);
    if (!(v.grid() == g)) throw std::invalid_argument("register: v_init grid mismatch");

    // Freeze MI histogram ranges from the initial deformed template so the
    // objective is stationary across iterations.
    {
        DeformationMap phi10 = integrate_backward(v, v.time_steps() - 1);
        ImageVolume I1 = deform_image(I0, phi10);
        matcher.freeze_ranges(I1, J1);
    }
    const double m_ref = matcher.evaluate(J1, J1).value;

    EnergyBreakdown cur = energy(v, I0, J1, cfg, kernel, matcher);
    if (!std::isfinite(cur.total))
        throw std::runtime_error("register: non-finite energy at the initial iterate");
    const double m_0 = cur.matching;
    const bool norm_ok = m_0 != m_ref;
    auto norm = [&](double m) { return norm_ok ? normalized_matching(m, m_0, m_ref) : 0.0; };

    RegistrationResult res;
    res.energy_trace.push_back({0, cur.total, cur.regularization, cur.matching,
                                norm(cur.matching), cfg.epsilon0, true, 0});

    double eps = cfg.epsilon0;
    std::string stop;
    TimeVaryingVelocity grad_v;
    bool have_grad = false;

    for (int it = 1; it <= cfg.max_iterations; ++it) {
        if (!have_grad) {
            grad_v = gradient(v, I0, J1, cfg, kernel, matcher);
            have_grad = true;
            double gnorm = 0.0;
            for (const VectorField& s : grad_v.slices) gnorm = std::max(gnorm, s.max_norm());
            if (gnorm == 0.0) {
                stop = "stationary point";
                break;
            }
        }

        TimeVaryingVelocity trial = v;
        for (int j = 0; j < v.time_steps(); ++j)
            for (std::size_t i = 0; i < trial.slices[j].data.size(); ++i)
                trial.slices[j].data[i] -= eps * grad_v.slices[j].data[i];

        EnergyBreakdown et = energy(trial, I0, J1, cfg, kernel, matcher);
        bool accept = std::isfinite(et.total) && et.total < cur.total;
        if (accept) {
            double rel = (cur.total - et.total) / std::max(std::abs(cur.total), 1e-300);
            v = std::move(trial);
            cur = et;
            have_grad = false;
            res.energy_trace.push_back({it, cur.total, cur.regularization, cur.matching,
                                        norm(cur.matching), eps, true, 0});
            eps *= 1.05;
            if (rel < cfg.convergence_tol) {
                stop = "converged";
                res.converged = true;
                break;
            }
        } else {
            res.energy_trace.push_back({it, et.total, et.regularization, et.matching,
                                        std::isfinite(et.matching) ? norm(et.matching) : 0.0, eps,
                                        false, 0});
            eps *= 0.5;
            if (eps < 1e-8 * cfg.epsilon0) {
                stop = "step size underflow";
                break;
            }
        }
    }
    if (stop.empty()) stop = "max iterations";
    res.stop_reason = stop;

    res.velocity = std::move(v);
    res.forward_map = integrate_backward(res.velocity, res.velocity.time_steps() - 1);
    res.inverse_map = integrate_forward(res.velocity, 0);
    res.deformed_template = deform_image(I0, res.forward_map);
    return res;
}

double h1_seminorm(const TimeVaryingVelocity& v) {
    const ImageGrid& g = v.grid();
    const double vol = g.voxel_volume();
    std::vector<double> w = time_weights(v.time_steps());
    double acc = 0.0;
    for (int j = 0; j < v.time_steps(); ++j) {
        for (int c = 0; c < g.ndim; ++c) {
            ImageVolume comp(g);
            for (std::size_t i = 0; i < g.voxel_count(); ++i)
                comp.data[i] = v.slices[j].at(i, c);
            VectorField d = gradient(comp);
            acc += w[j] * field_inner(d, d) * vol;
        }
    }
    return std::sqrt(acc);
}

void write_energy_trace_csv(const std::string& path, const std::vector<IterationRecord>& trace) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << "iteration,E,R,M,normalized_M,epsilon,accepted,level\n";
    f.precision(17);
    for (const IterationRecord& r : trace)
        f << r.iteration << "," << r.energy << "," << r.regularization << "," << r.matching << ","
          << r.normalized_matching << "," << r.epsilon << "," << (r.accepted ? 1 : 0) << ","
          << r.level << "\n";
}

}  // namespace ldreg
