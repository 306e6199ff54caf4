#include "ldreg/multires.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace ldreg {

void Schedule::validate(int ndim) const {
    if (levels.empty()) throw std::invalid_argument("schedule: need at least one level");
    for (const ScheduleLevel& l : levels) {
        if (!l.spacing.empty() && static_cast<int>(l.spacing.size()) != ndim)
            throw std::invalid_argument("schedule: spacing dimension mismatch");
        for (double s : l.spacing)
            if (!(s > 0.0)) throw std::invalid_argument("schedule: spacing must be > 0");
        if (l.max_iterations < 1) throw std::invalid_argument("schedule: iterations must be >= 1");
        if (l.alpha < 0.0) throw std::invalid_argument("schedule: alpha must be >= 0");
    }
    for (std::size_t k = 1; k < levels.size(); ++k) {
        if (levels[k].spacing.empty() || levels[k - 1].spacing.empty()) continue;
        for (int i = 0; i < ndim; ++i)
            if (levels[k].spacing[i] > levels[k - 1].spacing[i] + 1e-12)
                throw std::invalid_argument("schedule: spacings must be non-increasing");
    }
}

ImageGrid grid_for_spacing(const ImageGrid& native, const std::vector<double>& spacing) {
    if (spacing.empty()) return native;
    std::vector<int> dims(native.ndim);
    std::vector<double> sp(native.ndim), org(native.ndim);
    for (int i = 0; i < native.ndim; ++i) {
        double extent = (native.dims[i] - 1) * native.spacing[i];
        dims[i] = std::max(2, static_cast<int>(std::floor(extent / spacing[i] + 1e-9)) + 1);
        sp[i] = extent / (dims[i] - 1);
        org[i] = native.origin[i];
    }
    return ImageGrid(dims, sp, org);
}

TimeVaryingVelocity upsample_velocity(const TimeVaryingVelocity& v, const ImageGrid& target) {
    const ImageGrid& src = v.grid();
    if (src.ndim != target.ndim)
        throw std::invalid_argument("upsample_velocity: dimension mismatch");
    for (int i = 0; i < src.ndim; ++i) {
        double es = (src.dims[i] - 1) * src.spacing[i];
        double et = (target.dims[i] - 1) * target.spacing[i];
        if (std::abs(es - et) > 1e-6 * std::max(es, et))
            throw std::invalid_argument("upsample_velocity: physical extent mismatch");
    }
    if (src == target) return v;

    TimeVaryingVelocity out(target, v.time_steps());
    for (int j = 0; j < v.time_steps(); ++j) {
        const std::size_t n = target.voxel_count();
#pragma omp parallel for schedule(static)
        for (long long vox = 0; vox < static_cast<long long>(n); ++vox) {
            std::array<double, kMaxDim> p =
                target.point(target.unlinear(static_cast<std::size_t>(vox)));
            std::array<double, kMaxDim> val = interpolate_vector(v.slices[j], p);
            for (int c = 0; c < target.ndim; ++c)
                out.slices[j].at(static_cast<std::size_t>(vox), c) = val[c];
        }
    }
    return out;
}

MultiresResult run_schedule(const ImageVolume& I0, const ImageVolume& J1,
                            const Schedule& schedule, const RegistrationConfig& cfg) {
    schedule.validate(J1.grid.ndim);
    cfg.validate();

    MultiresResult mr;
    std::optional<TimeVaryingVelocity> v;
    for (std::size_t lvl = 0; lvl < schedule.levels.size(); ++lvl) {
        const ScheduleLevel& level = schedule.levels[lvl];
        ImageGrid g = grid_for_spacing(J1.grid, level.spacing);
        ImageVolume I = resample(I0, g);
        ImageVolume J = resample(J1, g);

        RegistrationConfig level_cfg = cfg;
        level_cfg.kernel.alpha = level.alpha;
        level_cfg.max_iterations = level.max_iterations;

        if (v) v = upsample_velocity(*v, g);

        auto t0 = std::chrono::steady_clock::now();
        RegistrationResult r = register_images(I, J, level_cfg, v);
        auto t1 = std::chrono::steady_clock::now();
        mr.level_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());

        // Renormalize against the level's zero-velocity baseline so the
        // concatenated trace is continuous across level handoffs; register's
        // own normalization pins the inherited start to 1.
        Matcher baseline(level_cfg.matcher);
        baseline.freeze_ranges(I, J);
        double m_0 = baseline.evaluate(I, J).value;
        double m_ref = baseline.evaluate(J, J).value;
        const bool norm_ok = m_0 != m_ref;
        for (IterationRecord rec : r.energy_trace) {
            rec.level = static_cast<int>(lvl);
            if (norm_ok && std::isfinite(rec.matching))
                rec.normalized_matching = (rec.matching - m_ref) / (m_0 - m_ref);
            mr.trace.push_back(rec);
        }
        v = r.velocity;
        mr.result = std::move(r);
    }
    return mr;
}

Schedule read_schedule_json(const std::string& text, const ImageGrid& native) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (!j.is_array()) throw std::runtime_error("schedule JSON must be an array of levels");
    Schedule s;
    for (const auto& e : j) {
        ScheduleLevel l;
        if (e.contains("spacing")) {
            l.spacing = e.at("spacing").get<std::vector<double>>();
        } else if (e.contains("spacing_factor")) {
            double f = e.at("spacing_factor").get<double>();
            for (int i = 0; i < native.ndim; ++i) l.spacing.push_back(native.spacing[i] * f);
        }
        l.alpha = e.value("alpha", l.alpha);
        l.max_iterations = e.value("iterations", l.max_iterations);
        s.levels.push_back(std::move(l));
    }
    s.validate(native.ndim);
    return s;
}

Schedule default_schedule(const ImageGrid& native, double alpha, int iterations_per_level) {
    Schedule s;
    for (double f : {8.0, 4.0, 2.0, 1.0}) {
        ScheduleLevel l;
        for (int i = 0; i < native.ndim; ++i) l.spacing.push_back(native.spacing[i] * f);
        l.alpha = alpha;
        l.max_iterations = iterations_per_level;
        s.levels.push_back(std::move(l));
    }
    return s;
}

}  // namespace ldreg
