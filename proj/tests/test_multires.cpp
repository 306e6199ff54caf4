#include <doctest.h>

#include <cmath>

#include "ldreg/multires.hpp"
#include "ldreg/phantom.hpp"

using namespace ldreg;

TEST_CASE("schedule validation") {
    Schedule s;
    s.levels.push_back({{4.0, 4.0}, 0.05, 50});
    s.levels.push_back({{2.0, 2.0}, 0.02, 50});
    s.levels.push_back({{1.0, 1.0}, 0.01, 50});
    s.validate(2);

    Schedule bad;
    bad.levels.push_back({{1.0, 1.0}, 0.01, 50});
    bad.levels.push_back({{2.0, 2.0}, 0.01, 50});
    CHECK_THROWS(bad.validate(2));
    CHECK_THROWS(Schedule{}.validate(2));
}

TEST_CASE("grid_for_spacing preserves the physical extent") {
    ImageGrid native({64, 48}, {1.0, 1.0}, {0.0, 0.0});
    ImageGrid coarse = grid_for_spacing(native, {4.0, 4.0});
    for (int d = 0; d < 2; ++d) {
        double native_extent = (native.dims[d] - 1) * native.spacing[d];
        double coarse_extent = (coarse.dims[d] - 1) * coarse.spacing[d];
        CHECK(coarse_extent == doctest::Approx(native_extent).epsilon(1e-12));
    }
    CHECK(coarse.dims[0] < native.dims[0]);
}

TEST_CASE("upsample_velocity: constant, linear, identical-grid bitwise") {
    ImageGrid coarse({9, 9}, {2.0, 2.0}, {0.0, 0.0});
    ImageGrid fine({17, 17}, {1.0, 1.0}, {0.0, 0.0});

    TimeVaryingVelocity vc(coarse, 3);
    for (auto& s : vc.slices)
        for (std::size_t i = 0; i < coarse.voxel_count(); ++i) {
            s.at(i, 0) = 1.25;
            s.at(i, 1) = -0.5;
        }
    TimeVaryingVelocity vf = upsample_velocity(vc, fine);
    for (const auto& s : vf.slices)
        for (std::size_t i = 0; i < fine.voxel_count(); ++i) {
            CHECK(s.at(i, 0) == doctest::Approx(1.25).epsilon(1e-12));
            CHECK(s.at(i, 1) == doctest::Approx(-0.5).epsilon(1e-12));
        }

    TimeVaryingVelocity lin(coarse, 2);
    for (auto& s : lin.slices)
        for (std::size_t i = 0; i < coarse.voxel_count(); ++i) {
            auto idx = coarse.unlinear(i);
            s.at(i, 0) = 0.3 * (idx[0] * coarse.spacing[0]);  // linear in physical x
            s.at(i, 1) = 0.0;
        }
    TimeVaryingVelocity linf = upsample_velocity(lin, fine);
    for (std::size_t i = 0; i < fine.voxel_count(); ++i) {
        auto idx = fine.unlinear(i);
        CHECK(linf.slices[0].at(i, 0) ==
              doctest::Approx(0.3 * idx[0] * fine.spacing[0]).epsilon(1e-12));
    }

    TimeVaryingVelocity same = upsample_velocity(vc, coarse);
    for (int j = 0; j < 3; ++j)
        for (std::size_t i = 0; i < vc.slices[j].data.size(); ++i)
            CHECK(same.slices[j].data[i] == vc.slices[j].data[i]);

    ImageGrid wrong({9, 9}, {2.5, 2.5}, {0.0, 0.0});
    CHECK_THROWS(upsample_velocity(vc, wrong));
}

TEST_CASE("schedule JSON parsing") {
    ImageGrid native({64, 64}, {1.0, 1.0}, {0.0, 0.0});
    Schedule s = read_schedule_json(
        R"([{"spacing_factor": 4, "alpha": 0.05, "iterations": 30},
            {"spacing": [1.0, 1.0], "alpha": 0.01, "iterations": 60}])",
        native);
    REQUIRE(s.levels.size() == 2);
    CHECK(s.levels[0].spacing[0] == doctest::Approx(4.0));
    CHECK(s.levels[0].alpha == doctest::Approx(0.05));
    CHECK(s.levels[0].max_iterations == 30);
    CHECK(s.levels[1].spacing[1] == doctest::Approx(1.0));
    CHECK(s.levels[1].max_iterations == 60);
    CHECK_THROWS(read_schedule_json("not json", native));
}

TEST_CASE("single-level schedule matches plain register") {
    PhantomParams params;
    params.size = 32;
    params.offset = {2.0, 0.0};
    Phantom ph = make_phantom("blob", params);

    RegistrationConfig cfg;
    cfg.sigma = 0.02;
    cfg.kernel = {0.05, 1.0};
    cfg.time_steps = 6;
    cfg.epsilon0 = 0.5;
    cfg.max_iterations = 60;
    cfg.convergence_tol = 1e-6;

    Schedule s;
    s.levels.push_back({{}, cfg.kernel.alpha, cfg.max_iterations});
    MultiresResult mr = run_schedule(ph.template_img, ph.target_img, s, cfg);
    RegistrationResult plain = register_images(ph.template_img, ph.target_img, cfg);

    REQUIRE(mr.trace.size() == plain.energy_trace.size());
    for (std::size_t i = 0; i < mr.trace.size(); ++i) {
        CHECK(mr.trace[i].energy == plain.energy_trace[i].energy);
        CHECK(mr.trace[i].level == 0);
    }
    for (std::size_t i = 0; i < plain.forward_map.displacement.data.size(); ++i)
        CHECK(mr.result.forward_map.displacement.data[i] ==
              plain.forward_map.displacement.data[i]);
}

TEST_CASE("two-level schedule: final match no worse, cheaper fine level, continuous handoff") {
    PhantomParams params;
    params.size = 48;
    params.offset = {3.0, 0.0};
    Phantom ph = make_phantom("blob", params);

    RegistrationConfig cfg;
    cfg.sigma = 0.01;
    cfg.kernel = {0.2, 1.0};
    cfg.time_steps = 6;
    cfg.epsilon0 = 0.5;
    cfg.max_iterations = 200;
    cfg.convergence_tol = 1e-6;

    RegistrationResult single = register_images(ph.template_img, ph.target_img, cfg);

    Schedule s;
    s.levels.push_back({{2.0, 2.0}, 0.2, 200});
    s.levels.push_back({{1.0, 1.0}, 0.2, 200});
    MultiresResult mr = run_schedule(ph.template_img, ph.target_img, s, cfg);

    double target = single.energy_trace.back().matching + 1e-6;
    CHECK(mr.result.energy_trace.back().matching <= target);

    // fine-level iterations needed to reach the single run's final matching
    int fine_needed = 0, single_iters = 0;
    bool reached = false;
    for (const auto& rec : mr.trace) {
        if (rec.level != 1 || !rec.accepted || reached) continue;
        ++fine_needed;
        if (rec.matching <= target) reached = true;
    }
    for (const auto& rec : single.energy_trace)
        if (rec.accepted) ++single_iters;
    CHECK(reached);
    CHECK(fine_needed <= single_iters / 2);

    // handoff continuity: normalized matching at the start of the fine level
    // stays near the coarse level's final value
    double coarse_end = 0.0, fine_start = 0.0;
    for (std::size_t i = 0; i < mr.trace.size(); ++i) {
        if (mr.trace[i].level == 0 && mr.trace[i].accepted) coarse_end = mr.trace[i].normalized_matching;
        if (mr.trace[i].level == 1) {
            fine_start = mr.trace[i].normalized_matching;
            break;
        }
    }
    CHECK(std::abs(fine_start - coarse_end) < 0.05);

    CHECK(mr.level_seconds.size() == 2);
    for (double t : mr.level_seconds) CHECK(t >= 0.0);
}
