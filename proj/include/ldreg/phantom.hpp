#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ldreg/flow.hpp"
#include "ldreg/grid.hpp"
#include "ldreg/io.hpp"

namespace ldreg {

/// Synthetic test-corpus generator: known ground truth at desk scale.
struct PhantomParams {
    int size = 128;
    int ndim = 2;
    std::vector<double> offset;     // translate, voxels (default 3,0[,0])
    double angle_deg = 15.0;        // swirl
    bool invert_contrast = false;   // apply max - J to the target
    int time_steps = 32;            // flow integration for warped kinds
    double noise = 0.0;             // additive Gaussian noise std, both images
    unsigned seed = 0;
};

struct Phantom {
    ImageVolume template_img;
    ImageVolume target_img;
    LandmarkSet template_landmarks;
    LandmarkSet target_landmarks;            // ground truth positions in the target
    std::optional<DeformationMap> true_map;  // pullback used to generate the target
};

/// kinds: "blob" (Gaussian pair, translated), "cshape" (textured scene,
/// identity pair), "translate" (textured scene, translated), "swirl"
/// (textured scene warped by the flow of a rotation field),
/// "invert-contrast" (target = max - template). Unknown kind throws with the
/// list of valid kinds.
Phantom make_phantom(const std::string& kind, const PhantomParams& params);

std::vector<std::string> phantom_kinds();

}  // namespace ldreg
