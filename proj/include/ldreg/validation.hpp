#pragma once

#include <vector>

#include "ldreg/grid.hpp"
#include "ldreg/io.hpp"

namespace ldreg {

struct TransformedLandmarks {
    LandmarkSet points;
    std::vector<std::string> out_of_extent;  // labels dropped with a warning
};

/// Applies the given map directly as a point map: p -> p + u(p). Note the
/// direction convention: deform_image treats its map as a pullback
/// (output(x) = I(map(x))), so points move through the *inverse* of the map
/// used to resample the image. Pass phi_{0,1} for points when phi_{1,0} was
/// used for the image.
TransformedLandmarks transform_landmarks(const LandmarkSet& lm, const DeformationMap& map);

struct LandmarkError {
    double mean = 0.0;
    std::vector<std::pair<std::string, double>> per_label;
};

/// Euclidean distances per matching label; throws when label sets differ.
LandmarkError landmark_error(const LandmarkSet& a, const LandmarkSet& b);

/// Alternating tiles from a and b by parity of sum_i floor(index_i / tile).
ImageVolume checkerboard(const ImageVolume& a, const ImageVolume& b, int tile);

/// Binary image of every stride-th coordinate line pushed through phi
/// (forward-mapped line samples rasterized to the nearest voxel).
ImageVolume deformation_grid_image(const DeformationMap& map, int stride);

}  // namespace ldreg
