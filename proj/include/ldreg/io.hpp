#pragma once

#include <string>
#include <vector>

#include "ldreg/grid.hpp"

namespace ldreg {

// Volume file format: <path>.json header
//   {"dims":[...], "spacing":[...], "origin":[...], "dtype":"f32",
//    "order":"x-fastest"}
// plus <path>.raw of little-endian 32-bit floats, x fastest. Vector fields add
// "components": N and interleave components per voxel.

void write_volume(const std::string& path_base, const ImageVolume& img);
ImageVolume read_volume(const std::string& path_base);

void write_field(const std::string& path_base, const VectorField& field);
VectorField read_field(const std::string& path_base);

void write_map(const std::string& path_base, const DeformationMap& map);
DeformationMap read_map(const std::string& path_base);

/// 8-bit PGM export of a 2D image (values linearly rescaled to 0..255).
void write_pgm(const std::string& path, const ImageVolume& img);

struct Landmark {
    std::string label;
    std::array<double, kMaxDim> point{};
};

struct LandmarkSet {
    int ndim = 0;
    std::vector<Landmark> points;
};

// CSV with header "label,x,y[,z]", physical units.
void write_landmarks(const std::string& path, const LandmarkSet& lm);
LandmarkSet read_landmarks(const std::string& path);

}  // namespace ldreg
