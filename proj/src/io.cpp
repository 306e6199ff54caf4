#include "ldreg/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ldreg {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "raw volume I/O assumes a little-endian host");

void write_raw_f32(const std::string& path, const std::vector<double>& data) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    std::vector<float> buf(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) buf[i] = static_cast<float>(data[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<double> read_raw_f32(const std::string& path, std::size_t count) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::vector<float> buf(count);
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(count * sizeof(float)));
    if (static_cast<std::size_t>(f.gcount()) != count * sizeof(float))
        throw std::runtime_error("raw file too short: " + path);
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = buf[i];
    return out;
}

json grid_header(const ImageGrid& g) {
    json h;
    h["dims"] = std::vector<int>(g.dims.begin(), g.dims.begin() + g.ndim);
    h["spacing"] = std::vector<double>(g.spacing.begin(), g.spacing.begin() + g.ndim);
    h["origin"] = std::vector<double>(g.origin.begin(), g.origin.begin() + g.ndim);
    h["dtype"] = "f32";
    h["order"] = "x-fastest";
    return h;
}

ImageGrid grid_from_header(const json& h) {
    return ImageGrid(h.at("dims").get<std::vector<int>>(),
                     h.at("spacing").get<std::vector<double>>(),
                     h.at("origin").get<std::vector<double>>());
}

json read_header(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    json h;
    f >> h;
    if (h.value("dtype", "") != "f32") throw std::runtime_error("unsupported dtype in " + path);
    if (h.value("order", "") != "x-fastest")
        throw std::runtime_error("unsupported order in " + path);
    return h;
}

}  // namespace

void write_volume(const std::string& path_base, const ImageVolume& img) {
    std::ofstream f(path_base + ".json");
    if (!f) throw std::runtime_error("cannot open for write: " + path_base + ".json");
    f << grid_header(img.grid).dump(2) << "\n";
    write_raw_f32(path_base + ".raw", img.data);
}

ImageVolume read_volume(const std::string& path_base) {
    json h = read_header(path_base + ".json");
    if (h.contains("components"))
        throw std::runtime_error(path_base + " is a vector field, not a scalar volume");
    ImageVolume img(grid_from_header(h));
    img.data = read_raw_f32(path_base + ".raw", img.grid.voxel_count());
    return img;
}

void write_field(const std::string& path_base, const VectorField& field) {
    json h = grid_header(field.grid);
    h["components"] = field.grid.ndim;
    std::ofstream f(path_base + ".json");
    if (!f) throw std::runtime_error("cannot open for write: " + path_base + ".json");
    f << h.dump(2) << "\n";
    write_raw_f32(path_base + ".raw", field.data);
}

VectorField read_field(const std::string& path_base) {
    json h = read_header(path_base + ".json");
    ImageGrid g = grid_from_header(h);
    if (h.value("components", -1) != g.ndim)
        throw std::runtime_error("bad components count in " + path_base);
    VectorField f(g);
    f.data = read_raw_f32(path_base + ".raw", g.voxel_count() * g.ndim);
    return f;
}

void write_map(const std::string& path_base, const DeformationMap& map) {
    write_field(path_base, map.displacement);
}

DeformationMap read_map(const std::string& path_base) {
    DeformationMap m;
    m.displacement = read_field(path_base);
    return m;
}

void write_pgm(const std::string& path, const ImageVolume& img) {
    if (img.grid.ndim != 2) throw std::invalid_argument("write_pgm: 2D images only");
    double lo = img.min_value(), hi = img.max_value();
    double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << "P5\n" << img.grid.dims[0] << " " << img.grid.dims[1] << "\n255\n";
    // PGM rows top to bottom; emit y ascending, x fastest.
    for (int y = 0; y < img.grid.dims[1]; ++y) {
        for (int x = 0; x < img.grid.dims[0]; ++x) {
            double v = img.data[img.grid.linear({x, y, 0})];
            f.put(static_cast<char>(static_cast<unsigned char>(
                std::lround((v - lo) * scale))));
        }
    }
}

void write_landmarks(const std::string& path, const LandmarkSet& lm) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << (lm.ndim == 3 ? "label,x,y,z\n" : "label,x,y\n");
    f.precision(17);
    for (const Landmark& p : lm.points) {
        f << p.label;
        for (int i = 0; i < lm.ndim; ++i) f << "," << p.point[i];
        f << "\n";
    }
}

LandmarkSet read_landmarks(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("empty landmark file: " + path);
    int ncols = 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
    LandmarkSet lm;
    lm.ndim = ncols - 1;
    if (lm.ndim < 2 || lm.ndim > 3)
        throw std::runtime_error("landmark header must be label,x,y[,z]: " + path);
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        Landmark p;
        std::string tok;
        if (!std::getline(ss, p.label, ',')) continue;
        for (int i = 0; i < lm.ndim; ++i) {
            if (!std::getline(ss, tok, ','))
                throw std::runtime_error("short landmark row in " + path);
            p.point[i] = std::stod(tok);
            if (!std::isfinite(p.point[i]))
                throw std::runtime_error("non-finite landmark in " + path);
        }
        lm.points.push_back(std::move(p));
    }
    return lm;
}

}  // namespace ldreg
