#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "geocloud/crpc.hpp"
#include "geocloud/geometry.hpp"
#include "geocloud/image.hpp"
#include "geocloud/pipeline.hpp"
#include "geocloud/synthgen.hpp"

namespace geocloud {

// Correspondence JSON:
//   {"M": int, "N": int, "images": [{"name", "width", "height"}],
//    "observations": [{"m", "n", "u", "v"}]}
// Throws ParseError (with the line number) on malformed input or duplicate
// cells and DimensionMismatch on indices or coordinates outside the header.
CorrespondenceSet parse_correspondences(const std::string& text);
std::string correspondences_to_json(const CorrespondenceSet& corr);
CorrespondenceSet load_correspondences(const std::filesystem::path& path);
void save_correspondences(const CorrespondenceSet& corr, const std::filesystem::path& path);

// Group JSON: {"points": [[x, y, z]], "cameras": [[12 row-major entries]],
// "anchors": [5 ints], "objective": real}. Non-finite entries are stored as null.
SolutionGroup load_group(const std::filesystem::path& path);
void save_group(const SolutionGroup& g, const std::filesystem::path& path,
                double objective_value = -1.0);

// Distances JSON: {"ids": [ints], "D": [[reals]]}.
DistanceMeasurements load_distances(const std::filesystem::path& path);
void save_distances(const DistanceMeasurements& d, const std::filesystem::path& path);

// Scene spec JSON with the SceneSpec field names; missing fields keep defaults.
SceneSpec parse_scene_spec(const std::string& text);
SceneSpec load_scene_spec(const std::filesystem::path& path);
void save_scene_spec(const SceneSpec& spec, const std::filesystem::path& path);

enum class PlyFormat { Ascii, BinaryLittleEndian };

// Vertex properties x, y, z, e_d (double), e_i, level (int). Throws EmptyData
// on an empty cloud without touching the file and IoError on write failure.
void export_ply(const PointCloud& pc, const std::filesystem::path& path,
                PlyFormat format = PlyFormat::BinaryLittleEndian);
// Reads the files written by export_ply; x, y and z may also be float.
PointCloud import_ply(const std::filesystem::path& path);

// PGM/PPM (P2, P3, P5, P6) or PNG; colour goes through 601 luma. Values in [0, 1].
GrayImage load_image(const std::filesystem::path& path);
// Binary 8-bit PGM.
void save_pgm(const GrayImage& img, const std::filesystem::path& path);
// 8-bit RGB PNG from row-major interleaved pixels.
void save_png_rgb(const std::vector<unsigned char>& rgb, int width, int height,
                  const std::filesystem::path& path);

}  // namespace geocloud
