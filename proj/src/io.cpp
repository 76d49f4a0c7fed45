#include "geocloud/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <nlohmann/json.hpp>
#include <sstream>

#include "geocloud/error.hpp"

namespace geocloud {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "binary PLY assumes a little-endian host");

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

int line_of(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + int(std::count(text.begin(), text.begin() + std::ptrdiff_t(offset), '\n'));
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // byte is one past the offending character.
    const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
    throw Error(ErrorCode::ParseError,
                what + " line " + std::to_string(line_of(text, at)) + ": " + e.what());
  }
}

// Line of the k-th object inside the array following key; observation
// objects hold no nested braces.
int line_of_element(const std::string& text, const std::string& key, std::size_t k) {
  std::size_t pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return 0;
  for (std::size_t i = 0; i <= k; ++i) {
    pos = text.find('{', pos + 1);
    if (pos == std::string::npos) return 0;
  }
  return line_of(text, pos);
}

template <typename T>
T get_field(const json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key)) throw Error(ErrorCode::ParseError, ctx + ": missing \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, ctx + ": bad \"" + key + "\": " + e.what());
  }
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_nan(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!j.is_number()) throw Error(ErrorCode::ParseError, "expected a number or null");
  return j.get<double>();
}

}  // namespace

CorrespondenceSet parse_correspondences(const std::string& text) {
  const json j = parse_json(text, "correspondences");
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "correspondences line 1: expected an object");
  const int M = get_field<int>(j, "M", "correspondences");
  const int N = get_field<int>(j, "N", "correspondences");
  if (M <= 0 || N <= 0) throw Error(ErrorCode::DimensionMismatch, "M and N must be positive");
  CorrespondenceSet corr(M, N);
  if (j.contains("images")) {
    const auto& imgs = j.at("images");
    if (!imgs.is_array()) throw Error(ErrorCode::ParseError, "\"images\" must be an array");
    if (!imgs.empty() && int(imgs.size()) != N)
      throw Error(ErrorCode::DimensionMismatch,
                  "header declares " + std::to_string(N) + " images but lists " +
                      std::to_string(imgs.size()));
    for (const auto& im : imgs) {
      ImageInfo info;
      info.name = im.value("name", std::string());
      info.width = im.value("width", 0);
      info.height = im.value("height", 0);
      corr.images.push_back(info);
    }
  }
  const auto obs = j.contains("observations") ? j.at("observations") : json::array();
  if (!obs.is_array()) throw Error(ErrorCode::ParseError, "\"observations\" must be an array");
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const int line = line_of_element(text, "observations", k);
    const std::string ctx = "observation " + std::to_string(k) + " (line " + std::to_string(line) + ")";
    const auto& o = obs[k];
    if (!o.is_object()) throw Error(ErrorCode::ParseError, ctx + ": expected an object");
    const int m = get_field<int>(o, "m", ctx), n = get_field<int>(o, "n", ctx);
    const double u = get_field<double>(o, "u", ctx), v = get_field<double>(o, "v", ctx);
    if (m < 0 || m >= M || n < 0 || n >= N)
      throw Error(ErrorCode::DimensionMismatch, ctx + ": index outside M x N");
    if (!std::isfinite(u) || !std::isfinite(v))
      throw Error(ErrorCode::ParseError, ctx + ": non-finite coordinate");
    if (!corr.images.empty()) {
      const auto& info = corr.images[n];
      if (info.width > 0 && info.height > 0 &&
          (u < 0 || u > info.width || v < 0 || v > info.height))
        throw Error(ErrorCode::DimensionMismatch, ctx + ": point outside the declared image");
    }
    if (corr.visible(m, n))
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": duplicate cell (" +
                                             std::to_string(m) + ", " + std::to_string(n) + ")");
    corr.set(m, n, Vec2(u, v));
  }
  return corr;
}

std::string correspondences_to_json(const CorrespondenceSet& corr) {
  // One observation per line keeps the files diffable and line numbers meaningful.
  std::ostringstream out;
  out << "{\n  \"M\": " << corr.M() << ",\n  \"N\": " << corr.N() << ",\n  \"images\": [";
  for (std::size_t i = 0; i < corr.images.size(); ++i) {
    const auto& im = corr.images[i];
    out << (i ? ",\n    " : "\n    ")
        << json{{"name", im.name}, {"width", im.width}, {"height", im.height}}.dump();
  }
  out << (corr.images.empty() ? "" : "\n  ") << "],\n  \"observations\": [";
  bool first = true;
  for (int m = 0; m < corr.M(); ++m)
    for (int n = 0; n < corr.N(); ++n) {
      if (!corr.visible(m, n)) continue;
      const Vec2& x = corr.at(m, n);
      out << (first ? "\n    " : ",\n    ")
          << json{{"m", m}, {"n", n}, {"u", x.x()}, {"v", x.y()}}.dump();
      first = false;
    }
  out << (first ? "" : "\n  ") << "]\n}\n";
  return out.str();
}

CorrespondenceSet load_correspondences(const std::filesystem::path& path) {
  return parse_correspondences(read_file(path));
}

void save_correspondences(const CorrespondenceSet& corr, const std::filesystem::path& path) {
  write_file(path, correspondences_to_json(corr));
}

SolutionGroup load_group(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const json j = parse_json(text, "group");
  SolutionGroup g;
  try {
    for (const auto& p : j.at("points")) {
      if (p.size() != 3) throw Error(ErrorCode::ParseError, "group: points need 3 entries");
      g.points.emplace_back(number_or_nan(p[0]), number_or_nan(p[1]), number_or_nan(p[2]));
    }
    for (const auto& c : j.at("cameras")) {
      if (c.size() != 12) throw Error(ErrorCode::ParseError, "group: cameras need 12 entries");
      Mat34 P;
      for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 4; ++k) P(r, k) = number_or_nan(c[std::size_t(r * 4 + k)]);
      g.cameras.push_back(P);
    }
    if (j.contains("anchors")) {
      const auto a = j.at("anchors").get<std::vector<int>>();
      if (a.size() != 5) throw Error(ErrorCode::ParseError, "group: anchors need 5 entries");
      std::copy(a.begin(), a.end(), g.anchors.begin());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("group: ") + e.what());
  }
  return g;
}

void save_group(const SolutionGroup& g, const std::filesystem::path& path, double objective_value) {
  json j;
  j["points"] = json::array();
  for (const auto& X : g.points)
    j["points"].push_back({number_or_null(X.x()), number_or_null(X.y()), number_or_null(X.z())});
  j["cameras"] = json::array();
  for (const auto& P : g.cameras) {
    json row = json::array();
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 4; ++k) row.push_back(number_or_null(P(r, k)));
    j["cameras"].push_back(row);
  }
  j["anchors"] = std::vector<int>(g.anchors.begin(), g.anchors.end());
  if (objective_value >= 0) j["objective"] = objective_value;
  write_file(path, j.dump(1) + "\n");
}

DistanceMeasurements load_distances(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const json j = parse_json(text, "distances");
  DistanceMeasurements d;
  try {
    d.ids = j.at("ids").get<std::vector<int>>();
    const auto rows = j.at("D").get<std::vector<std::vector<double>>>();
    const std::size_t k = d.ids.size();
    if (rows.size() != k) throw Error(ErrorCode::DimensionMismatch, "distances: D must be k x k");
    d.D.resize(Eigen::Index(k), Eigen::Index(k));
    for (std::size_t r = 0; r < k; ++r) {
      if (rows[r].size() != k) throw Error(ErrorCode::DimensionMismatch, "distances: D must be k x k");
      for (std::size_t c = 0; c < k; ++c) d.D(Eigen::Index(r), Eigen::Index(c)) = rows[r][c];
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("distances: ") + e.what());
  }
  return d;
}

void save_distances(const DistanceMeasurements& d, const std::filesystem::path& path) {
  json j;
  j["ids"] = d.ids;
  j["D"] = json::array();
  for (Eigen::Index r = 0; r < d.D.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < d.D.cols(); ++c) row.push_back(d.D(r, c));
    j["D"].push_back(row);
  }
  write_file(path, j.dump(1) + "\n");
}

SceneSpec parse_scene_spec(const std::string& text) {
  const json j = parse_json(text, "scene spec");
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "scene spec: expected an object");
  SceneSpec s;
  try {
    s.seed = j.value("seed", s.seed);
    s.M = j.value("M", s.M);
    s.N = j.value("N", s.N);
    s.sigma = j.value("sigma", s.sigma);
    if (j.contains("surface")) s.surface = surface_kind_from_string(j.at("surface").get<std::string>());
    s.radius = j.value("radius", s.radius);
    s.height = j.value("height", s.height);
    s.width = j.value("width", s.width);
    s.height_px = j.value("height_px", s.height_px);
    s.ring_distance = j.value("ring_distance", s.ring_distance);
    s.arc_deg = j.value("arc_deg", s.arc_deg);
    s.elevation_jitter = j.value("elevation_jitter", s.elevation_jitter);
    s.point_arc_deg = j.value("point_arc_deg", s.point_arc_deg);
    s.point_height_frac = j.value("point_height_frac", s.point_height_frac);
    s.textured = j.value("textured", s.textured);
    s.feature_size = j.value("feature_size", s.feature_size);
    s.marks = j.value("marks", s.marks);
    s.mark_radius = j.value("mark_radius", s.mark_radius);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("scene spec: ") + e.what());
  }
  return s;
}

SceneSpec load_scene_spec(const std::filesystem::path& path) { return parse_scene_spec(read_file(path)); }

void save_scene_spec(const SceneSpec& s, const std::filesystem::path& path) {
  json j{{"seed", s.seed},
         {"M", s.M},
         {"N", s.N},
         {"sigma", s.sigma},
         {"surface", to_string(s.surface)},
         {"radius", s.radius},
         {"height", s.height},
         {"width", s.width},
         {"height_px", s.height_px},
         {"ring_distance", s.ring_distance},
         {"arc_deg", s.arc_deg},
         {"elevation_jitter", s.elevation_jitter},
         {"point_arc_deg", s.point_arc_deg},
         {"point_height_frac", s.point_height_frac},
         {"textured", s.textured},
         {"feature_size", s.feature_size},
         {"marks", s.marks},
         {"mark_radius", s.mark_radius}};
  write_file(path, j.dump(1) + "\n");
}

// PLY

void export_ply(const PointCloud& pc, const std::filesystem::path& path, PlyFormat format) {
  if (pc.empty()) throw Error(ErrorCode::EmptyData, "refusing to write an empty cloud");
  std::ostringstream out;
  out << "ply\nformat " << (format == PlyFormat::Ascii ? "ascii" : "binary_little_endian")
      << " 1.0\nelement vertex " << pc.size()
      << "\nproperty double x\nproperty double y\nproperty double z\nproperty double e_d\n"
         "property int e_i\nproperty int level\nend_header\n";
  if (format == PlyFormat::Ascii) {
    char buf[160];
    for (const auto& p : pc) {
      std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %d %d\n", p.position.x(),
                    p.position.y(), p.position.z(), p.e_d, p.e_i, p.level);
      out << buf;
    }
  } else {
    for (const auto& p : pc) {
      const double d[4] = {p.position.x(), p.position.y(), p.position.z(), p.e_d};
      const std::int32_t i[2] = {p.e_i, p.level};
      out.write(reinterpret_cast<const char*>(d), sizeof d);
      out.write(reinterpret_cast<const char*>(i), sizeof i);
    }
  }
  write_file(path, out.str());
}

PointCloud import_ply(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  const std::size_t end = data.find("end_header\n");
  if (data.rfind("ply\n", 0) != 0 || end == std::string::npos)
    throw Error(ErrorCode::ParseError, path.string() + ": not a PLY file");
  std::istringstream hdr(data.substr(0, end));
  std::string line;
  bool ascii = false, in_vertex = false;
  std::size_t count = 0;
  struct Prop {
    std::string name, type;
  };
  std::vector<Prop> props;
  int lineno = 0;
  while (std::getline(hdr, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string f;
      ls >> f;
      if (f == "ascii") ascii = true;
      else if (f != "binary_little_endian")
        throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": unsupported format " + f);
    } else if (word == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex) ls >> count;
      else throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": unexpected element " + name);
    } else if (word == "property" && in_vertex) {
      Prop p;
      ls >> p.type >> p.name;
      props.push_back(p);
    }
  }
  auto size_of = [](const std::string& t) -> std::size_t {
    if (t == "double" || t == "float64") return 8;
    if (t == "float" || t == "float32" || t == "int" || t == "int32") return 4;
    throw Error(ErrorCode::ParseError, "unsupported PLY property type " + t);
  };
  PointCloud pc(count);
  auto assign = [](CloudPoint& p, const std::string& name, double v) {
    if (name == "x") p.position.x() = v;
    else if (name == "y") p.position.y() = v;
    else if (name == "z") p.position.z() = v;
    else if (name == "e_d") p.e_d = v;
    else if (name == "e_i") p.e_i = int(v);
    else if (name == "level") p.level = int(v);
  };
  const std::size_t body = end + std::strlen("end_header\n");
  if (ascii) {
    std::istringstream in(data.substr(body));
    for (std::size_t i = 0; i < count; ++i)
      for (const auto& pr : props) {
        double v;
        if (!(in >> v))
          throw Error(ErrorCode::ParseError, "vertex " + std::to_string(i) + ": truncated record");
        assign(pc[i], pr.name, v);
      }
  } else {
    std::size_t stride = 0;
    for (const auto& pr : props) stride += size_of(pr.type);
    if (data.size() - body != stride * count)
      throw Error(ErrorCode::ParseError, "vertex payload size does not match the header count");
    const char* ptr = data.data() + body;
    for (std::size_t i = 0; i < count; ++i)
      for (const auto& pr : props) {
        double v;
        if (pr.type == "double" || pr.type == "float64") {
          std::memcpy(&v, ptr, 8);
          ptr += 8;
        } else if (pr.type == "float" || pr.type == "float32") {
          float f;
          std::memcpy(&f, ptr, 4);
          v = f;
          ptr += 4;
        } else {
          std::int32_t k;
          std::memcpy(&k, ptr, 4);
          v = k;
          ptr += 4;
        }
        assign(pc[i], pr.name, v);
      }
  }
  return pc;
}

// Images

namespace {

float luma(double r, double g, double b) { return float(0.299 * r + 0.587 * g + 0.114 * b); }

GrayImage load_pnm(const std::string& data, const std::string& name) {
  std::size_t pos = 0;
  // Next whitespace-separated header token, skipping comments.
  auto token = [&]() {
    while (pos < data.size()) {
      if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    if (start == pos) throw Error(ErrorCode::ParseError, name + ": truncated header");
    return data.substr(start, pos - start);
  };
  const std::string magic = token();
  if (magic != "P2" && magic != "P3" && magic != "P5" && magic != "P6")
    throw Error(ErrorCode::ParseError, name + ": unsupported image type " + magic);
  int W = 0, H = 0, maxval = 0;
  try {
    W = std::stoi(token());
    H = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::ParseError, name + ": bad header");
  }
  if (W <= 0 || H <= 0 || maxval <= 0 || maxval > 65535)
    throw Error(ErrorCode::ParseError, name + ": bad header values");
  const bool colour = magic == "P3" || magic == "P6";
  const bool binary = magic == "P5" || magic == "P6";
  const int channels = colour ? 3 : 1;
  const std::size_t samples = std::size_t(W) * H * channels;
  std::vector<double> v(samples);
  if (binary) {
    ++pos;  // single whitespace after maxval
    const std::size_t bytes = maxval < 256 ? 1 : 2;
    if (data.size() < pos + samples * bytes) throw Error(ErrorCode::ParseError, name + ": truncated data");
    for (std::size_t i = 0; i < samples; ++i) {
      const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos + i * bytes);
      v[i] = bytes == 1 ? p[0] : (p[0] << 8 | p[1]);
    }
  } else {
    for (std::size_t i = 0; i < samples; ++i) {
      try {
        v[i] = std::stod(token());
      } catch (const std::logic_error&) {
        throw Error(ErrorCode::ParseError, name + ": bad sample");
      }
    }
  }
  GrayImage img(H, W);
  for (std::size_t i = 0; i < std::size_t(W) * H; ++i)
    img.data[i] = colour ? luma(v[3 * i], v[3 * i + 1], v[3 * i + 2]) / float(maxval)
                         : float(v[i] / maxval);
  return img;
}

GrayImage load_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw Error(ErrorCode::ParseError, path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorCode::ParseError, path.string() + ": " + image.message);
  }
  GrayImage img(int(image.height), int(image.width));
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = luma(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]) / 255.0f;
  return img;
}

}  // namespace

GrayImage load_image(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return load_png(path);
  return load_pnm(read_file(path), path.string());
}

void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "P5\n" << img.W << ' ' << img.H << "\n255\n";
  std::string px(img.data.size(), '\0');
  for (std::size_t i = 0; i < img.data.size(); ++i)
    px[i] = char(std::lround(std::clamp(img.data[i], 0.0f, 1.0f) * 255.0f));
  out << px;
  write_file(path, out.str());
}

void save_png_rgb(const std::vector<unsigned char>& rgb, int width, int height,
                  const std::filesystem::path& path) {
  if (rgb.size() != std::size_t(width) * height * 3)
    throw Error(ErrorCode::DimensionMismatch, "pixel buffer does not match the image size");
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = png_uint_32(width);
  image.height = png_uint_32(height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, rgb.data(), 0, nullptr))
    throw Error(ErrorCode::IoError, path.string() + ": " + image.message);
}

}  // namespace geocloud
