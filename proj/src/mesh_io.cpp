#include "cadtwin/mesh_io.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cadtwin/error.hpp"

namespace cadtwin {
namespace {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

enum class ScalarType { kInt8, kUInt8, kInt16, kUInt16, kInt32, kUInt32, kFloat32, kFloat64 };

ScalarType parse_type(const std::string& name) {
  if (name == "char" || name == "int8") return ScalarType::kInt8;
  if (name == "uchar" || name == "uint8") return ScalarType::kUInt8;
  if (name == "short" || name == "int16") return ScalarType::kInt16;
  if (name == "ushort" || name == "uint16") return ScalarType::kUInt16;
  if (name == "int" || name == "int32") return ScalarType::kInt32;
  if (name == "uint" || name == "uint32") return ScalarType::kUInt32;
  if (name == "float" || name == "float32") return ScalarType::kFloat32;
  if (name == "double" || name == "float64") return ScalarType::kFloat64;
  throw FormatError("ply: unknown scalar type '" + name + "'");
}

std::size_t type_size(ScalarType t) {
  switch (t) {
    case ScalarType::kInt8:
    case ScalarType::kUInt8: return 1;
    case ScalarType::kInt16:
    case ScalarType::kUInt16: return 2;
    case ScalarType::kInt32:
    case ScalarType::kUInt32:
    case ScalarType::kFloat32: return 4;
    case ScalarType::kFloat64: return 8;
  }
  return 0;
}

template <typename T>
T read_raw(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("ply: unexpected end of file");
  return v;
}

double read_scalar(std::istream& in, ScalarType t) {
  switch (t) {
    case ScalarType::kInt8: return read_raw<std::int8_t>(in);
    case ScalarType::kUInt8: return read_raw<std::uint8_t>(in);
    case ScalarType::kInt16: return read_raw<std::int16_t>(in);
    case ScalarType::kUInt16: return read_raw<std::uint16_t>(in);
    case ScalarType::kInt32: return read_raw<std::int32_t>(in);
    case ScalarType::kUInt32: return read_raw<std::uint32_t>(in);
    case ScalarType::kFloat32: return read_raw<float>(in);
    case ScalarType::kFloat64: return read_raw<double>(in);
  }
  return 0.0;
}

struct Property {
  std::string name;
  ScalarType type = ScalarType::kFloat64;
  bool is_list = false;
  ScalarType count_type = ScalarType::kUInt8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

}  // namespace

std::size_t PlyData::vertex_count() const {
  return vertex_properties.empty() ? 0 : vertex_properties.front().second.size();
}

const std::vector<double>* PlyData::find(const std::string& name) const {
  for (const auto& [n, values] : vertex_properties) {
    if (n == name) return &values;
  }
  return nullptr;
}

const std::vector<double>& PlyData::at(const std::string& name) const {
  const auto* v = find(name);
  if (!v) throw FormatError("ply: missing vertex property '" + name + "'");
  return *v;
}

void PlyData::add(const std::string& name, std::vector<double> values) {
  if (!vertex_properties.empty() && values.size() != vertex_count()) {
    throw ArgumentError("ply: property '" + name + "' has the wrong length");
  }
  vertex_properties.emplace_back(name, std::move(values));
}

PlyData read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_ply(in, path.string());
}

PlyData read_ply(std::istream& in, const std::string& source) {
  const std::filesystem::path path(source);
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw FormatError(path.string() + ": not a PLY file");
  std::vector<Element> elements;
  bool binary_le = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      binary_le = fmt == "binary_little_endian";
      if (!binary_le) throw FormatError(path.string() + ": only binary_little_endian PLY is supported");
    } else if (word == "element") {
      Element e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (word == "property") {
      if (elements.empty()) throw FormatError(path.string() + ": property before element");
      Property p;
      std::string t;
      ls >> t;
      if (t == "list") {
        std::string ct, it;
        ls >> ct >> it >> p.name;
        p.is_list = true;
        p.count_type = parse_type(ct);
        p.type = parse_type(it);
      } else {
        p.type = parse_type(t);
        ls >> p.name;
      }
      elements.back().properties.push_back(p);
    } else if (word == "end_header") {
      break;
    }
  }
  if (!binary_le) throw FormatError(path.string() + ": missing format line");

  PlyData data;
  for (const Element& e : elements) {
    if (e.name == "vertex") {
      std::vector<std::vector<double>> columns(e.properties.size(), std::vector<double>(e.count));
      for (std::size_t i = 0; i < e.count; ++i) {
        for (std::size_t p = 0; p < e.properties.size(); ++p) {
          if (e.properties[p].is_list) throw FormatError(path.string() + ": list vertex properties unsupported");
          columns[p][i] = read_scalar(in, e.properties[p].type);
        }
      }
      for (std::size_t p = 0; p < e.properties.size(); ++p) {
        data.vertex_properties.emplace_back(e.properties[p].name, std::move(columns[p]));
      }
    } else {
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const Property& p : e.properties) {
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(read_scalar(in, p.count_type));
            std::vector<int> idx(n);
            for (auto& v : idx) v = static_cast<int>(read_scalar(in, p.type));
            if (e.name == "face" && (p.name == "vertex_indices" || p.name == "vertex_index")) {
              for (std::size_t k = 1; k + 1 < n; ++k) data.faces.push_back({idx[0], idx[k], idx[k + 1]});
            }
          } else {
            in.seekg(static_cast<std::streamoff>(type_size(p.type)), std::ios::cur);
            if (!in) throw FormatError("ply: unexpected end of file");
          }
        }
      }
    }
  }
  return data;
}

void write_ply(const std::filesystem::path& path, const PlyData& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_ply(out, data);
  if (!out) throw IoError("write failed for " + path.string());
}

void write_ply(std::ostream& out, const PlyData& data) {
  const std::size_t n = data.vertex_count();
  out << "ply\nformat binary_little_endian 1.0\ncomment cadtwin\n";
  out << "element vertex " << n << "\n";
  for (const auto& [name, values] : data.vertex_properties) out << "property double " << name << "\n";
  if (!data.faces.empty()) {
    out << "element face " << data.faces.size() << "\nproperty list uchar int vertex_indices\n";
  }
  out << "end_header\n";
  std::vector<double> row(data.vertex_properties.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < row.size(); ++p) row[p] = data.vertex_properties[p].second[i];
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  for (const Face& f : data.faces) {
    const std::uint8_t three = 3;
    out.write(reinterpret_cast<const char*>(&three), 1);
    const std::int32_t idx[3] = {f[0], f[1], f[2]};
    out.write(reinterpret_cast<const char*>(idx), sizeof(idx));
  }
}

PlyData mesh_to_ply(const TriMesh& mesh) {
  PlyData data;
  std::vector<double> x, y, z;
  for (const Vec3& v : mesh.vertices) {
    x.push_back(v.x());
    y.push_back(v.y());
    z.push_back(v.z());
  }
  data.add("x", std::move(x));
  data.add("y", std::move(y));
  data.add("z", std::move(z));
  if (mesh.has_uv()) {
    std::vector<double> u, v;
    for (const Vec2& t : mesh.uv) {
      u.push_back(t.x());
      v.push_back(t.y());
    }
    data.add("u", std::move(u));
    data.add("v", std::move(v));
  }
  data.faces = mesh.faces;
  return data;
}

TriMesh ply_to_mesh(const PlyData& data) {
  TriMesh mesh;
  const auto& x = data.at("x");
  const auto& y = data.at("y");
  const auto& z = data.at("z");
  mesh.vertices.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) mesh.vertices[i] = Vec3(x[i], y[i], z[i]);
  const auto* u = data.find("u") ? data.find("u") : data.find("s");
  const auto* v = data.find("v") ? data.find("v") : data.find("t");
  if (u && v) {
    mesh.uv.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) mesh.uv[i] = Vec2((*u)[i], (*v)[i]);
  }
  mesh.faces = data.faces;
  mesh.validate();
  return mesh;
}

TriMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  TriMesh mesh;
  std::vector<Vec2> texcoords;
  std::vector<int> uv_of_vertex;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3 p;
      ls >> p.x() >> p.y() >> p.z();
      mesh.vertices.push_back(p);
    } else if (tag == "vt") {
      Vec2 t;
      ls >> t.x() >> t.y();
      texcoords.push_back(t);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string token;
      while (ls >> token) {
        const auto slash = token.find('/');
        int vi = std::stoi(token.substr(0, slash));
        if (vi < 0) vi += static_cast<int>(mesh.vertices.size()) + 1;
        idx.push_back(vi - 1);
        if (slash != std::string::npos && slash + 1 < token.size() && token[slash + 1] != '/') {
          int ti = std::stoi(token.substr(slash + 1));
          if (ti < 0) ti += static_cast<int>(texcoords.size()) + 1;
          if (uv_of_vertex.size() < mesh.vertices.size()) uv_of_vertex.resize(mesh.vertices.size(), -1);
          if (uv_of_vertex[vi - 1] < 0) uv_of_vertex[vi - 1] = ti - 1;
        }
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  if (!texcoords.empty()) {
    uv_of_vertex.resize(mesh.vertices.size(), -1);
    mesh.uv.resize(mesh.vertices.size(), Vec2::Zero());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
      if (uv_of_vertex[i] >= 0 && uv_of_vertex[i] < static_cast<int>(texcoords.size())) {
        mesh.uv[i] = texcoords[uv_of_vertex[i]];
      }
    }
  }
  mesh.validate();
  return mesh;
}

void write_obj(const std::filesystem::path& path, const TriMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(17);
  for (const Vec3& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const Vec2& t : mesh.uv) out << "vt " << t.x() << ' ' << t.y() << '\n';
  for (const Face& f : mesh.faces) {
    out << 'f';
    for (int i : f) {
      out << ' ' << i + 1;
      if (mesh.has_uv()) out << '/' << i + 1;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

TriMesh read_mesh(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".ply") return ply_to_mesh(read_ply(path));
  if (ext == ".obj") return read_obj(path);
  throw FormatError("unsupported mesh extension '" + ext + "'");
}

void write_mesh(const std::filesystem::path& path, const TriMesh& mesh) {
  const auto ext = path.extension().string();
  if (ext == ".ply") return write_ply(path, mesh_to_ply(mesh));
  if (ext == ".obj") return write_obj(path, mesh);
  throw FormatError("unsupported mesh extension '" + ext + "'");
}

}  // namespace cadtwin
