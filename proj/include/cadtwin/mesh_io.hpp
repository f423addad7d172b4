#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cadtwin/mesh.hpp"

namespace cadtwin {

// Column-oriented PLY payload: named per-vertex scalar properties in file
// order plus an optional triangle list.
struct PlyData {
  std::vector<std::pair<std::string, std::vector<double>>> vertex_properties;
  std::vector<Face> faces;

  std::size_t vertex_count() const;
  const std::vector<double>* find(const std::string& name) const;
  const std::vector<double>& at(const std::string& name) const;
  void add(const std::string& name, std::vector<double> values);
};

// Binary little-endian PLY. Any scalar property type is accepted on read;
// properties are written as double so float64 data survives a round trip.
PlyData read_ply(const std::filesystem::path& path);
void write_ply(const std::filesystem::path& path, const PlyData& data);
PlyData read_ply(std::istream& in, const std::string& source);
void write_ply(std::ostream& out, const PlyData& data);

PlyData mesh_to_ply(const TriMesh& mesh);
TriMesh ply_to_mesh(const PlyData& data);

TriMesh read_obj(const std::filesystem::path& path);
void write_obj(const std::filesystem::path& path, const TriMesh& mesh);

// Dispatches on the extension (.ply or .obj).
TriMesh read_mesh(const std::filesystem::path& path);
void write_mesh(const std::filesystem::path& path, const TriMesh& mesh);

}  // namespace cadtwin
