#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "pc2wf/core.hpp"

namespace pc2wf {

// Point cloud text format: one "x y z" line per point. Blank lines and lines
// starting with '#' are ignored.
PointCloud read_cloud(const std::filesystem::path& path);
void write_cloud(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud parse_cloud(std::string_view text, const std::string& source = {});

// Feature sidecar: one whitespace-separated row of reals per point.
Matrix read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const Matrix& features);

// Wireframe JSON: {"vertices": [[x,y,z],...], "edges": [[i,j],...]} with
// optional "vertex_scores" / "edge_scores" arrays.
Wireframe parse_wireframe_json(std::string_view text);
ScoredWireframe parse_scored_wireframe_json(std::string_view text);
std::string wireframe_to_json(const Wireframe& wf);
std::string wireframe_to_json(const ScoredWireframe& wf);

Wireframe read_wireframe_json(const std::filesystem::path& path);
ScoredWireframe read_scored_wireframe_json(const std::filesystem::path& path);
void write_wireframe_json(const std::filesystem::path& path, const Wireframe& wf);
void write_wireframe_json(const std::filesystem::path& path, const ScoredWireframe& wf);

// OBJ export: "v" lines followed by "l" lines (1-based indices).
void write_obj(const std::filesystem::path& path, const Wireframe& wf);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace pc2wf
