#include "pc2wf/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace pc2wf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Shortest representation that round-trips exactly.
void append_number(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

bool parse_double(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> toks;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) toks.push_back(line.substr(i, j - i));
    i = j;
  }
  return toks;
}

template <typename F>
void for_each_data_line(std::string_view text, F&& fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    auto toks = split_ws(line);
    if (toks.empty() || toks.front().front() == '#') continue;
    fn(line_no, toks);
  }
}

Vec3 json_point(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw ParseError(what + " is not an [x, y, z] triple");
  Vec3 p;
  for (int k = 0; k < 3; ++k) {
    if (!j[k].is_number()) throw ParseError(what + " has a non-numeric coordinate");
    p[k] = j[k].get<double>();
  }
  return p;
}

std::vector<double> json_scores(const json& doc, const char* key, std::size_t expected) {
  std::vector<double> out;
  if (!doc.contains(key)) return std::vector<double>(expected, 1.0);
  const json& arr = doc.at(key);
  if (!arr.is_array() || arr.size() != expected) {
    throw ParseError(std::string(key) + " must have " + std::to_string(expected) + " entries");
  }
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) {
      throw ParseError(std::string(key) + "[" + std::to_string(i) + "] is not a number");
    }
    out.push_back(arr[i].get<double>());
  }
  return out;
}

struct ParsedWireframe {
  Wireframe wf;
  json doc;
};

ParsedWireframe parse_wireframe_doc(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("wireframe JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("vertices") || !doc.contains("edges")) {
    throw ParseError("wireframe JSON must be an object with 'vertices' and 'edges'");
  }
  const json& jv = doc.at("vertices");
  const json& je = doc.at("edges");
  if (!jv.is_array() || !je.is_array()) throw ParseError("'vertices' and 'edges' must be arrays");

  std::vector<Vec3> vertices;
  vertices.reserve(jv.size());
  for (std::size_t i = 0; i < jv.size(); ++i) {
    vertices.push_back(json_point(jv[i], "vertex " + std::to_string(i)));
  }
  std::vector<Edge> edges;
  edges.reserve(je.size());
  for (std::size_t k = 0; k < je.size(); ++k) {
    const json& e = je[k];
    std::string what = "edge " + std::to_string(k);
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
        !e[1].is_number_integer()) {
      throw ParseError(what + " is not an [i, j] index pair");
    }
    long long i = e[0].get<long long>(), j = e[1].get<long long>();
    for (long long idx : {i, j}) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= vertices.size()) {
        throw ParseError(what + " [" + std::to_string(i) + ", " + std::to_string(j) +
                         "] references vertex " + std::to_string(idx) + " but only " +
                         std::to_string(vertices.size()) + " vertices exist");
      }
    }
    edges.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  }
  try {
    return {Wireframe(std::move(vertices), std::move(edges)), std::move(doc)};
  } catch (const InvalidInput& e) {
    throw ParseError(e.what());
  }
}

void append_wireframe_body(std::string& out, const Wireframe& wf) {
  out += "{\n  \"vertices\": [";
  for (std::size_t i = 0; i < wf.vertex_count(); ++i) {
    out += i ? ",\n    [" : "\n    [";
    const Vec3& v = wf.vertices()[i];
    for (int k = 0; k < 3; ++k) {
      if (k) out += ", ";
      append_number(out, v[k]);
    }
    out += "]";
  }
  out += wf.vertex_count() ? "\n  ],\n  \"edges\": [" : "],\n  \"edges\": [";
  for (std::size_t k = 0; k < wf.edge_count(); ++k) {
    if (k) out += ", ";
    out += "[" + std::to_string(wf.edges()[k].a) + ", " + std::to_string(wf.edges()[k].b) + "]";
  }
  out += "]";
}

void append_scores(std::string& out, const char* key, const std::vector<double>& scores) {
  out += ",\n  \"";
  out += key;
  out += "\": [";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i) out += ", ";
    append_number(out, scores[i]);
  }
  out += "]";
}

}  // namespace

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("write failed for " + path.string());
}

PointCloud parse_cloud(std::string_view text, const std::string& source) {
  std::vector<Vec3> pts;
  for_each_data_line(text, [&](std::size_t line_no, const auto& toks) {
    Vec3 p;
    if (toks.size() < 3 || !parse_double(toks[0], p[0]) || !parse_double(toks[1], p[1]) ||
        !parse_double(toks[2], p[2])) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected 'x y z'");
    }
    pts.push_back(p);
  });
  if (pts.empty()) throw ParseError(source + ": no points");
  return PointCloud(std::move(pts), source);
}

PointCloud read_cloud(const fs::path& path) {
  return parse_cloud(read_text_file(path), path.string());
}

void write_cloud(const fs::path& path, const PointCloud& cloud) {
  std::string out;
  out.reserve(cloud.size() * 64);
  for (const auto& p : cloud.points()) {
    append_number(out, p[0]);
    out += ' ';
    append_number(out, p[1]);
    out += ' ';
    append_number(out, p[2]);
    out += '\n';
  }
  write_text_file(path, out);
}

Matrix read_features(const fs::path& path) {
  std::string text = read_text_file(path);
  std::vector<std::vector<double>> rows;
  for_each_data_line(text, [&](std::size_t line_no, const auto& toks) {
    std::vector<double> row(toks.size());
    for (std::size_t k = 0; k < toks.size(); ++k) {
      if (!parse_double(toks[k], row[k])) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad number");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": ragged feature row");
    }
    rows.push_back(std::move(row));
  });
  Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < rows[i].size(); ++k) m(i, k) = rows[i][k];
  }
  return m;
}

void write_features(const fs::path& path, const Matrix& features) {
  std::string out;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index k = 0; k < features.cols(); ++k) {
      if (k) out += ' ';
      append_number(out, features(i, k));
    }
    out += '\n';
  }
  write_text_file(path, out);
}

Wireframe parse_wireframe_json(std::string_view text) { return parse_wireframe_doc(text).wf; }

ScoredWireframe parse_scored_wireframe_json(std::string_view text) {
  auto parsed = parse_wireframe_doc(text);
  auto vs = json_scores(parsed.doc, "vertex_scores", parsed.wf.vertex_count());
  auto es = json_scores(parsed.doc, "edge_scores", parsed.wf.edge_count());
  try {
    return ScoredWireframe(std::move(parsed.wf), std::move(vs), std::move(es));
  } catch (const InvalidInput& e) {
    throw ParseError(e.what());
  }
}

std::string wireframe_to_json(const Wireframe& wf) {
  std::string out;
  append_wireframe_body(out, wf);
  out += "\n}\n";
  return out;
}

std::string wireframe_to_json(const ScoredWireframe& wf) {
  std::string out;
  append_wireframe_body(out, wf.wireframe());
  append_scores(out, "vertex_scores", wf.vertex_scores());
  append_scores(out, "edge_scores", wf.edge_scores());
  out += "\n}\n";
  return out;
}

Wireframe read_wireframe_json(const fs::path& path) {
  try {
    return parse_wireframe_json(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

ScoredWireframe read_scored_wireframe_json(const fs::path& path) {
  try {
    return parse_scored_wireframe_json(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_wireframe_json(const fs::path& path, const Wireframe& wf) {
  write_text_file(path, wireframe_to_json(wf));
}

void write_wireframe_json(const fs::path& path, const ScoredWireframe& wf) {
  write_text_file(path, wireframe_to_json(wf));
}

void write_obj(const fs::path& path, const Wireframe& wf) {
  std::string out = "# wireframe: " + std::to_string(wf.vertex_count()) + " vertices, " +
                    std::to_string(wf.edge_count()) + " edges\n";
  for (const auto& v : wf.vertices()) {
    out += "v ";
    append_number(out, v[0]);
    out += ' ';
    append_number(out, v[1]);
    out += ' ';
    append_number(out, v[2]);
    out += '\n';
  }
  for (const auto& e : wf.edges()) {
    out += "l " + std::to_string(e.a + 1) + " " + std::to_string(e.b + 1) + "\n";
  }
  write_text_file(path, out);
}

}  // namespace pc2wf
