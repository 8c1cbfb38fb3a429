#include "core/mesh_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "core/error.hpp"

namespace papercut {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open for writing: " + path);
  out << content;
  if (!out) fail(ErrorCode::Io, "write failed: " + path);
}

std::string serialize_mesh(const PaperMesh& mesh) {
  std::ostringstream out;
  out << "papercut-mesh 1\n";
  const auto& vs = mesh.vertices();
  out << "vertices " << vs.size() << "\n";
  for (const auto& v : vs) {
    out << "v " << format_double(v.position.x()) << ' ' << format_double(v.position.y())
        << ' ' << format_double(v.position.z()) << ' ' << format_double(v.uv.x()) << ' '
        << format_double(v.uv.y()) << "\n";
  }
  const auto& ts = mesh.triangles();
  out << "triangles " << ts.size() << "\n";
  for (const auto& t : ts) {
    out << "t " << t[0] << ' ' << t[1] << ' ' << t[2] << "\n";
  }
  for (const auto& [name, members] : mesh.groups()) {
    out << "group " << name << ' ' << members.size() << "\n";
    for (int m : members) out << "g " << m << "\n";
  }
  return out.str();
}

namespace {

[[noreturn]] void parse_fail(size_t line, const std::string& what) {
  fail(ErrorCode::Parse, "mesh line " + std::to_string(line) + ": " + what);
}

}  // namespace

PaperMesh parse_mesh(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  auto next_line = [&](std::string& out) {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      out = line;
      return true;
    }
    return false;
  };

  std::string cur;
  if (!next_line(cur)) fail(ErrorCode::Parse, "mesh: empty input");
  {
    std::istringstream ls(cur);
    std::string magic;
    int version = 0;
    if (!(ls >> magic >> version) || magic != "papercut-mesh" || version != 1) {
      parse_fail(line_no, "expected header 'papercut-mesh 1'");
    }
  }

  std::vector<MeshVertex> verts;
  std::vector<std::array<int, 3>> tris;
  std::map<std::string, std::vector<int>> groups;

  if (!next_line(cur)) fail(ErrorCode::Parse, "mesh: missing vertex section");
  {
    std::istringstream ls(cur);
    std::string kw;
    size_t n = 0;
    if (!(ls >> kw >> n) || kw != "vertices") parse_fail(line_no, "expected 'vertices N'");
    verts.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      if (!next_line(cur)) parse_fail(line_no, "vertex list truncated");
      std::istringstream vl(cur);
      std::string tag;
      MeshVertex v;
      if (!(vl >> tag >> v.position.x() >> v.position.y() >> v.position.z() >> v.uv.x() >>
            v.uv.y()) ||
          tag != "v") {
        parse_fail(line_no, "expected 'v x y z u v'");
      }
      verts.push_back(v);
    }
  }

  if (!next_line(cur)) fail(ErrorCode::Parse, "mesh: missing triangle section");
  {
    std::istringstream ls(cur);
    std::string kw;
    size_t n = 0;
    if (!(ls >> kw >> n) || kw != "triangles") parse_fail(line_no, "expected 'triangles M'");
    tris.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      if (!next_line(cur)) parse_fail(line_no, "triangle list truncated");
      std::istringstream tl(cur);
      std::string tag;
      std::array<int, 3> t{};
      if (!(tl >> tag >> t[0] >> t[1] >> t[2]) || tag != "t") {
        parse_fail(line_no, "expected 't a b c'");
      }
      for (int k : t) {
        if (k < 0 || size_t(k) >= verts.size()) parse_fail(line_no, "triangle index out of range");
      }
      tris.push_back(t);
    }
  }

  while (next_line(cur)) {
    std::istringstream ls(cur);
    std::string kw, name;
    size_t n = 0;
    if (!(ls >> kw >> name >> n) || kw != "group") parse_fail(line_no, "expected 'group name K'");
    if (groups.count(name)) parse_fail(line_no, "duplicate group '" + name + "'");
    auto& members = groups[name];
    members.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      if (!next_line(cur)) parse_fail(line_no, "group list truncated");
      std::istringstream gl(cur);
      std::string tag;
      int m = -1;
      if (!(gl >> tag >> m) || tag != "g") parse_fail(line_no, "expected 'g idx'");
      if (m < 0 || size_t(m) >= verts.size()) parse_fail(line_no, "group index out of range");
      members.push_back(m);
    }
  }

  PaperMesh mesh;
  mesh.restore(std::move(verts), std::move(tris), std::move(groups));
  return mesh;
}

void save_mesh(const PaperMesh& mesh, const std::string& path) {
  write_text_file(path, serialize_mesh(mesh));
}

PaperMesh load_mesh(const std::string& path) { return parse_mesh(read_text_file(path)); }

}  // namespace papercut
