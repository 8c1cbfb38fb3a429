#pragma once

#include <string>

#include "core/paper_mesh.hpp"

namespace papercut {

// Plain-text mesh format, stable under save -> load -> save:
//   papercut-mesh 1
//   vertices N
//   v x y z u v          (one per vertex, full double precision)
//   triangles M
//   t a b c
//   group <name> K
//   g idx                (one per member, groups sorted by name)
std::string serialize_mesh(const PaperMesh& mesh);
PaperMesh parse_mesh(const std::string& text);

void save_mesh(const PaperMesh& mesh, const std::string& path);
PaperMesh load_mesh(const std::string& path);

// Shared plumbing for the other plain-text artifacts.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
std::string format_double(double v);  // %.17g, round-trips exactly

}  // namespace papercut
