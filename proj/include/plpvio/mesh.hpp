#pragma once

#include <array>
#include <compare>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "plpvio/cdt.hpp"

namespace plpvio {

// a mesh vertex is backed by a point landmark or one endpoint of a line
struct VertexRef {
    enum class Kind { Point, LineEndpoint };
    Kind kind = Kind::Point;
    int id = -1;
    int endpoint = 0;  // 0 = start, 1 = end (lines only)

    auto operator<=>(const VertexRef&) const = default;
};

struct MeshPatch {
    std::array<VertexRef, 3> refs;  // sorted
    std::array<Vec3, 3> vertices;
    Vec3 normal = Vec3::UnitZ();
    int source_frame = -1;
    bool frozen = false;

    double area() const;
    double aspect_ratio() const;  // longest edge / shortest altitude
    double min_angle() const;     // radians
    Vec3 centroid() const { return (vertices[0] + vertices[1] + vertices[2]) / 3.0; }
};

using PatchKey = std::array<VertexRef, 3>;

struct MeshMap {
    std::map<PatchKey, MeshPatch> patches;

    size_t size() const { return patches.size(); }
};

struct MeshFilterConfig {
    double normal_angle = deg2rad(5.0);
    int min_coplanar_neighbors = 3;  // "more than two adjacent patches"
    double max_aspect_ratio = 20.0;
    double min_corner_angle = deg2rad(5.0);
};

// landmark ref -> current 3D position, nullopt while uninitialized
using VertexResolver = std::function<std::optional<Vec3>(const VertexRef&)>;

// Lift 2D triangles to 3D patches; triangles with any unresolved vertex are
// skipped; normals are oriented toward the observing camera.
std::vector<MeshPatch> lift_mesh(const Mesh2D& mesh, const std::vector<VertexRef>& vertex_refs,
                                 const VertexResolver& resolve, const Vec3& camera_pos,
                                 int source_frame);

// Keep a patch iff it has >= min_coplanar_neighbors shared-edge neighbors
// within normal_angle, and it is not a sliver.
std::vector<MeshPatch> filter_patches(const std::vector<MeshPatch>& patches,
                                      const MeshFilterConfig& cfg = {});

// Merge new patches into the map, first occurrence kept.
void fuse_mesh(MeshMap& map, const std::vector<MeshPatch>& new_patches);

// Recompute cached vertices and normals of unfrozen patches; patches with a
// now-unresolvable vertex are dropped.
void refresh_mesh(MeshMap& map, const VertexResolver& resolve);

// Drop unfrozen patches using any matching vertex ref.
void remove_patches_referencing(MeshMap& map, const std::function<bool(const VertexRef&)>& pred);

// Freeze patches whose vertices all resolve now (used at marginalization).
void freeze_patches_referencing(MeshMap& map, const std::function<bool(const VertexRef&)>& pred);

std::string mesh_to_obj(const MeshMap& map);
std::string mesh_to_csv(const MeshMap& map);

}  // namespace plpvio
