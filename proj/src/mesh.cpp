#include "plpvio/mesh.hpp"

#include <algorithm>
#include <sstream>

namespace plpvio {

double MeshPatch::area() const {
    return 0.5 * (vertices[1] - vertices[0]).cross(vertices[2] - vertices[0]).norm();
}

double MeshPatch::aspect_ratio() const {
    const double a = (vertices[1] - vertices[0]).norm();
    const double b = (vertices[2] - vertices[1]).norm();
    const double c = (vertices[0] - vertices[2]).norm();
    const double longest = std::max({a, b, c});
    const double ar = area();
    if (ar < 1e-12) return 1e12;
    return longest * longest / (2.0 * ar);
}

double MeshPatch::min_angle() const {
    double best = M_PI;
    for (int i = 0; i < 3; ++i) {
        const Vec3 u = vertices[(i + 1) % 3] - vertices[i];
        const Vec3 v = vertices[(i + 2) % 3] - vertices[i];
        const double c = u.dot(v) / (u.norm() * v.norm());
        best = std::min(best, std::acos(std::clamp(c, -1.0, 1.0)));
    }
    return best;
}

std::vector<MeshPatch> lift_mesh(const Mesh2D& mesh, const std::vector<VertexRef>& vertex_refs,
                                 const VertexResolver& resolve, const Vec3& camera_pos,
                                 int source_frame) {
    std::vector<MeshPatch> out;
    for (const auto& tri : mesh.triangles) {
        MeshPatch patch;
        bool ok = true;
        for (int k = 0; k < 3 && ok; ++k) {
            const VertexRef& ref = vertex_refs[tri[k]];
            const auto p = resolve(ref);
            if (!p) {
                ok = false;
                break;
            }
            patch.refs[k] = ref;
            patch.vertices[k] = *p;
        }
        if (!ok) continue;

        Vec3 n = (patch.vertices[1] - patch.vertices[0]).cross(patch.vertices[2] - patch.vertices[0]);
        const double nn = n.norm();
        if (0.5 * nn < 1e-10) continue;  // degenerate patch
        n /= nn;
        if (n.dot(camera_pos - patch.centroid()) < 0) n = -n;
        patch.normal = n;
        patch.source_frame = source_frame;

        // canonical key order, vertices permuted alongside
        std::array<int, 3> idx = {0, 1, 2};
        std::sort(idx.begin(), idx.end(),
                  [&](int a, int b) { return patch.refs[a] < patch.refs[b]; });
        MeshPatch sorted = patch;
        for (int k = 0; k < 3; ++k) {
            sorted.refs[k] = patch.refs[idx[k]];
            sorted.vertices[k] = patch.vertices[idx[k]];
        }
        out.push_back(sorted);
    }
    return out;
}

std::vector<MeshPatch> filter_patches(const std::vector<MeshPatch>& patches,
                                      const MeshFilterConfig& cfg) {
    const double cos_gate = std::cos(cfg.normal_angle);

    auto shared_edge = [](const MeshPatch& a, const MeshPatch& b) {
        int common = 0;
        for (const auto& r : a.refs) {
            for (const auto& s : b.refs) {
                if (r == s) ++common;
            }
        }
        return common == 2;
    };

    std::vector<MeshPatch> out;
    for (size_t i = 0; i < patches.size(); ++i) {
        const MeshPatch& p = patches[i];
        if (p.aspect_ratio() > cfg.max_aspect_ratio) continue;
        if (p.min_angle() < cfg.min_corner_angle) continue;

        int coplanar_neighbors = 0;
        for (size_t j = 0; j < patches.size(); ++j) {
            if (i == j) continue;
            if (!shared_edge(p, patches[j])) continue;
            if (std::abs(p.normal.dot(patches[j].normal)) >= cos_gate) ++coplanar_neighbors;
        }
        if (coplanar_neighbors < cfg.min_coplanar_neighbors) continue;
        out.push_back(p);
    }
    return out;
}

void fuse_mesh(MeshMap& map, const std::vector<MeshPatch>& new_patches) {
    for (const auto& p : new_patches) {
        map.patches.emplace(p.refs, p);  // existing entry wins
    }
}

void refresh_mesh(MeshMap& map, const VertexResolver& resolve) {
    for (auto it = map.patches.begin(); it != map.patches.end();) {
        MeshPatch& p = it->second;
        if (p.frozen) {
            ++it;
            continue;
        }
        bool ok = true;
        std::array<Vec3, 3> verts;
        for (int k = 0; k < 3; ++k) {
            const auto pos = resolve(p.refs[k]);
            if (!pos) {
                ok = false;
                break;
            }
            verts[k] = *pos;
        }
        if (!ok) {
            it = map.patches.erase(it);
            continue;
        }
        const Vec3 old_normal = p.normal;
        p.vertices = verts;
        Vec3 n = (verts[1] - verts[0]).cross(verts[2] - verts[0]);
        if (n.norm() > 1e-12) {
            n.normalize();
            if (n.dot(old_normal) < 0) n = -n;
            p.normal = n;
        }
        ++it;
    }
}

void remove_patches_referencing(MeshMap& map,
                                const std::function<bool(const VertexRef&)>& pred) {
    for (auto it = map.patches.begin(); it != map.patches.end();) {
        const MeshPatch& p = it->second;
        const bool hit = !p.frozen && (pred(p.refs[0]) || pred(p.refs[1]) || pred(p.refs[2]));
        it = hit ? map.patches.erase(it) : std::next(it);
    }
}

void freeze_patches_referencing(MeshMap& map,
                                const std::function<bool(const VertexRef&)>& pred) {
    for (auto& [key, p] : map.patches) {
        if (pred(p.refs[0]) || pred(p.refs[1]) || pred(p.refs[2])) p.frozen = true;
    }
}

std::string mesh_to_obj(const MeshMap& map) {
    std::ostringstream os;
    os << "# plpvio mesh, Z-up\n";
    os.precision(9);
    for (const auto& [key, p] : map.patches) {
        for (const auto& v : p.vertices) {
            os << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
        }
    }
    int base = 1;
    for (const auto& [key, p] : map.patches) {
        os << "f " << base << " " << base + 1 << " " << base + 2 << "\n";
        base += 3;
    }
    return os.str();
}

std::string mesh_to_csv(const MeshMap& map) {
    std::ostringstream os;
    os << "v0_kind,v0_id,v0_ep,v1_kind,v1_id,v1_ep,v2_kind,v2_id,v2_ep,nx,ny,nz,frozen\n";
    os.precision(9);
    for (const auto& [key, p] : map.patches) {
        for (const auto& r : p.refs) {
            os << (r.kind == VertexRef::Kind::Point ? "P" : "L") << "," << r.id << ","
               << r.endpoint << ",";
        }
        os << p.normal.x() << "," << p.normal.y() << "," << p.normal.z() << ","
           << (p.frozen ? 1 : 0) << "\n";
    }
    return os.str();
}

}  // namespace plpvio
