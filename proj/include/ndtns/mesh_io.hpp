#pragma once

#include "ndtns/common.hpp"
#include "ndtns/geometry.hpp"

#include <json.hpp>

#include <fstream>
#include <string>

namespace ndtns {

/// Mesh exchange document:
/// { "dim": 2, "vertices": [[x,y],...], "triangles": [[i,j,k],...],
///   "facet_markers": {"name": [[i,j],...]}, "curved_edges": [{"edge": [i,j], "control": [x,y]}] }
inline nlohmann::json mesh_to_json(const Triangulation& mesh)
{
    nlohmann::json j;
    j["dim"] = 2;
    j["vertices"] = nlohmann::json::array();
    for (const auto& v : mesh.vertices)
        j["vertices"].push_back({v.x(), v.y()});
    j["triangles"] = mesh.triangles;
    j["facet_markers"] = nlohmann::json::object();
    for (const auto& f : mesh.facets)
        if (!f.marker.empty())
            j["facet_markers"][f.marker].push_back({f.v[0], f.v[1]});
    j["curved_edges"] = nlohmann::json::array();
    for (const auto& [f, c] : mesh.curved_edges)
        j["curved_edges"].push_back({{"edge", {mesh.facets[f].v[0], mesh.facets[f].v[1]}}, {"control", {c.x(), c.y()}}});
    return j;
}

inline Triangulation mesh_from_json(const nlohmann::json& j)
{
    try {
        if (j.at("dim").get<int>() != 2)
            throw InvalidInput("only 2D meshes are supported");
        std::vector<Vec2> verts;
        for (const auto& v : j.at("vertices")) {
            auto a = v.get<std::array<double, 2>>();
            verts.emplace_back(a[0], a[1]);
        }
        auto tris = j.at("triangles").get<std::vector<std::array<int, 3>>>();
        std::map<std::pair<int, int>, std::string> markers;
        if (j.contains("facet_markers"))
            for (const auto& [name, edges] : j["facet_markers"].items())
                for (const auto& e : edges) {
                    auto a = e.get<std::array<int, 2>>();
                    markers[detail::edge_key(a[0], a[1])] = name;
                }
        std::map<std::pair<int, int>, Vec2> controls;
        if (j.contains("curved_edges"))
            for (const auto& c : j["curved_edges"]) {
                auto a = c.at("edge").get<std::array<int, 2>>();
                auto x = c.at("control").get<std::array<double, 2>>();
                controls[detail::edge_key(a[0], a[1])] = Vec2(x[0], x[1]);
            }
        return make_triangulation(std::move(verts), std::move(tris), markers, controls);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("malformed mesh document: ") + e.what());
    }
}

inline void write_mesh(const Triangulation& mesh, const std::string& path)
{
    std::ofstream os(path);
    os << mesh_to_json(mesh).dump(1) << '\n';
    if (!os)
        throw Error("cannot write mesh file '" + path + "'");
}

inline Triangulation read_mesh(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw InvalidInput("cannot open mesh file '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("malformed mesh document: ") + e.what());
    }
    return mesh_from_json(j);
}

} // namespace ndtns
