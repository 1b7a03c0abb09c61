#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "smart_tree/estimate.hpp"
#include "smart_tree/model.hpp"

namespace smart_tree {

enum class PlyFormat { Ascii, BinaryLittleEndian };

/// Contents of a cloud file: the points, optional ground truth, and an
/// optional injected medial field (pred_* vertex properties).
struct CloudFile {
  PointCloud cloud;
  std::optional<MedialField> field;
};

/// Decodes a PLY document (ascii or binary_little_endian). Vertex properties
/// x, y, z are required; gt_radius/gt_dx/gt_dy/gt_dz/branch_id,
/// pred_log_radius/pred_dx/pred_dy/pred_dz and red/green/blue are optional
/// groups that must be complete when present. Other elements are skipped.
CloudFile parse_cloud(std::string_view bytes);

/// Encodes with float64 coordinates, so decoding reproduces every value.
std::string encode_cloud(const PointCloud& cloud, const MedialField* field = nullptr,
                         PlyFormat format = PlyFormat::BinaryLittleEndian);

CloudFile read_cloud(const std::filesystem::path& path);
void write_cloud(const std::filesystem::path& path, const PointCloud& cloud,
                 const MedialField* field = nullptr,
                 PlyFormat format = PlyFormat::BinaryLittleEndian);

struct SkeletonFile {
  Skeleton skeleton;
  nlohmann::json meta = nlohmann::json::object();
};

/// {"nodes": [{"id", "parent", "position": [x, y, z], "radius"}], "meta": {...}}
nlohmann::json skeleton_to_json(const Skeleton& skeleton, const nlohmann::json& meta);

/// Structural problems raise ParseError naming the JSON path; the decoded
/// skeleton must pass skeleton_validate.
SkeletonFile skeleton_from_json(const nlohmann::json& doc);

SkeletonFile read_skeleton(const std::filesystem::path& path);
void write_skeleton(const std::filesystem::path& path, const Skeleton& skeleton,
                    const nlohmann::json& meta = nlohmann::json::object());

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace smart_tree
