#include "smart_tree/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cctype>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace smart_tree {

namespace {

enum class Scalar { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

std::optional<Scalar> scalar_from_name(std::string_view name) {
  static const std::map<std::string_view, Scalar> table = {
      {"char", Scalar::Int8},     {"int8", Scalar::Int8},       {"uchar", Scalar::UInt8},
      {"uint8", Scalar::UInt8},   {"short", Scalar::Int16},     {"int16", Scalar::Int16},
      {"ushort", Scalar::UInt16}, {"uint16", Scalar::UInt16},   {"int", Scalar::Int32},
      {"int32", Scalar::Int32},   {"uint", Scalar::UInt32},     {"uint32", Scalar::UInt32},
      {"float", Scalar::Float32}, {"float32", Scalar::Float32}, {"double", Scalar::Float64},
      {"float64", Scalar::Float64}};
  auto it = table.find(name);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::Int8:
    case Scalar::UInt8: return 1;
    case Scalar::Int16:
    case Scalar::UInt16: return 2;
    case Scalar::Int32:
    case Scalar::UInt32:
    case Scalar::Float32: return 4;
    case Scalar::Float64: return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  Scalar type = Scalar::Float64;
  bool is_list = false;
  Scalar count_type = Scalar::UInt8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

template <typename T>
T load_le(const char* p) {
  std::array<char, sizeof(T)> raw;
  std::memcpy(raw.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  T v;
  std::memcpy(&v, raw.data(), sizeof(T));
  return v;
}

template <typename T>
void store_le(std::string& out, T v) {
  std::array<char, sizeof(T)> raw;
  std::memcpy(raw.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  out.append(raw.data(), raw.size());
}

double decode_binary(Scalar s, const char* p) {
  switch (s) {
    case Scalar::Int8: return load_le<std::int8_t>(p);
    case Scalar::UInt8: return load_le<std::uint8_t>(p);
    case Scalar::Int16: return load_le<std::int16_t>(p);
    case Scalar::UInt16: return load_le<std::uint16_t>(p);
    case Scalar::Int32: return load_le<std::int32_t>(p);
    case Scalar::UInt32: return load_le<std::uint32_t>(p);
    case Scalar::Float32: return load_le<float>(p);
    case Scalar::Float64: return load_le<double>(p);
  }
  return 0.0;
}

// Sequential reader over the payload that reports the byte offset of failures.
class Cursor {
 public:
  Cursor(std::string_view bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}

  std::size_t pos() const { return pos_; }

  double binary(Scalar s) {
    const std::size_t size = scalar_size(s);
    if (pos_ + size > bytes_.size()) throw ParseError("truncated binary payload", pos_);
    const double v = decode_binary(s, bytes_.data() + pos_);
    pos_ += size;
    return v;
  }

  double ascii() {
    while (pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    if (pos_ >= bytes_.size()) throw ParseError("truncated ascii payload", pos_);
    double v = 0.0;
    const char* begin = bytes_.data() + pos_;
    const auto res = std::from_chars(begin, bytes_.data() + bytes_.size(), v);
    if (res.ec != std::errc()) throw ParseError("malformed ascii number", pos_);
    pos_ += static_cast<std::size_t>(res.ptr - begin);
    return v;
  }

 private:
  std::string_view bytes_;
  std::size_t pos_;
};

struct Header {
  PlyFormat format = PlyFormat::Ascii;
  std::vector<Element> elements;
  std::size_t payload = 0;
};

Header parse_header(std::string_view bytes) {
  Header header;
  std::size_t pos = 0;
  auto next_line = [&](std::size_t& start) -> std::string_view {
    start = pos;
    const std::size_t end = bytes.find('\n', pos);
    if (end == std::string_view::npos) throw ParseError("PLY header is not terminated", pos);
    std::string_view line = bytes.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    return line;
  };
  auto split = [](std::string_view line) {
    std::vector<std::string> words;
    std::istringstream in{std::string(line)};
    for (std::string w; in >> w;) words.push_back(w);
    return words;
  };

  std::size_t at = 0;
  if (next_line(at) != "ply") throw ParseError("missing 'ply' magic", 0);
  bool have_format = false;
  while (true) {
    const auto words = split(next_line(at));
    if (words.empty()) continue;
    const std::string& key = words[0];
    if (key == "end_header") break;
    if (key == "comment" || key == "obj_info") continue;
    if (key == "format") {
      if (words.size() < 3 || words[2] != "1.0") throw ParseError("unsupported PLY format line", at);
      if (words[1] == "ascii") {
        header.format = PlyFormat::Ascii;
      } else if (words[1] == "binary_little_endian") {
        header.format = PlyFormat::BinaryLittleEndian;
      } else {
        throw ParseError("unsupported PLY encoding '" + words[1] + "'", at);
      }
      have_format = true;
    } else if (key == "element") {
      if (words.size() != 3) throw ParseError("malformed element line", at);
      Element e;
      e.name = words[1];
      std::size_t count = 0;
      const auto res = std::from_chars(words[2].data(), words[2].data() + words[2].size(), count);
      if (res.ec != std::errc() || res.ptr != words[2].data() + words[2].size()) {
        throw ParseError("malformed element count", at);
      }
      e.count = count;
      header.elements.push_back(std::move(e));
    } else if (key == "property") {
      if (header.elements.empty()) throw ParseError("property before any element", at);
      Property prop;
      if (words.size() == 5 && words[1] == "list") {
        auto count_type = scalar_from_name(words[2]);
        auto item_type = scalar_from_name(words[3]);
        if (!count_type || !item_type) throw ParseError("unknown list property type", at);
        prop.is_list = true;
        prop.count_type = *count_type;
        prop.type = *item_type;
        prop.name = words[4];
      } else if (words.size() == 3) {
        auto type = scalar_from_name(words[1]);
        if (!type) throw ParseError("unknown property type '" + words[1] + "'", at);
        prop.type = *type;
        prop.name = words[2];
      } else {
        throw ParseError("malformed property line", at);
      }
      header.elements.back().properties.push_back(std::move(prop));
    } else {
      throw ParseError("unexpected header keyword '" + key + "'", at);
    }
  }
  if (!have_format) throw ParseError("PLY header has no format line", 0);
  header.payload = pos;
  return header;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

CloudFile parse_cloud(std::string_view bytes) {
  const Header header = parse_header(bytes);
  Cursor cursor(bytes, header.payload);
  auto read_value = [&](Scalar s) {
    return header.format == PlyFormat::Ascii ? cursor.ascii() : cursor.binary(s);
  };

  CloudFile file;
  bool seen_vertex = false;
  for (const Element& element : header.elements) {
    if (element.name != "vertex") {
      for (std::size_t i = 0; i < element.count; ++i) {
        for (const auto& prop : element.properties) {
          if (prop.is_list) {
            const double n = read_value(prop.count_type);
            if (n < 0) throw ParseError("negative list length", cursor.pos());
            for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k) read_value(prop.type);
          } else {
            read_value(prop.type);
          }
        }
      }
      continue;
    }
    if (seen_vertex) throw ParseError("duplicate vertex element", header.payload);
    seen_vertex = true;

    std::map<std::string, std::size_t> column;
    for (std::size_t c = 0; c < element.properties.size(); ++c) {
      if (element.properties[c].is_list) {
        throw ParseError("list properties are not supported on vertices", header.payload);
      }
      column.emplace(element.properties[c].name, c);
    }
    auto group = [&](std::initializer_list<const char*> names) {
      std::size_t present = 0;
      for (const char* n : names) present += column.count(n);
      if (present != 0 && present != names.size()) {
        std::string list;
        for (const char* n : names) list += std::string(list.empty() ? "" : ", ") + n;
        throw ParseError("incomplete optional property group (" + list + ")", header.payload);
      }
      return present != 0;
    };
    if (!column.count("x") || !column.count("y") || !column.count("z")) {
      throw ParseError("vertex element lacks x, y, z", header.payload);
    }
    const bool has_gt = group({"gt_radius", "gt_dx", "gt_dy", "gt_dz", "branch_id"});
    const bool has_pred = group({"pred_log_radius", "pred_dx", "pred_dy", "pred_dz"});
    const bool has_color = group({"red", "green", "blue"});

    auto& cloud = file.cloud;
    cloud.points.reserve(element.count);
    if (has_gt) cloud.labels.emplace().reserve(element.count);
    if (has_color) cloud.colors.emplace().reserve(element.count);
    if (has_pred) file.field.emplace();

    std::vector<double> row(element.properties.size());
    for (std::size_t i = 0; i < element.count; ++i) {
      for (std::size_t c = 0; c < row.size(); ++c) row[c] = read_value(element.properties[c].type);
      auto get = [&](const char* name) { return row[column.at(name)]; };
      cloud.points.emplace_back(get("x"), get("y"), get("z"));
      if (has_gt) {
        cloud.labels->push_back({get("gt_radius"),
                                 Eigen::Vector3d(get("gt_dx"), get("gt_dy"), get("gt_dz")),
                                 static_cast<int>(get("branch_id"))});
      }
      if (has_pred) {
        file.field->log_radius.push_back(get("pred_log_radius"));
        file.field->direction.emplace_back(get("pred_dx"), get("pred_dy"), get("pred_dz"));
      }
      if (has_color) {
        cloud.colors->push_back({static_cast<std::uint8_t>(get("red")),
                                 static_cast<std::uint8_t>(get("green")),
                                 static_cast<std::uint8_t>(get("blue"))});
      }
    }
  }
  if (!seen_vertex) throw ParseError("PLY file has no vertex element", header.payload);
  return file;
}

std::string encode_cloud(const PointCloud& cloud, const MedialField* field, PlyFormat format) {
  check_cloud(cloud);
  if (field && (field->log_radius.size() != cloud.size() || field->direction.size() != cloud.size())) {
    throw InvalidInput("medial field size does not match the cloud");
  }
  const bool ascii = format == PlyFormat::Ascii;
  std::string out = "ply\nformat ";
  out += ascii ? "ascii" : "binary_little_endian";
  out += " 1.0\nelement vertex " + std::to_string(cloud.size()) + "\n";
  out += "property double x\nproperty double y\nproperty double z\n";
  if (cloud.labels) {
    out += "property double gt_radius\nproperty double gt_dx\nproperty double gt_dy\n"
           "property double gt_dz\nproperty int branch_id\n";
  }
  if (field) {
    out += "property double pred_log_radius\nproperty double pred_dx\nproperty double pred_dy\n"
           "property double pred_dz\n";
  }
  if (cloud.colors) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out += "end_header\n";

  std::string line;
  auto put_double = [&](double v) {
    if (ascii) {
      line += format_double(v);
      line += ' ';
    } else {
      store_le<double>(out, v);
    }
  };
  auto put_int = [&](std::int64_t v, bool byte) {
    if (ascii) {
      line += std::to_string(v);
      line += ' ';
    } else if (byte) {
      store_le<std::uint8_t>(out, static_cast<std::uint8_t>(v));
    } else {
      store_le<std::int32_t>(out, static_cast<std::int32_t>(v));
    }
  };

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    line.clear();
    const auto& p = cloud.points[i];
    put_double(p.x());
    put_double(p.y());
    put_double(p.z());
    if (cloud.labels) {
      const auto& l = (*cloud.labels)[i];
      put_double(l.radius);
      put_double(l.direction.x());
      put_double(l.direction.y());
      put_double(l.direction.z());
      put_int(l.branch_id, false);
    }
    if (field) {
      put_double(field->log_radius[i]);
      put_double(field->direction[i].x());
      put_double(field->direction[i].y());
      put_double(field->direction[i].z());
    }
    if (cloud.colors) {
      const auto& c = (*cloud.colors)[i];
      put_int(c.r, true);
      put_int(c.g, true);
      put_int(c.b, true);
    }
    if (ascii) {
      line.back() = '\n';
      out += line;
    }
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

CloudFile read_cloud(const std::filesystem::path& path) {
  try {
    return parse_cloud(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_cloud(const std::filesystem::path& path, const PointCloud& cloud,
                 const MedialField* field, PlyFormat format) {
  write_file(path, encode_cloud(cloud, field, format));
}

nlohmann::json skeleton_to_json(const Skeleton& skeleton, const nlohmann::json& meta) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& node : skeleton.nodes) {
    nlohmann::json j;
    j["id"] = node.id;
    j["parent"] = node.parent ? nlohmann::json(*node.parent) : nlohmann::json(nullptr);
    j["position"] = {node.position.x(), node.position.y(), node.position.z()};
    j["radius"] = node.radius;
    nodes.push_back(std::move(j));
  }
  return {{"nodes", std::move(nodes)}, {"meta", meta}};
}

SkeletonFile skeleton_from_json(const nlohmann::json& doc) {
  auto fail = [](const std::string& path, const std::string& what) {
    throw ParseError(path + ": " + what);
  };
  if (!doc.is_object()) fail("/", "expected an object");
  if (!doc.contains("nodes") || !doc["nodes"].is_array()) fail("/nodes", "expected an array");

  SkeletonFile file;
  if (doc.contains("meta")) file.meta = doc["meta"];
  const auto& nodes = doc["nodes"];
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string at = "/nodes/" + std::to_string(i);
    const auto& j = nodes[i];
    if (!j.is_object()) fail(at, "expected an object");
    SkeletonNode node;
    if (!j.contains("id") || !j["id"].is_number_integer()) fail(at + "/id", "expected an integer");
    node.id = j["id"].get<NodeId>();
    if (!j.contains("parent")) fail(at + "/parent", "missing (use null for roots)");
    if (!j["parent"].is_null()) {
      if (!j["parent"].is_number_integer()) fail(at + "/parent", "expected an integer or null");
      node.parent = j["parent"].get<NodeId>();
    }
    if (!j.contains("position") || !j["position"].is_array() || j["position"].size() != 3) {
      fail(at + "/position", "expected [x, y, z]");
    }
    for (int a = 0; a < 3; ++a) {
      if (!j["position"][a].is_number()) {
        fail(at + "/position/" + std::to_string(a), "expected a number");
      }
      node.position[a] = j["position"][a].get<double>();
    }
    if (!j.contains("radius") || !j["radius"].is_number()) fail(at + "/radius", "expected a number");
    node.radius = j["radius"].get<double>();
    file.skeleton.nodes.push_back(node);
  }
  refresh_roots(file.skeleton);
  if (auto violations = skeleton_validate(file.skeleton); !violations.empty()) {
    throw ParseError("invalid skeleton: " + violations.front());
  }
  return file;
}

SkeletonFile read_skeleton(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
  try {
    return skeleton_from_json(doc);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_skeleton(const std::filesystem::path& path, const Skeleton& skeleton,
                    const nlohmann::json& meta) {
  write_file(path, skeleton_to_json(skeleton, meta).dump(1) + "\n");
}

}  // namespace smart_tree
