#pragma once

// File formats: OBJ meshes, XYZ clouds, binary checkpoints, CSV rows and the
// key = value configuration files.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dlsi/error.hpp"
#include "dlsi/geometry.hpp"
#include "dlsi/models.hpp"
#include "dlsi/nn.hpp"

namespace dlsi {

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// strtod accepts scientific notation and is locale-"C" in these tools.
inline bool parse_double(std::string_view tok, double& out) {
  std::string s(tok);
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return !s.empty() && end == s.c_str() + s.size() && std::isfinite(out);
}

inline bool parse_long(std::string_view tok, long& out) {
  const auto* first = tok.data();
  const auto* last = tok.data() + tok.size();
  const auto r = std::from_chars(first, last, out);
  return r.ec == std::errc() && r.ptr == last;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::ifstream open_in(const std::filesystem::path& p,
                             std::ios::openmode mode = std::ios::in) {
  std::ifstream in(p, mode);
  if (!in) fail("cannot open '", p.string(), "' for reading");
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& p,
                              std::ios::openmode mode = std::ios::out) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, mode);
  if (!out) fail("cannot open '", p.string(), "' for writing");
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// OBJ

inline Mesh read_obj(std::istream& in, const std::string& name = "<obj>") {
  std::vector<Eigen::RowVector3d> verts;
  std::vector<Face> faces;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string_view body =
        std::string_view(line).substr(0, hash == std::string::npos ? line.size() : hash);
    const auto tok = detail::split_ws(body);
    if (tok.empty()) continue;
    if (tok[0] == "v") {
      if (tok.size() < 4) throw ParseError(name, lineno, "vertex needs 3 coordinates");
      Eigen::RowVector3d v;
      for (int k = 0; k < 3; ++k) {
        if (!detail::parse_double(tok[static_cast<std::size_t>(k) + 1], v[k])) {
          throw ParseError(name, lineno, "bad coordinate '" +
                                             std::string(tok[static_cast<std::size_t>(k) + 1]) + "'");
        }
      }
      verts.push_back(v);
    } else if (tok[0] == "f") {
      if (tok.size() != 4) {
        throw ParseError(name, lineno, "only triangular faces are supported (got " +
                                           std::to_string(tok.size() - 1) + " vertices)");
      }
      Face f{};
      for (int k = 0; k < 3; ++k) {
        std::string_view t = tok[static_cast<std::size_t>(k) + 1];
        t = t.substr(0, t.find('/'));
        long idx = 0;
        if (!detail::parse_long(t, idx) || idx < 1) {
          throw ParseError(name, lineno, "bad face index '" + std::string(t) + "'");
        }
        f[static_cast<std::size_t>(k)] = static_cast<int>(idx - 1);
      }
      faces.push_back(f);
    } else if (tok[0] == "vn" || tok[0] == "vt" || tok[0] == "g" || tok[0] == "o" ||
               tok[0] == "s" || tok[0] == "usemtl" || tok[0] == "mtllib") {
      continue;
    } else {
      throw ParseError(name, lineno, "unknown record '" + std::string(tok[0]) + "'");
    }
  }
  Points p(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) p.row(static_cast<Eigen::Index>(i)) = verts[i];
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int idx : faces[f]) {
      if (idx >= static_cast<int>(verts.size())) {
        throw ParseError(name, 0, "face " + std::to_string(f) + " references vertex " +
                                      std::to_string(idx + 1) + " of " +
                                      std::to_string(verts.size()));
      }
    }
  }
  return Mesh(std::move(p), std::move(faces));
}

inline Mesh read_obj(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return read_obj(in, path.string());
}

inline void write_obj(std::ostream& out, const Points& v, std::span<const Face> faces) {
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    out << "v " << detail::format_double(v(i, 0)) << ' ' << detail::format_double(v(i, 1))
        << ' ' << detail::format_double(v(i, 2)) << '\n';
  }
  for (const Face& f : faces) {
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  }
}

inline void write_obj(const std::filesystem::path& path, const Points& v,
                      std::span<const Face> faces) {
  auto out = detail::open_out(path);
  write_obj(out, v, faces);
}

inline void write_obj(const std::filesystem::path& path, const Mesh& m) {
  write_obj(path, m.vertices(), m.faces());
}

// ---------------------------------------------------------------------------
// XYZ

inline PointCloud read_xyz(std::istream& in, const std::string& name = "<xyz>") {
  std::vector<Eigen::RowVector3d> pts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 3) {
      throw ParseError(name, lineno, "expected 3 values, got " + std::to_string(tok.size()));
    }
    Eigen::RowVector3d p;
    for (int k = 0; k < 3; ++k) {
      if (!detail::parse_double(tok[static_cast<std::size_t>(k)], p[k])) {
        throw ParseError(name, lineno,
                         "non-numeric token '" + std::string(tok[static_cast<std::size_t>(k)]) + "'");
      }
    }
    pts.push_back(p);
  }
  PointCloud c;
  c.points.resize(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) c.points.row(static_cast<Eigen::Index>(i)) = pts[i];
  return c;
}

inline PointCloud read_xyz(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return read_xyz(in, path.string());
}

inline void write_xyz(std::ostream& out, const Points& p) {
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    out << detail::format_double(p(i, 0)) << ' ' << detail::format_double(p(i, 1)) << ' '
        << detail::format_double(p(i, 2)) << '\n';
  }
}

inline void write_xyz(const std::filesystem::path& path, const Points& p) {
  auto out = detail::open_out(path);
  write_xyz(out, p);
}

/// OBJ (vertices only) or XYZ, by extension.
inline PointCloud read_cloud(const std::filesystem::path& path) {
  if (path.extension() == ".obj") return PointCloud{read_obj(path).vertices()};
  return read_xyz(path);
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   DLSN\n
//   version 1\n
//   meta <key> <value>\n          (any number)
//   tensor <name> <rank> <d0> ... \n  (in payload order)
//   end\n
//   <little-endian float64 payloads, concatenated>

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
      if (n == name) return t;
    }
    fail("checkpoint has no tensor '", name, "'");
  }
  bool has_tensor(const std::string& name) const {
    return std::any_of(tensors.begin(), tensors.end(),
                       [&](const auto& p) { return p.first == name; });
  }
};

inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  out << "DLSN\n" << "version " << kCheckpointVersion << '\n';
  for (const auto& [k, v] : ck.meta) {
    require(k.find_first_of(" \n") == std::string::npos && v.find('\n') == std::string::npos,
            "checkpoint meta key/value must be single-line, key without spaces: '", k, "'");
    out << "meta " << k << ' ' << v << '\n';
  }
  for (const auto& [name, t] : ck.tensors) {
    require(name.find_first_of(" \n") == std::string::npos, "bad tensor name '", name, "'");
    out << "tensor " << name << ' ' << t.dims.size();
    for (auto d : t.dims) out << ' ' << d;
    out << '\n';
  }
  out << "end\n";
  std::vector<char> buf;
  for (const auto& [name, t] : ck.tensors) {
    buf.resize(t.data.size() * 8);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const auto bits = std::bit_cast<std::uint64_t>(t.data[i]);
      for (int b = 0; b < 8; ++b) {
        buf[i * 8 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xffu);
      }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) fail("checkpoint write failed");
}

inline Checkpoint read_checkpoint(std::istream& in, const std::string& name = "<checkpoint>") {
  Checkpoint ck;
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    return true;
  };
  if (!next() || line != "DLSN") throw ParseError(name, 1, "bad magic (expected DLSN)");
  if (!next()) throw ParseError(name, lineno, "missing version line");
  {
    const auto tok = detail::split_ws(line);
    long v = 0;
    if (tok.size() != 2 || tok[0] != "version" || !detail::parse_long(tok[1], v)) {
      throw ParseError(name, lineno, "malformed version line");
    }
    if (v != static_cast<long>(kCheckpointVersion)) {
      throw ParseError(name, lineno, "unsupported checkpoint version " + std::to_string(v));
    }
  }
  bool ended = false;
  while (next()) {
    if (line == "end") {
      ended = true;
      break;
    }
    if (line.starts_with("meta ")) {
      const auto rest = std::string_view(line).substr(5);
      const auto sp = rest.find(' ');
      if (sp == std::string_view::npos) throw ParseError(name, lineno, "meta without value");
      ck.meta[std::string(rest.substr(0, sp))] = std::string(rest.substr(sp + 1));
      continue;
    }
    const auto tok = detail::split_ws(line);
    long rank = 0;
    if (tok.size() < 3 || tok[0] != "tensor" || !detail::parse_long(tok[2], rank) || rank < 0 ||
        tok.size() != static_cast<std::size_t>(rank) + 3) {
      throw ParseError(name, lineno, "malformed tensor header");
    }
    std::vector<std::size_t> dims;
    for (long r = 0; r < rank; ++r) {
      long d = 0;
      if (!detail::parse_long(tok[static_cast<std::size_t>(r) + 3], d) || d < 0) {
        throw ParseError(name, lineno, "bad dimension in tensor '" + std::string(tok[1]) + "'");
      }
      dims.push_back(static_cast<std::size_t>(d));
    }
    ck.tensors.emplace_back(std::string(tok[1]), Tensor(std::move(dims)));
  }
  if (!ended) throw ParseError(name, lineno, "header not terminated by 'end'");

  std::vector<unsigned char> buf;
  for (auto& [tname, t] : ck.tensors) {
    buf.resize(t.data.size() * 8);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
      fail(name, ": truncated payload in tensor '", tname, "'");
    }
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) {
        bits |= static_cast<std::uint64_t>(buf[i * 8 + static_cast<std::size_t>(b)]) << (8 * b);
      }
      t.data[i] = std::bit_cast<double>(bits);
    }
  }
  in.peek();
  if (!in.eof()) fail(name, ": trailing bytes after last tensor");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  auto out = detail::open_out(path, std::ios::out | std::ios::binary);
  write_checkpoint(out, ck);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto in = detail::open_in(path, std::ios::in | std::ios::binary);
  return read_checkpoint(in, path.string());
}

/// Parameter values in store order.
inline Checkpoint to_checkpoint(const ParamStore& store) {
  Checkpoint ck;
  for (const auto& s : store.slots()) ck.tensors.emplace_back(s.name, s.value);
  return ck;
}

/// Copies every tensor of `ck` into the same-named parameter; shapes and
/// the parameter set must match exactly.
inline void restore_params(ParamStore& store, const Checkpoint& ck,
                           const std::string& skip_prefix = "template.") {
  std::size_t matched = 0;
  for (const auto& [name, t] : ck.tensors) {
    if (!skip_prefix.empty() && name.starts_with(skip_prefix)) continue;
    if (!store.contains(name)) fail("checkpoint tensor '", name, "' is not a model parameter");
    Tensor& dst = store.mutable_value(name);
    if (dst.dims != t.dims) {
      fail("checkpoint tensor '", name, "' has mismatched dimensions");
    }
    dst.data = t.data;
    ++matched;
  }
  require(matched == store.size(), "checkpoint provides ", matched, " of ", store.size(),
          " parameters");
}

namespace detail {

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

inline std::vector<std::size_t> split_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    long v = 0;
    if (!parse_long(trim(item), v) || v <= 0) fail("bad size list '", s, "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

inline const std::string& meta_at(const Checkpoint& ck, const std::string& key) {
  auto it = ck.meta.find(key);
  if (it == ck.meta.end()) fail("checkpoint missing meta '", key, "'");
  return it->second;
}

}  // namespace detail

inline Checkpoint model_checkpoint(const DualModel& m) {
  Checkpoint ck;
  ck.meta = m.meta;
  const auto& a = m.arch();
  ck.meta["arch.enc_p_widths"] = detail::join_sizes(a.enc_p_widths);
  ck.meta["arch.shape_latent"] = std::to_string(a.shape_latent);
  ck.meta["arch.dec_p_widths"] = detail::join_sizes(a.dec_p_widths);
  ck.meta["arch.enc_e_widths"] = detail::join_sizes(a.enc_e_widths);
  ck.meta["arch.edge_latent"] = std::to_string(a.edge_latent);
  ck.meta["arch.dec_e_widths"] = detail::join_sizes(a.dec_e_widths);
  ck.meta["arch.map_widths"] = detail::join_sizes(a.map_widths);
  ck.meta["arch.edge_scale"] = detail::format_double(a.edge_scale);

  const Mesh& t = m.template_mesh();
  Tensor tv({t.vertex_count(), 3});
  std::copy(t.vertices().data(), t.vertices().data() + tv.size(), tv.data.begin());
  Tensor tf({t.faces().size(), 3});
  for (std::size_t f = 0; f < t.faces().size(); ++f) {
    for (std::size_t k = 0; k < 3; ++k) tf.data[f * 3 + k] = t.faces()[f][k];
  }
  ck.tensors.emplace_back("template.vertices", std::move(tv));
  ck.tensors.emplace_back("template.faces", std::move(tf));
  for (const auto& s : m.params.slots()) ck.tensors.emplace_back(s.name, s.value);
  return ck;
}

inline DualModel model_from_checkpoint(const Checkpoint& ck) {
  ArchConfig a;
  a.enc_p_widths = detail::split_sizes(detail::meta_at(ck, "arch.enc_p_widths"));
  a.shape_latent = detail::split_sizes(detail::meta_at(ck, "arch.shape_latent")).at(0);
  a.dec_p_widths = detail::split_sizes(detail::meta_at(ck, "arch.dec_p_widths"));
  a.enc_e_widths = detail::split_sizes(detail::meta_at(ck, "arch.enc_e_widths"));
  a.edge_latent = detail::split_sizes(detail::meta_at(ck, "arch.edge_latent")).at(0);
  a.dec_e_widths = detail::split_sizes(detail::meta_at(ck, "arch.dec_e_widths"));
  a.map_widths = detail::split_sizes(detail::meta_at(ck, "arch.map_widths"));
  // older checkpoints predate the edge wrapper
  a.edge_scale = ck.meta.count("arch.edge_scale") ? std::stod(ck.meta.at("arch.edge_scale")) : 0.0;

  const Tensor& tv = ck.tensor("template.vertices");
  const Tensor& tf = ck.tensor("template.faces");
  require(tv.dims.size() == 2 && tv.dims[1] == 3, "template.vertices must be n x 3");
  require(tf.dims.size() == 2 && tf.dims[1] == 3, "template.faces must be m x 3");
  Points v = Eigen::Map<const Points>(tv.data.data(), static_cast<Eigen::Index>(tv.dims[0]), 3);
  std::vector<Face> faces(tf.dims[0]);
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (std::size_t k = 0; k < 3; ++k) faces[f][k] = static_cast<int>(tf.data[f * 3 + k]);
  }
  DualModel m(Mesh(std::move(v), std::move(faces)), a, 0);
  restore_params(m.params, ck);
  for (const auto& [k, val] : ck.meta) {
    if (!k.starts_with("arch.")) m.meta[k] = val;
  }
  return m;
}

inline void save_model(const std::filesystem::path& path, const DualModel& m) {
  save_checkpoint(path, model_checkpoint(m));
}

inline DualModel load_model(const std::filesystem::path& path) {
  return model_from_checkpoint(load_checkpoint(path));
}

// ---------------------------------------------------------------------------
// CSV

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : out_(detail::open_out(path)), columns_(header.size()) {
    write_row(header);
  }

  void write_row(const std::vector<std::string>& cells) {
    require(cells.size() == columns_, "csv row has ", cells.size(), " cells, expected ",
            columns_);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  static std::string num(double v) { return detail::format_double(v); }

 private:
  std::ofstream out_;
  std::size_t columns_;
};

// ---------------------------------------------------------------------------
// key = value configuration

class Config {
 public:
  Config() = default;

  static Config parse(std::istream& in, const std::string& name = "<config>") {
    Config c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      const auto body = detail::trim(
          std::string_view(line).substr(0, hash == std::string::npos ? line.size() : hash));
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) throw ParseError(name, lineno, "expected 'key = value'");
      const auto key = detail::trim(body.substr(0, eq));
      const auto value = detail::trim(body.substr(eq + 1));
      if (key.empty()) throw ParseError(name, lineno, "empty key");
      if (c.values_.contains(std::string(key))) {
        throw ParseError(name, lineno, "duplicate key '" + std::string(key) + "'");
      }
      c.values_[std::string(key)] = std::string(value);
    }
    return c;
  }

  static Config load(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    return parse(in, path.string());
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.contains(key); }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }
  double get_double(const std::string& key, double def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    double v = 0;
    if (!detail::parse_double(it->second, v)) fail("config key '", key, "': not a number");
    return v;
  }
  long get_long(const std::string& key, long def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    long v = 0;
    if (!detail::parse_long(it->second, v)) fail("config key '", key, "': not an integer");
    return v;
  }
  bool get_bool(const std::string& key, bool def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    fail("config key '", key, "': expected true/false");
  }

  /// Rejects keys outside `known` (exact names or "prefix.*").
  void check_known(const std::vector<std::string>& known) const {
    for (const auto& [k, v] : values_) {
      const bool ok = std::any_of(known.begin(), known.end(), [&](const std::string& p) {
        if (p.ends_with(".*")) return k.starts_with(p.substr(0, p.size() - 1));
        return k == p;
      });
      if (!ok) fail("unknown config key '", k, "'");
    }
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace dlsi
