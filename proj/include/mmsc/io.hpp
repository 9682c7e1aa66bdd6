#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "mmsc/types.hpp"

namespace mmsc::io {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "matrix files are written with native little-endian stores");

// ---------------------------------------------------------------------------
// Matrix files
//
//   offset  size  field
//   0       4     magic "SCMX"
//   4       4     format version (u32, currently 1)
//   8       8     rows (u64)
//   16      8     cols (u64)
//   24      4     element type (u32, 1 = IEEE-754 binary32)
//   28      ...   row-major payload
// ---------------------------------------------------------------------------

inline constexpr std::array<char, 4> kMatrixMagic{'S', 'C', 'M', 'X'};
inline constexpr std::uint32_t kMatrixVersion = 1;
inline constexpr std::uint32_t kElementFloat32 = 1;
inline constexpr std::size_t kMatrixHeaderBytes = 28;

namespace detail {

template <typename T>
void put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T get(const std::string& buf, std::size_t off) {
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  return v;
}

}  // namespace detail

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

/// Serializes `m` as binary32. Values are rounded to float.
inline std::string encode_matrix(const FeatureMatrix& m) {
  if (!m.allFinite()) throw InputError("refusing to save a matrix with non-finite values");
  std::string buf;
  buf.reserve(kMatrixHeaderBytes + static_cast<std::size_t>(m.size()) * 4);
  buf.append(kMatrixMagic.data(), kMatrixMagic.size());
  detail::put<std::uint32_t>(buf, kMatrixVersion);
  detail::put<std::uint64_t>(buf, static_cast<std::uint64_t>(m.rows()));
  detail::put<std::uint64_t>(buf, static_cast<std::uint64_t>(m.cols()));
  detail::put<std::uint32_t>(buf, kElementFloat32);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) detail::put<float>(buf, static_cast<float>(m(i, j)));
  }
  return buf;
}

inline FeatureMatrix decode_matrix(const std::string& buf, const std::string& origin = "<memory>") {
  if (buf.size() < kMatrixHeaderBytes) throw FormatError(origin + ": truncated header");
  if (std::memcmp(buf.data(), kMatrixMagic.data(), 4) != 0) throw FormatError(origin + ": bad magic, not an SCMX matrix");
  const auto version = detail::get<std::uint32_t>(buf, 4);
  if (version != kMatrixVersion) throw FormatError(origin + ": unsupported version " + std::to_string(version));
  const auto rows = detail::get<std::uint64_t>(buf, 8);
  const auto cols = detail::get<std::uint64_t>(buf, 16);
  const auto type = detail::get<std::uint32_t>(buf, 24);
  if (type != kElementFloat32) throw FormatError(origin + ": unsupported element type " + std::to_string(type));
  if (cols != 0 && rows > (UINT64_MAX / 4) / cols) throw FormatError(origin + ": dimensions overflow");
  const std::uint64_t payload = rows * cols * 4;
  if (buf.size() - kMatrixHeaderBytes != payload) {
    throw FormatError(origin + ": payload is " + std::to_string(buf.size() - kMatrixHeaderBytes) + " bytes, expected " +
                      std::to_string(payload));
  }
  FeatureMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::size_t off = kMatrixHeaderBytes;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j, off += 4) {
      const float v = detail::get<float>(buf, off);
      if (!std::isfinite(v)) throw FormatError(origin + ": non-finite value at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      m(i, j) = v;
    }
  }
  return m;
}

inline void save_matrix(const fs::path& path, const FeatureMatrix& m) { write_file(path, encode_matrix(m)); }

inline FeatureMatrix load_matrix(const fs::path& path) { return decode_matrix(read_file(path), path.string()); }

// ---------------------------------------------------------------------------
// Raw PCM: little-endian binary32, no header.
// ---------------------------------------------------------------------------

inline std::vector<double> load_pcm_f32(const fs::path& path) {
  const std::string buf = read_file(path);
  if (buf.size() % 4 != 0) throw FormatError(path.string() + ": PCM size is not a multiple of 4 bytes");
  std::vector<double> out(buf.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float v = detail::get<float>(buf, i * 4);
    if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite sample " + std::to_string(i));
    out[i] = v;
  }
  return out;
}

inline void save_pcm_f32(const fs::path& path, const Vector& samples) {
  std::string buf;
  buf.reserve(static_cast<std::size_t>(samples.size()) * 4);
  for (Eigen::Index i = 0; i < samples.size(); ++i) detail::put<float>(buf, static_cast<float>(samples[i]));
  write_file(path, buf);
}

// ---------------------------------------------------------------------------
// Key-value records: UTF-8 "key=value" lines, '#' starts a comment line.
// ---------------------------------------------------------------------------

class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& origin = "<memory>") {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw FormatError(origin + ":" + std::to_string(line_no) + ": expected key=value");
      kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
  }

  static KeyValues load(const fs::path& path) { return parse(read_file(path), path.string()); }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set(const std::string& key, double value) {
    std::ostringstream ss;
    ss.precision(17);
    ss << value;
    values_[key] = ss.str();
  }
  void set(const std::string& key, long long value) { values_[key] = std::to_string(value); }
  void set(const std::string& key, int value) { values_[key] = std::to_string(value); }
  void set(const std::string& key, std::uint64_t value) { values_[key] = std::to_string(value); }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw FormatError("missing key '" + key + "'");
    return it->second;
  }

  std::string get_or(const std::string& key, const std::string& fallback) const { return has(key) ? get(key) : fallback; }

  double get_double(const std::string& key) const { return to_double(key, get(key)); }
  double get_double_or(const std::string& key, double fallback) const { return has(key) ? get_double(key) : fallback; }
  long long get_int(const std::string& key) const { return to_int(key, get(key)); }
  long long get_int_or(const std::string& key, long long fallback) const { return has(key) ? get_int(key) : fallback; }
  std::uint64_t get_u64(const std::string& key) const {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(get(key), &used);
      if (used != get(key).size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::logic_error&) {
      throw FormatError("key '" + key + "' is not an unsigned integer: " + get(key));
    }
  }

  const std::map<std::string, std::string>& items() const { return values_; }

  std::string str() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  void save(const fs::path& path) const { write_file(path, str()); }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
  }

  static double to_double(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(key);
      return d;
    } catch (const std::logic_error&) {
      throw FormatError("key '" + key + "' is not a number: " + v);
    }
  }

  static long long to_int(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const long long d = std::stoll(v, &used);
      if (used != v.size()) throw std::invalid_argument(key);
      return d;
    } catch (const std::logic_error&) {
      throw FormatError("key '" + key + "' is not an integer: " + v);
    }
  }

  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Dataset manifest: tab-separated
//   clip_id  event_label  audio_path  video_path  keyframe_count
// Relative paths resolve against the manifest's directory.
// ---------------------------------------------------------------------------

inline constexpr const char* kBackgroundLabel = "background";

struct ManifestRecord {
  std::string clip_id;
  std::string event_label;
  fs::path audio_path;
  fs::path video_path;
  int keyframe_count = 0;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
};

inline DatasetManifest parse_manifest(const std::string& text, const fs::path& base_dir, bool check_paths,
                                      const std::string& origin = "<memory>") {
  DatasetManifest m;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    const std::string where = origin + ":" + std::to_string(line_no);
    if (fields.size() != 5) throw FormatError(where + ": expected 5 tab-separated fields, got " + std::to_string(fields.size()));
    ManifestRecord r;
    r.clip_id = fields[0];
    r.event_label = fields[1];
    if (r.clip_id.empty() || r.event_label.empty()) throw FormatError(where + ": empty clip id or label");
    r.audio_path = base_dir / fields[2];
    r.video_path = base_dir / fields[3];
    try {
      std::size_t used = 0;
      r.keyframe_count = std::stoi(fields[4], &used);
      if (used != fields[4].size() || r.keyframe_count < 1) throw std::invalid_argument("keyframes");
    } catch (const std::logic_error&) {
      throw FormatError(where + ": keyframe_count must be a positive integer");
    }
    if (!seen.insert(r.clip_id).second) throw FormatError(where + ": duplicate clip id '" + r.clip_id + "'");
    if (check_paths) {
      if (!fs::exists(r.audio_path)) throw IoError(where + ": missing audio file " + r.audio_path.string());
      if (!fs::exists(r.video_path)) throw IoError(where + ": missing video file " + r.video_path.string());
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

inline DatasetManifest load_manifest(const fs::path& path, bool check_paths = true) {
  return parse_manifest(read_file(path), path.parent_path(), check_paths, path.string());
}

// ---------------------------------------------------------------------------
// Digests
// ---------------------------------------------------------------------------

inline std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xf];
  }
  return out;
}

inline std::string file_digest(const fs::path& path) { return sha256_hex(read_file(path)); }

}  // namespace mmsc::io
