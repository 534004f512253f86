#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tdens/errors.hpp"
#include "tdens/types.hpp"

/// File formats.
///
/// Frames       binary PGM (P5), maxval 255.
/// Annotations  CSV, header `frame_id,x0,y0,x1,y1`, half-open integer boxes.
/// Density map  `DMAP` raster: 16-byte header (magic "DMAP", u32le width,
///              u32le height, 4 zero pad bytes), then height*width f64le
///              values, row-major. Round-trips bit-exactly.
/// Features     `FEAT` cache: magic "FEAT", u32le N, J, K, then N*J*K f64le
///              values (frame-major, each frame row-major J x K).
/// Model        one-line JSON header, '\n', magic "WMAT", then K*J f64le
///              (row-major).
/// Manifest     JSON describing a dataset; see DatasetManifest.
///
/// All writers are atomic: payload goes to `<path>.tmp`, then rename.

namespace tdens {

namespace detail {

inline void append_u32le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

inline void append_f64le(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

inline std::uint32_t read_u32le(std::string_view buf, std::size_t& pos, const char* what) {
    if (buf.size() - pos < 4) throw IoError(std::string("unexpected end of data reading ") + what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
}

inline double read_f64le(std::string_view buf, std::size_t& pos, const char* what) {
    if (buf.size() - pos < 8) throw IoError(std::string("unexpected end of data reading ") + what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

} // namespace detail

/// Shortest decimal representation that round-trips the exact double.
inline std::string format_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec; // cannot fail for finite doubles with this buffer size
    return std::string(buf, end);
}

inline std::string hash_to_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return s;
}

inline std::uint64_t hex_to_hash(const std::string& s) {
    if (s.size() != 16) throw IoError("bad hash string: " + s);
    std::uint64_t h = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), h, 16);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw IoError("bad hash string: " + s);
    return h;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open file: " + path.string());
    const std::streamoff size = in.tellg();
    std::string buf(static_cast<std::size_t>(size), '\0');
    in.seekg(0);
    if (size > 0) in.read(buf.data(), size);
    if (!in) throw IoError("read failed: " + path.string());
    return buf;
}

/// Write `data` to `path` via a temp file + rename so readers never observe
/// a partial file. Creates missing parent directories.
inline void atomic_write_file(const std::filesystem::path& path, std::string_view data) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (const fs::path parent = path.parent_path(); !parent.empty())
        fs::create_directories(parent, ec); // failure surfaces as open error below
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        out.flush();
        if (!out) {
            fs::remove(tmp, ec);
            throw IoError("write failed: " + tmp.string());
        }
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("rename failed for " + path.string() + ": " + ec.message());
    }
}

// -------------------------------------------------------------------------
// PGM (P5)
// -------------------------------------------------------------------------

namespace detail {

inline bool pgm_is_space(char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f';
}

inline void pgm_skip_space(std::string_view s, std::size_t& pos) {
    while (pos < s.size()) {
        if (pgm_is_space(s[pos])) {
            ++pos;
        } else if (s[pos] == '#') {
            while (pos < s.size() && s[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
}

inline int pgm_read_int(std::string_view s, std::size_t& pos, const char* what) {
    pgm_skip_space(s, pos);
    const std::size_t start = pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
    if (pos == start) throw IoError(std::string("pgm: malformed header, expected ") + what);
    int value = 0;
    auto [p, ec] = std::from_chars(s.data() + start, s.data() + pos, value);
    if (ec != std::errc{}) throw IoError(std::string("pgm: bad value for ") + what);
    return value;
}

} // namespace detail

inline Frame load_frame(const std::filesystem::path& path) {
    const std::string buf = read_file(path);
    if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5')
        throw IoError("pgm: not a binary PGM (P5): " + path.string());
    std::size_t pos = 2;
    const int w = detail::pgm_read_int(buf, pos, "width");
    const int h = detail::pgm_read_int(buf, pos, "height");
    const int maxval = detail::pgm_read_int(buf, pos, "maxval");
    if (w < 1 || h < 1) throw IoError("pgm: bad dimensions in " + path.string());
    if (maxval != 255) throw IoError("pgm: unsupported maxval (must be 255) in " + path.string());
    if (pos >= buf.size() || !detail::pgm_is_space(buf[pos]))
        throw IoError("pgm: missing separator after maxval in " + path.string());
    ++pos;
    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (buf.size() - pos < need) throw IoError("pgm: unexpected end of data in " + path.string());
    if (buf.size() - pos > need) throw IoError("pgm: trailing bytes after pixel data in " + path.string());
    Frame f = make_frame(w, h);
    std::memcpy(f.pixels.data(), buf.data() + pos, need);
    return f;
}

/// Canonical encoding: `P5\n<w> <h>\n255\n<pixels>`. Saving a loaded frame
/// reproduces any file that uses this canonical header byte-for-byte.
inline std::string encode_pgm(const Frame& f) {
    std::string out = "P5\n" + std::to_string(f.width) + " " + std::to_string(f.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(f.pixels.data()), f.pixels.size());
    return out;
}

inline void save_frame(const Frame& f, const std::filesystem::path& path) {
    atomic_write_file(path, encode_pgm(f));
}

// -------------------------------------------------------------------------
// Annotations CSV
// -------------------------------------------------------------------------

inline constexpr const char* kAnnotationHeader = "frame_id,x0,y0,x1,y1";

namespace detail {

inline int parse_coord(std::string_view field, const std::string& line) {
    int value = 0;
    auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || p != field.data() + field.size())
        throw IoError("annotations: non-integer coordinate in line: " + line);
    return value;
}

} // namespace detail

/// Boxes grouped by frame_id: one Annotation per distinct id, in order of
/// first appearance, boxes in file order within a frame.
inline std::vector<Annotation> load_annotations(const std::filesystem::path& path) {
    const std::string buf = read_file(path);
    std::vector<Annotation> out;
    std::unordered_map<std::string, std::size_t> index;
    std::size_t pos = 0;
    bool saw_header = false;
    while (pos < buf.size()) {
        std::size_t eol = buf.find('\n', pos);
        if (eol == std::string::npos) eol = buf.size();
        std::string line = buf.substr(pos, eol - pos);
        pos = eol + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!saw_header) {
            if (line != kAnnotationHeader)
                throw IoError("annotations: unknown header in " + path.string() + ": " + line);
            saw_header = true;
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string_view> fields;
        std::string_view rest = line;
        while (true) {
            const std::size_t comma = rest.find(',');
            if (comma == std::string_view::npos) {
                fields.push_back(rest);
                break;
            }
            fields.push_back(rest.substr(0, comma));
            rest.remove_prefix(comma + 1);
        }
        if (fields.size() != 5)
            throw IoError("annotations: expected 5 fields in line: " + line);
        if (fields[0].empty())
            throw IoError("annotations: empty frame_id in line: " + line);
        BBox box{detail::parse_coord(fields[1], line), detail::parse_coord(fields[2], line),
                 detail::parse_coord(fields[3], line), detail::parse_coord(fields[4], line)};
        if (!box.valid())
            throw IoError("annotations: degenerate box in line: " + line);
        const std::string id(fields[0]);
        auto [it, fresh] = index.try_emplace(id, out.size());
        if (fresh) out.push_back(Annotation{id, {}});
        out[it->second].boxes.push_back(box);
    }
    if (!saw_header)
        throw IoError("annotations: unknown header in " + path.string() + ": <empty file>");
    return out;
}

inline std::string encode_annotations(const std::vector<Annotation>& anns) {
    std::string out = kAnnotationHeader;
    out += '\n';
    for (const Annotation& a : anns) {
        for (const BBox& b : a.boxes) {
            out += a.frame_id;
            out += ',' + std::to_string(b.x0) + ',' + std::to_string(b.y0);
            out += ',' + std::to_string(b.x1) + ',' + std::to_string(b.y1);
            out += '\n';
        }
    }
    return out;
}

inline void save_annotations(const std::vector<Annotation>& anns, const std::filesystem::path& path) {
    atomic_write_file(path, encode_annotations(anns));
}

// -------------------------------------------------------------------------
// Density raster (DMAP)
// -------------------------------------------------------------------------

inline std::string encode_density(const DensityMap& map) {
    std::string out;
    out.reserve(16 + map.values.size() * 8);
    out += "DMAP";
    detail::append_u32le(out, static_cast<std::uint32_t>(map.width));
    detail::append_u32le(out, static_cast<std::uint32_t>(map.height));
    out.append(4, '\0');
    for (double v : map.values) detail::append_f64le(out, v);
    return out;
}

inline void save_density(const DensityMap& map, const std::filesystem::path& path) {
    atomic_write_file(path, encode_density(map));
}

inline DensityMap load_density(const std::filesystem::path& path) {
    const std::string buf = read_file(path);
    if (buf.size() < 16 || buf.compare(0, 4, "DMAP") != 0)
        throw IoError("not a density file: " + path.string());
    std::size_t pos = 4;
    const std::uint32_t w = detail::read_u32le(buf, pos, "width");
    const std::uint32_t h = detail::read_u32le(buf, pos, "height");
    pos += 4; // pad
    if (w == 0 || h == 0 || w > (1u << 24) || h > (1u << 24))
        throw IoError("density file: bad dimensions in " + path.string());
    const std::uint64_t n = static_cast<std::uint64_t>(w) * h;
    if (buf.size() - pos != n * 8)
        throw IoError("density file: payload size mismatch in " + path.string());
    DensityMap map = make_density_map(static_cast<int>(w), static_cast<int>(h));
    for (std::uint64_t i = 0; i < n; ++i)
        map.values[static_cast<std::size_t>(i)] = detail::read_f64le(buf, pos, "density value");
    return map;
}

// -------------------------------------------------------------------------
// Feature cache (FEAT)
// -------------------------------------------------------------------------

inline std::string encode_features(const std::vector<FeatureMatrix>& frames) {
    const std::uint32_t n = static_cast<std::uint32_t>(frames.size());
    const std::uint32_t j = n > 0 ? static_cast<std::uint32_t>(frames[0].rows()) : 0;
    const std::uint32_t k = n > 0 ? static_cast<std::uint32_t>(frames[0].cols()) : 0;
    for (const FeatureMatrix& X : frames)
        if (static_cast<std::uint32_t>(X.rows()) != j || static_cast<std::uint32_t>(X.cols()) != k)
            throw std::invalid_argument("encode_features: inconsistent feature dimensions");
    std::string out;
    out.reserve(16 + static_cast<std::size_t>(n) * j * k * 8);
    out += "FEAT";
    detail::append_u32le(out, n);
    detail::append_u32le(out, j);
    detail::append_u32le(out, k);
    for (const FeatureMatrix& X : frames)
        for (std::uint32_t r = 0; r < j; ++r)
            for (std::uint32_t c = 0; c < k; ++c)
                detail::append_f64le(out, X(r, c));
    return out;
}

inline void save_features(const std::vector<FeatureMatrix>& frames, const std::filesystem::path& path) {
    atomic_write_file(path, encode_features(frames));
}

inline std::vector<FeatureMatrix> load_features(const std::filesystem::path& path) {
    const std::string buf = read_file(path);
    if (buf.size() < 16 || buf.compare(0, 4, "FEAT") != 0)
        throw IoError("not a feature cache file: " + path.string());
    std::size_t pos = 4;
    const std::uint32_t n = detail::read_u32le(buf, pos, "frame count");
    const std::uint32_t j = detail::read_u32le(buf, pos, "block count");
    const std::uint32_t k = detail::read_u32le(buf, pos, "feature dimension");
    const std::uint64_t total = static_cast<std::uint64_t>(n) * j * k;
    if (buf.size() - pos != total * 8)
        throw IoError("feature cache: payload size mismatch in " + path.string());
    std::vector<FeatureMatrix> out;
    out.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        FeatureMatrix X(j, k);
        for (std::uint32_t r = 0; r < j; ++r)
            for (std::uint32_t c = 0; c < k; ++c)
                X(r, c) = detail::read_f64le(buf, pos, "feature value");
        out.push_back(std::move(X));
    }
    return out;
}

// -------------------------------------------------------------------------
// Model file (JSON header + WMAT block)
// -------------------------------------------------------------------------

struct Model {
    WeightMatrix W;           ///< K x J, column j being block j's weights
    int rank = 1;             ///< rank bound the fit was run with
    double alpha = 0.0;
    double beta = 0.0;
    std::uint64_t feature_hash = 0; ///< hash of the feature pipeline settings
};

inline std::string encode_model(const Model& m) {
    nlohmann::json header = {
        {"alpha", m.alpha},
        {"beta", m.beta},
        {"cols", m.W.cols()},
        {"feature_hash", hash_to_hex(m.feature_hash)},
        {"format", "tdens-model-v1"},
        {"rank", m.rank},
        {"rows", m.W.rows()},
    };
    std::string out = header.dump();
    out += "\nWMAT";
    for (Eigen::Index r = 0; r < m.W.rows(); ++r)
        for (Eigen::Index c = 0; c < m.W.cols(); ++c)
            detail::append_f64le(out, m.W(r, c));
    return out;
}

inline void save_model(const Model& m, const std::filesystem::path& path) {
    atomic_write_file(path, encode_model(m));
}

inline Model load_model(const std::filesystem::path& path) {
    const std::string buf = read_file(path);
    const std::size_t nl = buf.find('\n');
    if (nl == std::string::npos) throw IoError("model file: missing header line in " + path.string());
    Model m;
    Eigen::Index rows = 0, cols = 0;
    try {
        const nlohmann::json header = nlohmann::json::parse(buf.substr(0, nl));
        if (header.at("format").get<std::string>() != "tdens-model-v1")
            throw IoError("model file: unknown format in " + path.string());
        m.alpha = header.at("alpha").get<double>();
        m.beta = header.at("beta").get<double>();
        m.rank = header.at("rank").get<int>();
        m.feature_hash = hex_to_hash(header.at("feature_hash").get<std::string>());
        rows = header.at("rows").get<Eigen::Index>();
        cols = header.at("cols").get<Eigen::Index>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("model file: bad header in " + path.string() + ": " + e.what());
    }
    if (rows < 1 || cols < 1 || m.rank < 1)
        throw IoError("model file: bad dimensions in " + path.string());
    std::size_t pos = nl + 1;
    if (buf.compare(pos, 4, "WMAT") != 0)
        throw IoError("model file: missing WMAT block in " + path.string());
    pos += 4;
    if (buf.size() - pos != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * 8)
        throw IoError("model file: weight payload size mismatch in " + path.string());
    m.W.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            m.W(r, c) = detail::read_f64le(buf, pos, "weight");
    return m;
}

// -------------------------------------------------------------------------
// Dataset manifest (JSON)
// -------------------------------------------------------------------------

struct FrameEntry {
    std::string id;   ///< frame_id used in the annotations CSV
    std::string path; ///< relative to the manifest's directory
};

struct DatasetManifest {
    std::vector<FrameEntry> frames;
    std::string annotations_path;
    std::string background_path;
    RectI roi;
    double region_length = 1.0;
};

/// Resolve a manifest-relative path against the manifest's location.
inline std::filesystem::path resolve_path(const std::filesystem::path& manifest_path,
                                          const std::string& rel) {
    const std::filesystem::path p(rel);
    if (p.is_absolute()) return p;
    return manifest_path.parent_path() / p;
}

inline std::string encode_manifest(const DatasetManifest& m) {
    nlohmann::json frames = nlohmann::json::array();
    for (const FrameEntry& f : m.frames)
        frames.push_back({{"id", f.id}, {"path", f.path}});
    const nlohmann::json j = {
        {"annotations", m.annotations_path},
        {"background", m.background_path},
        {"frames", frames},
        {"region_length", m.region_length},
        {"roi", {{"x0", m.roi.x0}, {"x1", m.roi.x1}, {"y0", m.roi.y0}, {"y1", m.roi.y1}}},
    };
    return j.dump(2) + "\n";
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    atomic_write_file(path, encode_manifest(m));
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    DatasetManifest m;
    try {
        const nlohmann::json j = nlohmann::json::parse(read_file(path));
        m.annotations_path = j.at("annotations").get<std::string>();
        m.background_path = j.at("background").get<std::string>();
        for (const nlohmann::json& f : j.at("frames"))
            m.frames.push_back(FrameEntry{f.at("id").get<std::string>(), f.at("path").get<std::string>()});
        m.region_length = j.at("region_length").get<double>();
        const nlohmann::json& roi = j.at("roi");
        m.roi = RectI{roi.at("x0").get<int>(), roi.at("y0").get<int>(),
                      roi.at("x1").get<int>(), roi.at("y1").get<int>()};
    } catch (const nlohmann::json::exception& e) {
        throw IoError("manifest: malformed JSON in " + path.string() + ": " + e.what());
    }
    if (!m.roi.valid())
        throw IoError("manifest: invalid roi in " + path.string());
    if (!(m.region_length > 0))
        throw IoError("manifest: region_length must be > 0 in " + path.string());
    return m;
}

} // namespace tdens
