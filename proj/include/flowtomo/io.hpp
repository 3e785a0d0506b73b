#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"

#include "flowtomo/types.hpp"
#include "flowtomo/warp.hpp"

namespace flowtomo {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* dataset_format_version = "flowtomo-dataset/1";

/// JSON sidecar describing raw f32-le companion files.
struct DatasetManifest {
    std::string format_version = dataset_format_version;
    std::string kind; // "volume", "projections" or "flow"
    std::string dtype = "f32-le";
    Shape3 dims{};
    bool has_geometry = false;
    ScanGeometry geometry{};
    json provenance = json::object();
    std::vector<std::string> files; // relative to the manifest
    std::vector<std::string> checksums;
    std::string dims_hash;
};

template <class T>
struct Loaded {
    T data;
    DatasetManifest manifest;
    /// False when the declared dims no longer match their stored hash.
    bool dims_hash_ok = true;
    /// False when a binary's SHA-256 differs from the manifest entry.
    bool checksums_ok = true;
};

inline std::string sha256_hex(const void* data, std::size_t n) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    require(EVP_Digest(data, n, md, &len, EVP_sha256(), nullptr) == 1, ErrorCode::io_error, "sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

inline std::string dims_hash(const std::string& kind, const Shape3& d) {
    const std::string s = kind + ":" + std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
    return sha256_hex(s.data(), s.size()).substr(0, 16);
}

inline json to_json(const ScanGeometry& g) {
    return json{{"n_rotations", g.n_rotations},
                {"n_per_rotation", g.n_per_rotation},
                {"range_per_rotation", g.range_per_rotation},
                {"angles", g.angles},
                {"time_stamps", g.time_stamps},
                {"detector_width", g.detector_width},
                {"detector_height", g.detector_height},
                {"volume_n", g.volume_n}};
}

inline ScanGeometry geometry_from_json(const json& j) {
    ScanGeometry g;
    try {
        g.n_rotations = j.at("n_rotations").get<std::size_t>();
        g.n_per_rotation = j.at("n_per_rotation").get<std::size_t>();
        g.range_per_rotation = j.at("range_per_rotation").get<double>();
        g.angles = j.at("angles").get<std::vector<double>>();
        g.time_stamps = j.at("time_stamps").get<std::vector<double>>();
        g.detector_width = j.at("detector_width").get<std::size_t>();
        g.detector_height = j.at("detector_height").get<std::size_t>();
        g.volume_n = j.at("volume_n").get<std::size_t>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::unknown_format, std::string("geometry: ") + e.what());
    }
    validate(g);
    return g;
}

inline json to_json(const DatasetManifest& m) {
    json j{{"format_version", m.format_version},
           {"kind", m.kind},
           {"dtype", m.dtype},
           {"dims", {m.dims[0], m.dims[1], m.dims[2]}},
           {"dims_hash", m.dims_hash},
           {"files", m.files},
           {"checksums", m.checksums},
           {"provenance", m.provenance}};
    if (m.has_geometry) j["geometry"] = to_json(m.geometry);
    return j;
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
inline void write_file_atomic(const fs::path& path, const void* bytes, std::size_t n) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        require(bool(os), ErrorCode::io_error, "cannot open " + tmp.string() + " for writing");
        os.write(static_cast<const char*>(bytes), std::streamsize(n));
        require(bool(os), ErrorCode::io_error, "write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    require(!ec, ErrorCode::io_error, "cannot rename " + tmp.string() + ": " + ec.message());
}

inline void write_text_atomic(const fs::path& path, const std::string& text) {
    write_file_atomic(path, text.data(), text.size());
}

namespace detail {

inline std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

template <class T>
std::vector<std::uint32_t> encode_f32(std::span<const T> v) {
    std::vector<std::uint32_t> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = to_le(std::bit_cast<std::uint32_t>(static_cast<float>(v[i])));
    return out;
}

template <class T>
void decode_f32(const std::vector<std::uint32_t>& raw, std::span<T> out) {
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<T>(std::bit_cast<float>(to_le(raw[i])));
}

inline fs::path binary_path(const fs::path& manifest, const std::string& suffix) {
    fs::path p = manifest;
    p.replace_extension(suffix);
    return p;
}

/// Writes each array as raw f32-le, then the manifest last.
template <class T>
void save_arrays(const fs::path& path, DatasetManifest m, const std::vector<const Grid3<T>*>& arrays,
                 const std::vector<std::string>& suffixes) {
    m.dims = arrays.front()->shape();
    m.dims_hash = dims_hash(m.kind, m.dims);
    m.files.clear();
    m.checksums.clear();
    for (std::size_t k = 0; k < arrays.size(); ++k) {
        const auto raw = encode_f32<T>(arrays[k]->values());
        const fs::path bin = binary_path(path, suffixes[k]);
        write_file_atomic(bin, raw.data(), raw.size() * 4);
        m.files.push_back(bin.filename().string());
        m.checksums.push_back(sha256_hex(raw.data(), raw.size() * 4));
    }
    write_text_atomic(path, to_json(m).dump(2) + "\n");
}

} // namespace detail

inline DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream is(path);
    require(bool(is), ErrorCode::io_error, "cannot read " + path.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::unknown_format, path.string() + ": not a JSON manifest (" + e.what() + ")");
    }
    DatasetManifest m;
    try {
        m.format_version = j.at("format_version").get<std::string>();
        require(m.format_version == dataset_format_version, ErrorCode::unknown_format,
                path.string() + ": unknown format_version '" + m.format_version + "'");
        m.kind = j.at("kind").get<std::string>();
        m.dtype = j.at("dtype").get<std::string>();
        require(m.dtype == "f32-le", ErrorCode::unknown_format, path.string() + ": unsupported dtype '" + m.dtype + "'");
        const auto d = j.at("dims").get<std::vector<std::size_t>>();
        require(d.size() == 3, ErrorCode::unknown_format, path.string() + ": dims must have 3 entries");
        m.dims = {d[0], d[1], d[2]};
        m.dims_hash = j.value("dims_hash", std::string{});
        m.files = j.at("files").get<std::vector<std::string>>();
        m.checksums = j.value("checksums", std::vector<std::string>{});
        m.provenance = j.value("provenance", json::object());
        if (j.contains("geometry")) {
            m.has_geometry = true;
            m.geometry = geometry_from_json(j.at("geometry"));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::unknown_format, path.string() + ": malformed manifest (" + e.what() + ")");
    }
    return m;
}

namespace detail {

template <class T>
Grid3<T> read_array(const fs::path& manifest_path, const DatasetManifest& m, std::size_t index, bool& checksum_ok) {
    require(index < m.files.size(), ErrorCode::unknown_format, manifest_path.string() + ": missing file entry");
    const fs::path bin = manifest_path.parent_path() / m.files[index];
    std::error_code ec;
    const auto actual = fs::file_size(bin, ec);
    require(!ec, ErrorCode::io_error, "cannot read " + bin.string() + ": " + ec.message());
    const std::size_t count = m.dims[0] * m.dims[1] * m.dims[2];
    require(actual == count * 4, ErrorCode::size_mismatch,
            bin.string() + ": size mismatch, expected " + std::to_string(count * 4) + " bytes, found " +
                std::to_string(actual));
    std::vector<std::uint32_t> raw(count);
    std::ifstream is(bin, std::ios::binary);
    require(bool(is), ErrorCode::io_error, "cannot read " + bin.string());
    is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(count * 4));
    require(bool(is), ErrorCode::io_error, "short read: " + bin.string());
    if (index < m.checksums.size() && m.checksums[index] != sha256_hex(raw.data(), raw.size() * 4)) checksum_ok = false;
    Grid3<T> g(m.dims);
    decode_f32<T>(raw, g.values());
    return g;
}

template <class X>
Loaded<X> start_load(const fs::path& path, const char* kind, DatasetManifest& m) {
    m = load_manifest(path);
    require(m.kind == kind, ErrorCode::unknown_format,
            path.string() + ": expected a " + kind + " dataset, found '" + m.kind + "'");
    Loaded<X> out;
    out.dims_hash_ok = m.dims_hash == dims_hash(m.kind, m.dims);
    return out;
}

} // namespace detail

template <class T>
void save_volume(const fs::path& path, const Volume<T>& u, const json& provenance = json::object()) {
    DatasetManifest m;
    m.kind = "volume";
    m.provenance = provenance;
    detail::save_arrays<T>(path, m, {&u}, {".f32"});
}

template <class T>
void save_projections(const fs::path& path, const ProjectionStack<T>& p, const json& provenance = json::object()) {
    DatasetManifest m;
    m.kind = "projections";
    m.has_geometry = true;
    m.geometry = p.geometry;
    m.provenance = provenance;
    detail::save_arrays<T>(path, m, {&p.data}, {".f32"});
}

template <class T>
void save_flow(const fs::path& path, const FlowStack<T>& f, const json& provenance = json::object()) {
    DatasetManifest m;
    m.kind = "flow";
    m.provenance = provenance;
    detail::save_arrays<T>(path, m, {&f.fs, &f.fz}, {".fs.f32", ".fz.f32"});
}

template <class T>
void save_field(const fs::path& path, const VectorField3<T>& w, const json& provenance = json::object()) {
    DatasetManifest m;
    m.kind = "field";
    m.provenance = provenance;
    detail::save_arrays<T>(path, m, {&w[0], &w[1], &w[2]}, {".x.f32", ".y.f32", ".z.f32"});
}

template <class T = float>
Loaded<Volume<T>> load_volume(const fs::path& path) {
    DatasetManifest m;
    auto out = detail::start_load<Volume<T>>(path, "volume", m);
    out.data = detail::read_array<T>(path, m, 0, out.checksums_ok);
    out.manifest = std::move(m);
    return out;
}

template <class T = float>
Loaded<ProjectionStack<T>> load_projections(const fs::path& path) {
    DatasetManifest m;
    auto out = detail::start_load<ProjectionStack<T>>(path, "projections", m);
    require(m.has_geometry, ErrorCode::unknown_format, path.string() + ": projections without geometry");
    auto g = detail::read_array<T>(path, m, 0, out.checksums_ok);
    if (out.dims_hash_ok)
        out.data = ProjectionStack<T>(std::move(g), m.geometry);
    else {
        out.data.data = std::move(g);
        out.data.geometry = m.geometry;
    }
    out.manifest = std::move(m);
    return out;
}

template <class T = float>
Loaded<FlowStack<T>> load_flow(const fs::path& path) {
    DatasetManifest m;
    auto out = detail::start_load<FlowStack<T>>(path, "flow", m);
    out.data.fs = detail::read_array<T>(path, m, 0, out.checksums_ok);
    out.data.fz = detail::read_array<T>(path, m, 1, out.checksums_ok);
    out.manifest = std::move(m);
    return out;
}

template <class T = float>
Loaded<VectorField3<T>> load_field(const fs::path& path) {
    DatasetManifest m;
    auto out = detail::start_load<VectorField3<T>>(path, "field", m);
    for (std::size_t c = 0; c < 3; ++c) out.data[c] = detail::read_array<T>(path, m, c, out.checksums_ok);
    out.manifest = std::move(m);
    return out;
}

} // namespace flowtomo
