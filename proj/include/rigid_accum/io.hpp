#pragma once

#include "rigid_accum/core.hpp"
#include "rigid_accum/gt.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rigid_accum {

class MalformedHeader : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TruncatedBody : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NonUnitQuaternion : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class GapInFrames : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SizeMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class PlyFormat { Ascii, BinaryLittleEndian };

/// Extra per-vertex uint32 columns written after the standard properties.
using PlyColumns = std::map<std::string, std::vector<std::uint32_t>>;

/// Vertex properties x, y, z (float32), intensity (float32, if present) and
/// foreground, dynamic (uchar), instance (uint32) when the frame has labels.
void write_ply(const std::string& path, const Frame& frame, PlyFormat format = PlyFormat::BinaryLittleEndian,
               const PlyColumns& extra = {});

struct PlyData {
    Frame frame;
    /// Unrecognised scalar vertex properties, converted to uint32.
    PlyColumns extra;
    /// Skipped properties and elements.
    std::vector<std::string> warnings;
};

/// Reads ASCII or binary little-endian PLY. x, y, z are required; list
/// properties and non-vertex elements are skipped with a warning.
PlyData read_ply_data(const std::string& path);
Frame read_ply(const std::string& path);

/// One line per frame: `t qw qx qy qz tx ty tz`, t contiguous from 1.
/// Quaternions within 1e-3 of unit norm are renormalised, others rejected.
std::vector<RigidTransform> read_poses(const std::string& path);
void write_poses(const std::string& path, std::span<const RigidTransform> poses);

/// Little-endian u32 count followed by count x 3 float32.
void write_flow(const std::string& path, std::span<const Vec3> flow);
PointList read_flow(const std::string& path);

/// Little-endian u32 count followed by count u32 values.
void write_labels(const std::string& path, std::span<const std::uint32_t> labels);
std::vector<std::uint32_t> read_labels(const std::string& path);

/// Flat `key = value` text with bracketed sections; a section name may
/// repeat, each occurrence being its own entry. Keys before any header go to
/// an unnamed section. '#' and ';' start comments.
struct ConfigSection {
    std::string name;
    std::map<std::string, std::string> values;
    int line = 0;
};

class ConfigFile {
public:
    static ConfigFile parse(const std::string& text);
    static ConfigFile load(const std::string& path);

    std::vector<const ConfigSection*> sections(const std::string& name) const;
    /// First section with this name, or nullptr.
    const ConfigSection* section(const std::string& name) const;
    const std::vector<ConfigSection>& all() const { return sections_; }

    std::string to_string() const;
    void add(ConfigSection s) { sections_.push_back(std::move(s)); }
    /// Sets a key in the first section of that name, creating it if needed.
    void set(const std::string& section, const std::string& key, const std::string& value);

private:
    std::vector<ConfigSection> sections_;
};

/// Typed lookups with defaults; malformed values throw ConfigError naming
/// the key.
double get_double(const ConfigSection* s, const std::string& key, double fallback);
long long get_int(const ConfigSection* s, const std::string& key, long long fallback);
bool get_bool(const ConfigSection* s, const std::string& key, bool fallback);
std::string get_string(const ConfigSection* s, const std::string& key, const std::string& fallback);
/// Comma or whitespace separated numbers.
std::vector<double> get_doubles(const ConfigSection* s, const std::string& key, std::vector<double> fallback);
/// Throws ConfigError for keys not in `known`.
void check_keys(const ConfigSection& s, const std::vector<std::string>& known);

/// Directory layout:
///   sequence.cfg      [sequence] frames, interval
///   frames/NNNNN.ply  one file per frame, numbered from 00001
///   poses.txt         optional ground-truth ego poses
///   boxes.txt         optional box tracks
///   flow/NNNNN.bin    optional ground-truth flow
struct SequenceBundle {
    FrameSequence sequence;
    std::optional<std::vector<RigidTransform>> poses;
    std::optional<BoxTracks> boxes;
    std::optional<FlowField> flow;
};

std::string frame_name(std::size_t index_1based, const std::string& ext);
void write_bundle(const std::string& dir, const SequenceBundle& bundle);
/// Throws std::runtime_error when frames are missing.
SequenceBundle read_bundle(const std::string& dir);

}  // namespace rigid_accum
