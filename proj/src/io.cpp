#include "rigid_accum/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace rigid_accum {

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spill(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint64_t get_le(const char* p, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

std::uint32_t get_u32(const char* p) { return static_cast<std::uint32_t>(get_le(p, 4)); }
float get_f32(const char* p) { return std::bit_cast<float>(get_u32(p)); }

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// ---- PLY ----

enum class Scalar { I8, U8, I16, U16, I32, U32, F32, F64 };

std::optional<Scalar> parse_scalar(const std::string& t) {
    if (t == "char" || t == "int8") return Scalar::I8;
    if (t == "uchar" || t == "uint8") return Scalar::U8;
    if (t == "short" || t == "int16") return Scalar::I16;
    if (t == "ushort" || t == "uint16") return Scalar::U16;
    if (t == "int" || t == "int32") return Scalar::I32;
    if (t == "uint" || t == "uint32") return Scalar::U32;
    if (t == "float" || t == "float32") return Scalar::F32;
    if (t == "double" || t == "float64") return Scalar::F64;
    return std::nullopt;
}

int scalar_size(Scalar s) {
    switch (s) {
        case Scalar::I8:
        case Scalar::U8: return 1;
        case Scalar::I16:
        case Scalar::U16: return 2;
        case Scalar::I32:
        case Scalar::U32:
        case Scalar::F32: return 4;
        case Scalar::F64: return 8;
    }
    return 0;
}

double decode_scalar(const char* p, Scalar s) {
    std::uint64_t raw = get_le(p, scalar_size(s));
    switch (s) {
        case Scalar::I8: return static_cast<std::int8_t>(raw);
        case Scalar::U8: return static_cast<std::uint8_t>(raw);
        case Scalar::I16: return static_cast<std::int16_t>(raw);
        case Scalar::U16: return static_cast<std::uint16_t>(raw);
        case Scalar::I32: return static_cast<std::int32_t>(raw);
        case Scalar::U32: return static_cast<std::uint32_t>(raw);
        case Scalar::F32: return std::bit_cast<float>(static_cast<std::uint32_t>(raw));
        case Scalar::F64: return std::bit_cast<double>(raw);
    }
    return 0.0;
}

struct PlyProperty {
    std::string name;
    Scalar type = Scalar::F32;
    bool is_list = false;
    Scalar count_type = Scalar::U8;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> props;
};

struct PlyHeader {
    bool binary = false;
    std::vector<PlyElement> elements;
    std::size_t body_offset = 0;
};

PlyHeader parse_ply_header(const std::string& data, const std::string& path) {
    PlyHeader h;
    std::size_t pos = 0;
    bool saw_format = false;
    bool first = true;
    while (true) {
        std::size_t nl = data.find('\n', pos);
        if (nl == std::string::npos) throw MalformedHeader(path + ": missing end_header");
        std::string line = trim(data.substr(pos, nl - pos));
        pos = nl + 1;
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (first) {
            if (kw != "ply") throw MalformedHeader(path + ": missing 'ply' magic");
            first = false;
            continue;
        }
        if (kw.empty() || kw == "comment" || kw == "obj_info") continue;
        if (kw == "format") {
            std::string fmt, ver;
            ls >> fmt >> ver;
            if (fmt == "ascii") h.binary = false;
            else if (fmt == "binary_little_endian") h.binary = true;
            else throw MalformedHeader(path + ": unsupported format '" + fmt + "'");
            saw_format = true;
        } else if (kw == "element") {
            PlyElement e;
            long long n = -1;
            ls >> e.name >> n;
            if (e.name.empty() || n < 0 || ls.fail()) throw MalformedHeader(path + ": bad element line '" + line + "'");
            e.count = static_cast<std::size_t>(n);
            h.elements.push_back(std::move(e));
        } else if (kw == "property") {
            if (h.elements.empty()) throw MalformedHeader(path + ": property before element");
            PlyProperty p;
            std::string t;
            ls >> t;
            if (t == "list") {
                std::string ct, it;
                ls >> ct >> it >> p.name;
                auto c = parse_scalar(ct);
                auto i = parse_scalar(it);
                if (!c || !i || p.name.empty()) throw MalformedHeader(path + ": bad list property '" + line + "'");
                p.is_list = true;
                p.count_type = *c;
                p.type = *i;
            } else {
                auto s = parse_scalar(t);
                ls >> p.name;
                if (!s || p.name.empty()) throw MalformedHeader(path + ": bad property '" + line + "'");
                p.type = *s;
            }
            h.elements.back().props.push_back(p);
        } else if (kw == "end_header") {
            break;
        } else {
            throw MalformedHeader(path + ": unknown header keyword '" + kw + "'");
        }
    }
    if (!saw_format) throw MalformedHeader(path + ": missing format line");
    h.body_offset = pos;
    return h;
}

// Pulls scalar values from either an ASCII token stream or a binary buffer.
class PlyReader {
public:
    PlyReader(const std::string& data, std::size_t offset, bool binary, std::string path)
        : data_(data), pos_(offset), binary_(binary), path_(std::move(path)) {}

    double next(Scalar s) {
        if (binary_) {
            int n = scalar_size(s);
            if (pos_ + static_cast<std::size_t>(n) > data_.size()) throw TruncatedBody(path_ + ": body ends early");
            double v = decode_scalar(data_.data() + pos_, s);
            pos_ += static_cast<std::size_t>(n);
            return v;
        }
        while (pos_ < data_.size() && std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
        if (pos_ >= data_.size()) throw TruncatedBody(path_ + ": body ends early");
        std::size_t end = pos_;
        while (end < data_.size() && !std::isspace(static_cast<unsigned char>(data_[end]))) ++end;
        std::string tok = data_.substr(pos_, end - pos_);
        pos_ = end;
        try {
            std::size_t used = 0;
            double v = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            return s == Scalar::F32 ? static_cast<double>(static_cast<float>(v)) : v;
        } catch (const std::logic_error&) {
            throw TruncatedBody(path_ + ": bad value '" + tok + "'");
        }
    }

private:
    const std::string& data_;
    std::size_t pos_;
    bool binary_;
    std::string path_;
};

}  // namespace

void write_ply(const std::string& path, const Frame& frame, PlyFormat format, const PlyColumns& extra) {
    const std::size_t n = frame.size();
    const bool labels = frame.has_labels();
    Frame f = frame;
    if (labels) f.ensure_labels();
    const bool intensity = f.intensity.size() == n && n > 0;
    for (const auto& [name, col] : extra) {
        if (col.size() != n) throw std::invalid_argument("ply column '" + name + "' has wrong length");
    }

    std::string out;
    out += "ply\n";
    out += format == PlyFormat::Ascii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n";
    out += "element vertex " + std::to_string(n) + "\n";
    out += "property float x\nproperty float y\nproperty float z\n";
    if (intensity) out += "property float intensity\n";
    if (labels) out += "property uchar foreground\nproperty uchar dynamic\nproperty uint instance\n";
    for (const auto& [name, col] : extra) out += "property uint " + name + "\n";
    out += "end_header\n";

    if (format == PlyFormat::Ascii) {
        std::ostringstream body;
        body << std::setprecision(9);
        for (std::size_t i = 0; i < n; ++i) {
            const Vec3& p = f.points[i];
            body << static_cast<float>(p.x()) << ' ' << static_cast<float>(p.y()) << ' ' << static_cast<float>(p.z());
            if (intensity) body << ' ' << f.intensity[i];
            if (labels) {
                body << ' ' << int(f.foreground[i]) << ' ' << int(f.dynamic[i]) << ' ' << f.instance[i];
            }
            for (const auto& [name, col] : extra) body << ' ' << col[i];
            body << '\n';
        }
        out += body.str();
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const Vec3& p = f.points[i];
            put_f32(out, static_cast<float>(p.x()));
            put_f32(out, static_cast<float>(p.y()));
            put_f32(out, static_cast<float>(p.z()));
            if (intensity) put_f32(out, f.intensity[i]);
            if (labels) {
                out.push_back(static_cast<char>(f.foreground[i]));
                out.push_back(static_cast<char>(f.dynamic[i]));
                put_u32(out, f.instance[i]);
            }
            for (const auto& [name, col] : extra) put_u32(out, col[i]);
        }
    }
    spill(path, out);
}

PlyData read_ply_data(const std::string& path) {
    const std::string data = slurp(path);
    PlyHeader h = parse_ply_header(data, path);
    PlyReader reader(data, h.body_offset, h.binary, path);

    PlyData result;
    Frame& frame = result.frame;
    bool saw_vertex = false;
    for (const PlyElement& e : h.elements) {
        if (e.name != "vertex") {
            result.warnings.push_back("skipping element '" + e.name + "'");
            for (std::size_t i = 0; i < e.count; ++i) {
                for (const PlyProperty& p : e.props) {
                    if (p.is_list) {
                        double c = reader.next(p.count_type);
                        for (long long j = 0; j < static_cast<long long>(c); ++j) reader.next(p.type);
                    } else {
                        reader.next(p.type);
                    }
                }
            }
            continue;
        }
        if (saw_vertex) throw MalformedHeader(path + ": duplicate vertex element");
        saw_vertex = true;

        enum Slot { X, Y, Z, Intensity, Fg, Dyn, Inst, Extra, Skip };
        std::vector<Slot> slots;
        bool has[3] = {false, false, false};
        bool any_label = false;
        bool has_intensity = false;
        for (const PlyProperty& p : e.props) {
            if (p.is_list) {
                result.warnings.push_back("skipping unsupported list property '" + p.name + "'");
                slots.push_back(Skip);
                continue;
            }
            if (p.name == "x") slots.push_back(X), has[0] = true;
            else if (p.name == "y") slots.push_back(Y), has[1] = true;
            else if (p.name == "z") slots.push_back(Z), has[2] = true;
            else if (p.name == "intensity") slots.push_back(Intensity), has_intensity = true;
            else if (p.name == "foreground") slots.push_back(Fg), any_label = true;
            else if (p.name == "dynamic") slots.push_back(Dyn), any_label = true;
            else if (p.name == "instance") slots.push_back(Inst), any_label = true;
            else if (p.type == Scalar::F32 || p.type == Scalar::F64) {
                result.warnings.push_back("skipping unsupported property '" + p.name + "'");
                slots.push_back(Skip);
            } else {
                slots.push_back(Extra);
            }
        }
        if (!(has[0] && has[1] && has[2])) throw MalformedHeader(path + ": vertex element lacks x, y, z");

        const std::size_t n = e.count;
        frame.points.resize(n);
        if (has_intensity) frame.intensity.resize(n);
        if (any_label) {
            frame.foreground.assign(n, 0);
            frame.dynamic.assign(n, 0);
            frame.instance.assign(n, 0);
        }
        for (std::size_t pi = 0; pi < e.props.size(); ++pi) {
            if (slots[pi] == Extra) result.extra[e.props[pi].name].resize(n);
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t pi = 0; pi < e.props.size(); ++pi) {
                const PlyProperty& p = e.props[pi];
                if (slots[pi] == Skip && p.is_list) {
                    double c = reader.next(p.count_type);
                    for (long long j = 0; j < static_cast<long long>(c); ++j) reader.next(p.type);
                    continue;
                }
                double v = reader.next(p.type);
                switch (slots[pi]) {
                    case X: frame.points[i].x() = v; break;
                    case Y: frame.points[i].y() = v; break;
                    case Z: frame.points[i].z() = v; break;
                    case Intensity: frame.intensity[i] = static_cast<float>(v); break;
                    case Fg: frame.foreground[i] = v != 0.0; break;
                    case Dyn: frame.dynamic[i] = v != 0.0; break;
                    case Inst: frame.instance[i] = static_cast<std::uint32_t>(v); break;
                    case Extra: result.extra[p.name][i] = static_cast<std::uint32_t>(v); break;
                    case Skip: break;
                }
            }
        }
    }
    if (!saw_vertex) throw MalformedHeader(path + ": no vertex element");
    return result;
}

Frame read_ply(const std::string& path) {
    PlyData d = read_ply_data(path);
    for (const auto& w : d.warnings) std::cerr << "warning: " << path << ": " << w << "\n";
    return std::move(d.frame);
}

// ---- poses ----

std::vector<RigidTransform> read_poses(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::pair<long long, RigidTransform>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        if (trim(line).empty()) continue;
        std::istringstream ls(line);
        long long t;
        double qw, qx, qy, qz, tx, ty, tz;
        std::string rest;
        if (!(ls >> t >> qw >> qx >> qy >> qz >> tx >> ty >> tz) || (ls >> rest)) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 't qw qx qy qz tx ty tz'");
        }
        double norm = std::sqrt(qw * qw + qx * qx + qy * qy + qz * qz);
        if (!std::isfinite(norm) || std::abs(norm - 1.0) > 1e-3) {
            throw NonUnitQuaternion(path + ":" + std::to_string(lineno) + ": quaternion norm " + std::to_string(norm));
        }
        Eigen::Quaterniond q(qw / norm, qx / norm, qy / norm, qz / norm);
        rows.emplace_back(t, RigidTransform(q, Vec3(tx, ty, tz)));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<RigidTransform> poses;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].first != static_cast<long long>(i) + 1) {
            throw GapInFrames(path + ": expected frame " + std::to_string(i + 1) + ", found " +
                              std::to_string(rows[i].first));
        }
        poses.push_back(rows[i].second);
    }
    return poses;
}

void write_poses(const std::string& path, std::span<const RigidTransform> poses) {
    std::ostringstream out;
    out << std::setprecision(17);
    for (std::size_t i = 0; i < poses.size(); ++i) {
        const auto& q = poses[i].rotation();
        const Vec3& t = poses[i].translation();
        out << i + 1 << ' ' << q.w() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << t.x() << ' '
            << t.y() << ' ' << t.z() << '\n';
    }
    spill(path, out.str());
}

// ---- flow and labels ----

void write_flow(const std::string& path, std::span<const Vec3> flow) {
    std::string out;
    out.reserve(4 + 12 * flow.size());
    put_u32(out, static_cast<std::uint32_t>(flow.size()));
    for (const Vec3& v : flow) {
        put_f32(out, static_cast<float>(v.x()));
        put_f32(out, static_cast<float>(v.y()));
        put_f32(out, static_cast<float>(v.z()));
    }
    spill(path, out);
}

PointList read_flow(const std::string& path) {
    const std::string data = slurp(path);
    if (data.size() < 4) throw SizeMismatch(path + ": missing count");
    std::uint32_t n = get_u32(data.data());
    if (data.size() != 4 + 12 * static_cast<std::size_t>(n)) {
        throw SizeMismatch(path + ": count " + std::to_string(n) + " does not match file size " +
                           std::to_string(data.size()));
    }
    PointList flow(n);
    const char* p = data.data() + 4;
    for (std::uint32_t i = 0; i < n; ++i, p += 12) flow[i] = Vec3(get_f32(p), get_f32(p + 4), get_f32(p + 8));
    return flow;
}

void write_labels(const std::string& path, std::span<const std::uint32_t> labels) {
    std::string out;
    put_u32(out, static_cast<std::uint32_t>(labels.size()));
    for (auto v : labels) put_u32(out, v);
    spill(path, out);
}

std::vector<std::uint32_t> read_labels(const std::string& path) {
    const std::string data = slurp(path);
    if (data.size() < 4) throw SizeMismatch(path + ": missing count");
    std::uint32_t n = get_u32(data.data());
    if (data.size() != 4 + 4 * static_cast<std::size_t>(n)) throw SizeMismatch(path + ": count/size mismatch");
    std::vector<std::uint32_t> labels(n);
    for (std::uint32_t i = 0; i < n; ++i) labels[i] = get_u32(data.data() + 4 + 4 * i);
    return labels;
}

// ---- config ----

ConfigFile ConfigFile::parse(const std::string& text) {
    ConfigFile cfg;
    cfg.sections_.push_back(ConfigSection{"", {}, 0});
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto c = line.find_first_of("#;");
        if (c != std::string::npos) line.resize(c);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unterminated section");
            std::string name = trim(line.substr(1, line.size() - 2));
            if (name.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
            cfg.sections_.push_back(ConfigSection{name, {}, lineno});
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        auto& values = cfg.sections_.back().values;
        if (values.count(key)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        values[key] = value;
    }
    if (cfg.sections_.front().values.empty()) cfg.sections_.erase(cfg.sections_.begin());
    return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
    try {
        return parse(slurp(path));
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::vector<const ConfigSection*> ConfigFile::sections(const std::string& name) const {
    std::vector<const ConfigSection*> out;
    for (const auto& s : sections_) {
        if (s.name == name) out.push_back(&s);
    }
    return out;
}

const ConfigSection* ConfigFile::section(const std::string& name) const {
    for (const auto& s : sections_) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

void ConfigFile::set(const std::string& section, const std::string& key, const std::string& value) {
    for (auto& s : sections_) {
        if (s.name == section) {
            s.values[key] = value;
            return;
        }
    }
    sections_.push_back(ConfigSection{section, {{key, value}}, 0});
}

std::string ConfigFile::to_string() const {
    std::ostringstream out;
    bool first = true;
    for (const auto& s : sections_) {
        if (!first) out << '\n';
        first = false;
        if (!s.name.empty()) out << '[' << s.name << "]\n";
        for (const auto& [k, v] : s.values) out << k << " = " << v << '\n';
    }
    return out.str();
}

namespace {

const std::string* lookup(const ConfigSection* s, const std::string& key) {
    if (!s) return nullptr;
    auto it = s->values.find(key);
    return it == s->values.end() ? nullptr : &it->second;
}

[[noreturn]] void bad_value(const ConfigSection* s, const std::string& key, const std::string& v) {
    std::string where = s->name.empty() ? key : s->name + "." + key;
    throw ConfigError("bad value for " + where + " (line " + std::to_string(s->line) + "): '" + v + "'");
}

}  // namespace

double get_double(const ConfigSection* s, const std::string& key, double fallback) {
    const std::string* v = lookup(s, key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        double d = std::stod(*v, &used);
        if (used != v->size()) bad_value(s, key, *v);
        return d;
    } catch (const std::logic_error&) {
        bad_value(s, key, *v);
    }
}

long long get_int(const ConfigSection* s, const std::string& key, long long fallback) {
    const std::string* v = lookup(s, key);
    if (!v) return fallback;
    long long out = 0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size()) bad_value(s, key, *v);
    return out;
}

bool get_bool(const ConfigSection* s, const std::string& key, bool fallback) {
    const std::string* v = lookup(s, key);
    if (!v) return fallback;
    std::string lower = *v;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "true" || lower == "yes" || lower == "on" || lower == "1") return true;
    if (lower == "false" || lower == "no" || lower == "off" || lower == "0") return false;
    bad_value(s, key, *v);
}

std::string get_string(const ConfigSection* s, const std::string& key, const std::string& fallback) {
    const std::string* v = lookup(s, key);
    return v ? *v : fallback;
}

std::vector<double> get_doubles(const ConfigSection* s, const std::string& key, std::vector<double> fallback) {
    const std::string* v = lookup(s, key);
    if (!v) return fallback;
    std::string text = *v;
    std::replace(text.begin(), text.end(), ',', ' ');
    std::istringstream in(text);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) bad_value(s, key, *v);
        } catch (const std::logic_error&) {
            bad_value(s, key, *v);
        }
    }
    return out;
}

void check_keys(const ConfigSection& s, const std::vector<std::string>& known) {
    for (const auto& [k, v] : s.values) {
        if (std::find(known.begin(), known.end(), k) == known.end()) {
            std::string where = s.name.empty() ? "top level" : "[" + s.name + "]";
            throw ConfigError("unknown key '" + k + "' in " + where + " (line " + std::to_string(s.line) + ")");
        }
    }
}

// ---- bundle ----

std::string frame_name(std::size_t index_1based, const std::string& ext) {
    std::ostringstream s;
    s << std::setw(5) << std::setfill('0') << index_1based << ext;
    return s.str();
}

void write_bundle(const std::string& dir, const SequenceBundle& bundle) {
    const fs::path root(dir);
    fs::create_directories(root / "frames");
    const auto& seq = bundle.sequence;
    {
        char buf[64];
        auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), seq.interval);
        spill((root / "sequence.cfg").string(), "[sequence]\nframes = " + std::to_string(seq.size()) +
                                                    "\ninterval = " + std::string(buf, end) + "\n");
    }
    for (std::size_t k = 0; k < seq.size(); ++k) {
        write_ply((root / "frames" / frame_name(k + 1, ".ply")).string(), seq.frames[k]);
    }
    if (bundle.poses) write_poses((root / "poses.txt").string(), *bundle.poses);
    if (bundle.boxes) write_box_tracks((root / "boxes.txt").string(), *bundle.boxes);
    if (bundle.flow) {
        fs::create_directories(root / "flow");
        for (std::size_t k = 0; k < bundle.flow->size(); ++k) {
            write_flow((root / "flow" / frame_name(k + 1, ".bin")).string(), bundle.flow->frames[k]);
        }
    }
}

SequenceBundle read_bundle(const std::string& dir) {
    const fs::path root(dir);
    if (!fs::is_directory(root / "frames")) throw std::runtime_error(dir + ": no frames/ directory");
    SequenceBundle b;
    std::size_t n = 0;
    if (fs::exists(root / "sequence.cfg")) {
        ConfigFile cfg = ConfigFile::load((root / "sequence.cfg").string());
        const ConfigSection* s = cfg.section("sequence");
        b.sequence.interval = get_double(s, "interval", 0.1);
        n = static_cast<std::size_t>(get_int(s, "frames", 0));
    }
    if (n == 0) {
        while (fs::exists(root / "frames" / frame_name(n + 1, ".ply"))) ++n;
    }
    if (n == 0) throw std::runtime_error(dir + ": no frames");
    for (std::size_t k = 0; k < n; ++k) {
        fs::path p = root / "frames" / frame_name(k + 1, ".ply");
        if (!fs::exists(p)) throw GapInFrames(dir + ": missing " + p.filename().string());
        Frame f = read_ply(p.string());
        f.timestamp_index = static_cast<int>(k) + 1;
        b.sequence.frames.push_back(std::move(f));
    }
    if (fs::exists(root / "poses.txt")) {
        b.poses = read_poses((root / "poses.txt").string());
        if (b.poses->size() != n) throw SizeMismatch(dir + ": poses.txt does not match frame count");
    }
    if (fs::exists(root / "boxes.txt")) b.boxes = read_box_tracks((root / "boxes.txt").string());
    if (fs::is_directory(root / "flow")) {
        FlowField flow;
        for (std::size_t k = 0; k < n; ++k) {
            PointList f = read_flow((root / "flow" / frame_name(k + 1, ".bin")).string());
            if (f.size() != b.sequence.frames[k].size()) {
                throw SizeMismatch(dir + ": flow for frame " + std::to_string(k + 1) + " has wrong length");
            }
            flow.frames.push_back(std::move(f));
        }
        b.flow = std::move(flow);
    }
    return b;
}

}  // namespace rigid_accum
