#include "cli.hpp"

#include "rigid_accum/config.hpp"
#include "rigid_accum/io.hpp"
#include "rigid_accum/metrics.hpp"
#include "rigid_accum/pipeline.hpp"
#include "rigid_accum/sim.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unistd.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace rigid_accum::cli {

namespace {

class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EvalMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InputError("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), {}};
}

void write_file(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("cannot write " + p.string());
}

// Writes next to the destination, then renames over it.
void write_atomic(const fs::path& p, const std::string& bytes) {
    const fs::path tmp = p.string() + ".tmp." + std::to_string(::getpid());
    write_file(tmp, bytes);
    fs::rename(tmp, p);
}

std::string sha1_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("SHA-1 failed");
    }
    EVP_MD_CTX_free(ctx);
    std::ostringstream s;
    for (unsigned i = 0; i < len; ++i) s << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return s.str();
}

std::vector<fs::path> files_under(const fs::path& root) {
    std::vector<fs::path> out;
    if (fs::is_regular_file(root)) return {root};
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

// Per-file blob hashes plus one hash over the sorted "hash  path" lines.
struct HashedFiles {
    json entries = json::array();
    std::string combined;
};

HashedFiles hash_files(const std::vector<std::pair<fs::path, std::string>>& files) {
    HashedFiles h;
    std::string listing;
    for (const auto& [path, label] : files) {
        const std::string sha = git_blob_sha1(read_file(path));
        h.entries.push_back({{"path", label}, {"sha1", sha}});
        listing += sha + "  " + label + "\n";
    }
    h.combined = sha1_hex(listing);
    return h;
}

json config_json(const ConfigFile& cfg) {
    json out = json::object();
    for (const auto& s : cfg.all()) {
        json values = json::object();
        for (const auto& [k, v] : s.values) values[k] = v;
        const std::string name = s.name.empty() ? "global" : s.name;
        if (cfg.sections(s.name).size() > 1) {
            if (!out.contains(name)) out[name] = json::array();
            out[name].push_back(values);
        } else {
            out[name] = values;
        }
    }
    return out;
}

std::optional<std::uint64_t> seed_override() {
    const char* env = std::getenv("RIGID_ACCUM_SEED");
    if (!env || !*env) return std::nullopt;
    std::string s(env);
    if (!std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
        throw InputError("RIGID_ACCUM_SEED must be a non-negative integer, got '" + s + "'");
    }
    try {
        return std::stoull(s);
    } catch (const std::out_of_range&) {
        throw InputError("RIGID_ACCUM_SEED out of range");
    }
}

// Output directory staged under a sibling temporary name and moved into
// place on commit; dropped on failure.
class StagedDir {
public:
    explicit StagedDir(fs::path dest) : dest_(dest.lexically_normal()) {
        // "out/" names the directory "out"; the sibling must not land inside it.
        if (!dest_.has_filename()) dest_ = dest_.parent_path();
        if (fs::exists(dest_) && !fs::is_empty(dest_) && !fs::exists(dest_ / "manifest.json")) {
            throw InputError("refusing to overwrite " + dest_.string() + ": not an earlier output directory");
        }
        if (dest_.has_parent_path()) fs::create_directories(dest_.parent_path());
        tmp_ = dest_.string() + ".tmp." + std::to_string(::getpid());
        fs::remove_all(tmp_);
        fs::create_directories(tmp_);
    }
    ~StagedDir() {
        if (!committed_) {
            std::error_code ec;
            fs::remove_all(tmp_, ec);
        }
    }
    const fs::path& path() const { return tmp_; }
    void commit() {
        fs::remove_all(dest_);
        fs::rename(tmp_, dest_);
        committed_ = true;
    }

private:
    fs::path dest_;
    fs::path tmp_;
    bool committed_ = false;
};

void write_manifest(const fs::path& dir, const std::string& command, const ConfigFile& config,
                    const std::vector<std::pair<fs::path, std::string>>& inputs, const json& timings,
                    std::uint64_t seed, const fs::path& dest) {
    std::vector<std::pair<fs::path, std::string>> outputs;
    for (const auto& p : files_under(dir)) {
        outputs.emplace_back(p, fs::relative(p, dir).generic_string());
    }
    const HashedFiles in = hash_files(inputs);
    const HashedFiles out = hash_files(outputs);
    json m;
    m["command"] = command;
    m["version"] = "0.1.0";
    m["seed"] = seed;
    m["config"] = config_json(config);
    m["inputs"] = in.entries;
    m["input_hash"] = in.combined;
    m["output_dir"] = dest.generic_string();
    m["outputs"] = out.entries;
    m["output_hash"] = out.combined;
    m["timings"] = timings;
    write_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

std::vector<std::pair<fs::path, std::string>> labelled(const fs::path& root) {
    std::vector<std::pair<fs::path, std::string>> out;
    for (const auto& p : files_under(root)) {
        if (p.filename() == "manifest.json") continue;
        const std::string rel = fs::is_directory(root) ? fs::relative(p, root).generic_string() : "";
        out.emplace_back(p, rel.empty() ? p.filename().generic_string() : root.filename().generic_string() + "/" + rel);
    }
    return out;
}

// ---- simulate ----

int cmd_simulate(const std::string& spec_path, const std::string& out_dir, std::ostream& out) {
    const auto t0 = Clock::now();
    SceneSpec spec;
    std::vector<std::pair<fs::path, std::string>> inputs;
    if (spec_path == "default") {
        spec = SceneSpec::default_scene();
    } else {
        if (!fs::is_regular_file(spec_path)) throw InputError("no scene file " + spec_path);
        spec = scene_spec_from_config(ConfigFile::load(spec_path));
        inputs = labelled(spec_path);
    }
    if (auto s = seed_override()) spec.seed = *s;
    try {
        spec.validate();
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }

    StagedDir dir(out_dir);
    const SimulatedScene scene = generate_scene(spec);
    const double gen = seconds_since(t0);
    write_bundle(dir.path().string(), SequenceBundle{scene.sequence, scene.ego, scene.boxes, scene.flow});
    const ConfigFile snapshot = scene_spec_to_config(spec);
    write_file(dir.path() / "scene.cfg", snapshot.to_string());
    write_manifest(dir.path(), "simulate", snapshot, inputs,
                   {{"generate_seconds", gen}, {"total_seconds", seconds_since(t0)}}, spec.seed, out_dir);
    dir.commit();
    std::size_t points = 0;
    for (const auto& f : scene.sequence.frames) points += f.size();
    out << "wrote " << scene.sequence.size() << " frames (" << points << " points) to " << out_dir << "\n";
    return kOk;
}

// ---- run ----

json diagnostics_json(const AccumulationResult& r) {
    json d;
    d["clusters"] = r.instances.clusters;
    d["timings"] = json::array();
    for (const auto& t : r.diagnostics.timings) d["timings"].push_back({{"stage", t.stage}, {"seconds", t.seconds}});
    d["ego"] = json::array();
    for (std::size_t k = 1; k < r.ego.size(); ++k) {
        const auto& e = r.diagnostics.ego[k];
        json row = {{"frame", k + 1},
                    {"inlier_score", e.inlier_score},
                    {"mean_residual", e.mean_residual},
                    {"source_pillars", e.source_pillars},
                    {"target_pillars", e.target_pillars},
                    {"rounds", e.rounds}};
        if (const auto& icp = r.diagnostics.ego_icp[k]) {
            row["icp_iterations"] = icp->iterations;
            row["icp_residual"] = icp->residuals.empty() ? json(nullptr) : json(*std::min_element(
                                                                               icp->residuals.begin(),
                                                                               icp->residuals.end()));
            row["icp_fell_back"] = icp->fell_back;
        }
        d["ego"].push_back(row);
    }
    d["objects"] = json::array();
    for (const auto& o : r.diagnostics.objects) {
        d["objects"].push_back({{"instance", o.instance}, {"frame", o.frame + 1}, {"message", o.message}});
    }
    d["messages"] = r.diagnostics.messages;
    d["grid_cache_hits"] = r.diagnostics.grid_cache_hits;
    return d;
}

int cmd_run(const std::string& bundle_dir, const std::string& config_path, const std::string& out_dir,
            unsigned threads, const std::string& profile, std::ostream& out) {
    const auto t0 = Clock::now();
    ConfigFile cfg_file;
    std::vector<std::pair<fs::path, std::string>> inputs;
    if (config_path != "default") {
        if (!fs::is_regular_file(config_path)) throw InputError("no config file " + config_path);
        cfg_file = ConfigFile::load(config_path);
        inputs = labelled(config_path);
    }
    if (!profile.empty()) cfg_file.set("pipeline", "profile", profile);
    if (auto s = seed_override()) cfg_file.set("pipeline", "seed", std::to_string(*s));
    cfg_file.set("pipeline", "threads", std::to_string(threads));
    PipelineConfig config = pipeline_config_from_config(cfg_file);

    if (!fs::is_directory(fs::path(bundle_dir) / "frames")) throw InputError(bundle_dir + ": no frames/ directory");
    SequenceBundle bundle;
    try {
        bundle = read_bundle(bundle_dir);
    } catch (const std::exception& e) {
        throw InputError(e.what());
    }
    for (auto& f : labelled(bundle_dir)) inputs.push_back(std::move(f));
    const double load = seconds_since(t0);

    StagedDir dir(out_dir);
    AccumulationResult result;
    try {
        result = run(bundle.sequence, config, OracleInputs{bundle.flow});
    } catch (const PipelineError&) {
        throw;
    } catch (const std::exception& e) {
        throw PipelineError(e.what());
    }
    const double pipeline = seconds_since(t0) - load;

    fs::create_directories(dir.path() / "flow");
    fs::create_directories(dir.path() / "labels");
    for (std::size_t k = 0; k < bundle.sequence.size(); ++k) {
        write_flow((dir.path() / "flow" / frame_name(k + 1, ".bin")).string(), result.flow.frames[k]);
        write_labels((dir.path() / "labels" / frame_name(k + 1, ".bin")).string(), result.instances.labels[k]);
    }
    write_poses((dir.path() / "ego_poses.txt").string(), result.ego);
    write_file(dir.path() / "diagnostics.json", diagnostics_json(result).dump(2) + "\n");
    const ConfigFile snapshot = pipeline_config_to_config(config);
    write_file(dir.path() / "pipeline.cfg", snapshot.to_string());
    json timings = {{"load_seconds", load}, {"pipeline_seconds", pipeline}};
    for (const auto& t : result.diagnostics.timings) timings[t.stage + "_seconds"] = t.seconds;
    timings["total_seconds"] = seconds_since(t0);
    write_manifest(dir.path(), "run", snapshot, inputs, timings, config.seed, out_dir);
    dir.commit();
    out << "ran " << bundle.sequence.size() << " frames, " << result.instances.clusters << " instances; wrote "
        << out_dir << "\n";
    return kOk;
}

// ---- eval ----

struct SceneEval {
    std::string name;
    std::optional<FlowMetrics> rows[3];
    std::optional<AssocMetrics> assoc;
    std::vector<double> epe[3];
};

const char* kRowNames[3] = {"static", "dynamic", "all"};

FlowField read_pred_flow(const fs::path& pred, std::size_t frames) {
    if (!fs::is_directory(pred / "flow")) throw InputError(pred.string() + ": no flow/ directory");
    FlowField f;
    for (std::size_t k = 0; k < frames; ++k) {
        const fs::path p = pred / "flow" / frame_name(k + 1, ".bin");
        if (!fs::exists(p)) throw EvalMismatch(pred.string() + ": missing " + p.filename().string());
        f.frames.push_back(read_flow(p.string()));
    }
    if (fs::exists(pred / "flow" / frame_name(frames + 1, ".bin"))) {
        throw EvalMismatch(pred.string() + ": more flow files than ground-truth frames");
    }
    return f;
}

SceneEval evaluate_scene(const fs::path& pred, const fs::path& gt, std::optional<double> region,
                         std::optional<double> ground_z) {
    SequenceBundle b;
    try {
        b = read_bundle(gt.string());
    } catch (const std::exception& e) {
        throw InputError(e.what());
    }
    if (!b.flow) throw InputError(gt.string() + ": no ground-truth flow");
    const FrameSequence& seq = b.sequence;
    const FlowField pf = read_pred_flow(pred, seq.size());
    for (std::size_t k = 0; k < seq.size(); ++k) {
        if (pf.frames[k].size() != seq.frames[k].size()) {
            throw EvalMismatch("frame " + std::to_string(k + 1) + ": " + std::to_string(pf.frames[k].size()) +
                               " predicted vectors for " + std::to_string(seq.frames[k].size()) + " points");
        }
    }

    SceneEval ev;
    ev.name = gt.filename().string();
    FrameMasks masks[3];
    for (std::size_t k = 0; k < seq.size(); ++k) {
        const Frame& f = seq.frames[k];
        const auto in = eval_region_mask(f.points, region.value_or(std::numeric_limits<double>::infinity()),
                                         ground_z.value_or(-std::numeric_limits<double>::infinity()));
        for (auto& m : masks) m.emplace_back(f.size(), 0);
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (!in[i]) continue;
            const bool dyn = f.has_labels() && f.dynamic.size() == f.size() && f.dynamic[i];
            masks[dyn ? 1 : 0][k][i] = 1;
            masks[2][k][i] = 1;
            if (k > 0) {
                const double e = (pf.frames[k][i] - b.flow->frames[k][i]).norm();
                ev.epe[dyn ? 1 : 0].push_back(e);
                ev.epe[2].push_back(e);
            }
        }
    }
    for (int r = 0; r < 3; ++r) {
        try {
            ev.rows[r] = flow_metrics(pf, *b.flow, masks[r]);
        } catch (const EmptyMask&) {
        }
    }

    if (fs::is_directory(pred / "labels") && seq.target().has_labels()) {
        FrameLabels pl;
        FrameLabels gl;
        for (std::size_t k = 0; k < seq.size(); ++k) {
            const fs::path p = pred / "labels" / frame_name(k + 1, ".bin");
            if (!fs::exists(p)) throw EvalMismatch(pred.string() + ": missing " + p.filename().string());
            auto labels = read_labels(p.string());
            const Frame& f = seq.frames[k];
            if (labels.size() != f.size()) throw EvalMismatch("label count differs in frame " + std::to_string(k + 1));
            std::vector<std::uint32_t> g(f.size(), 0);
            for (std::size_t i = 0; i < f.size(); ++i) {
                if (!masks[2][k][i]) labels[i] = 0;
                else if (f.dynamic[i]) g[i] = f.instance[i];
            }
            pl.push_back(std::move(labels));
            gl.push_back(std::move(g));
        }
        try {
            ev.assoc = assoc_metrics(pl, gl);
        } catch (const NoGtClusters&) {
        }
    }
    return ev;
}

json metrics_json(const std::optional<FlowMetrics>& m) {
    if (!m) return nullptr;
    return {{"epe_avg", m->epe_avg},   {"epe_med", m->epe_med},     {"acc_s", m->acc_s},
            {"acc_r", m->acc_r},       {"outliers", m->outliers},   {"routliers", m->routliers},
            {"count", m->count}};
}

json assoc_json(const std::optional<AssocMetrics>& a) {
    if (!a) return nullptr;
    json r = json::object();
    json p = json::object();
    for (const auto& [t, v] : a->recall) r[std::to_string(t).substr(0, 3)] = v;
    for (const auto& [t, v] : a->precision) p[std::to_string(t).substr(0, 3)] = v;
    return {{"wcov", a->wcov}, {"recall", r}, {"precision", p}};
}

void print_table(std::ostream& out, const std::string& title, const std::optional<FlowMetrics> (&rows)[3]) {
    out << title << "\n";
    out << std::left << std::setw(9) << "split" << std::right << std::setw(10) << "EPE" << std::setw(10) << "EPE med"
        << std::setw(9) << "AccS%" << std::setw(9) << "AccR%" << std::setw(9) << "Out%" << std::setw(9) << "ROut%"
        << std::setw(10) << "points" << "\n";
    for (int r = 0; r < 3; ++r) {
        out << std::left << std::setw(9) << kRowNames[r] << std::right;
        if (!rows[r]) {
            out << std::setw(10) << "-" << "\n";
            continue;
        }
        const FlowMetrics& m = *rows[r];
        out << std::fixed << std::setprecision(4) << std::setw(10) << m.epe_avg << std::setw(10) << m.epe_med
            << std::setprecision(2) << std::setw(9) << m.acc_s << std::setw(9) << m.acc_r << std::setw(9)
            << m.outliers << std::setw(9) << m.routliers << std::setw(10) << m.count << "\n";
        out.unsetf(std::ios::fixed);
    }
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, std::optional<double> region,
             std::optional<double> ground_z, bool per_scene, const std::string& ecdf, const std::string& json_path,
             std::ostream& out) {
    if (!fs::is_directory(pred_dir)) throw InputError("no prediction directory " + pred_dir);
    if (!fs::is_directory(gt_dir)) throw InputError("no ground-truth directory " + gt_dir);
    int ecdf_row = -1;
    if (!ecdf.empty()) {
        if (ecdf == "epe_static") ecdf_row = 0;
        else if (ecdf == "epe_dynamic") ecdf_row = 1;
        else if (ecdf == "epe_all") ecdf_row = 2;
        else throw InputError("--ecdf takes epe_static, epe_dynamic or epe_all");
    }

    std::vector<SceneEval> scenes;
    if (per_scene) {
        std::vector<fs::path> dirs;
        for (const auto& e : fs::directory_iterator(gt_dir)) {
            if (e.is_directory() && fs::is_directory(e.path() / "frames")) dirs.push_back(e.path());
        }
        std::sort(dirs.begin(), dirs.end());
        if (dirs.empty()) throw InputError(gt_dir + ": no scene directories");
        for (const auto& d : dirs) {
            const fs::path p = fs::path(pred_dir) / d.filename();
            if (!fs::is_directory(p)) throw EvalMismatch("no prediction for scene " + d.filename().string());
            scenes.push_back(evaluate_scene(p, d, region, ground_z));
        }
    } else {
        scenes.push_back(evaluate_scene(pred_dir, gt_dir, region, ground_z));
    }

    json report;
    report["region"] = region ? json(*region) : json(nullptr);
    report["ground_z"] = ground_z ? json(*ground_z) : json(nullptr);
    report["scenes"] = json::array();
    std::optional<FlowMetrics> overall[3];
    for (int r = 0; r < 3; ++r) {
        std::vector<FlowMetrics> rows;
        for (const auto& s : scenes) {
            if (s.rows[r]) rows.push_back(*s.rows[r]);
        }
        if (!rows.empty()) overall[r] = average_metrics(rows);
    }
    for (const auto& s : scenes) {
        json j;
        j["name"] = s.name;
        for (int r = 0; r < 3; ++r) j[kRowNames[r]] = metrics_json(s.rows[r]);
        j["association"] = assoc_json(s.assoc);
        report["scenes"].push_back(j);
        if (per_scene) print_table(out, "scene " + s.name, s.rows);
    }
    for (int r = 0; r < 3; ++r) report["mean"][kRowNames[r]] = metrics_json(overall[r]);
    print_table(out, per_scene ? "mean over scenes" : "flow", overall);
    if (!per_scene && scenes[0].assoc) {
        const auto& a = *scenes[0].assoc;
        out << "association WCov " << std::setprecision(4) << a.wcov;
        for (const auto& [t, v] : a.recall) out << "  R@" << t << " " << v;
        out << "\n";
    }

    if (ecdf_row >= 0) {
        std::vector<double> values;
        for (const auto& s : scenes) values.insert(values.end(), s.epe[ecdf_row].begin(), s.epe[ecdf_row].end());
        if (values.empty()) throw EvalMismatch("no points for " + ecdf);
        const Ecdf cdf(values);
        json rows = json::array();
        out << "# " << ecdf << "\n# epe_m fraction\n";
        for (const auto& [v, frac] : cdf.steps()) {
            out << std::setprecision(9) << v << ' ' << frac << "\n";
            rows.push_back({v, frac});
        }
        report["ecdf"] = {{"quantity", ecdf}, {"rows", rows}};
    }

    const fs::path jp = json_path.empty() ? fs::path(pred_dir) / "eval.json" : fs::path(json_path);
    write_atomic(jp, report.dump(2) + "\n");
    return kOk;
}

// ---- export ----

int cmd_export(const std::string& bundle_dir, const std::string& result_dir, const std::string& out_ply,
               std::ostream& out) {
    SequenceBundle b;
    try {
        b = read_bundle(bundle_dir);
    } catch (const std::exception& e) {
        throw InputError(e.what());
    }
    if (!fs::is_directory(fs::path(result_dir) / "flow")) throw InputError(result_dir + ": no flow/ directory");
    FlowField flow;
    FrameLabels labels;
    const bool have_labels = fs::is_directory(fs::path(result_dir) / "labels");
    for (std::size_t k = 0; k < b.sequence.size(); ++k) {
        const fs::path fp = fs::path(result_dir) / "flow" / frame_name(k + 1, ".bin");
        if (!fs::exists(fp)) throw InputError("missing " + fp.string());
        flow.frames.push_back(read_flow(fp.string()));
        if (flow.frames.back().size() != b.sequence.frames[k].size()) {
            throw InputError("flow of frame " + std::to_string(k + 1) + " does not match the bundle");
        }
        if (have_labels) {
            labels.push_back(read_labels((fs::path(result_dir) / "labels" / frame_name(k + 1, ".bin")).string()));
            if (labels.back().size() != b.sequence.frames[k].size()) {
                throw InputError("labels of frame " + std::to_string(k + 1) + " do not match the bundle");
            }
        }
    }
    AccumulatedCloud acc = accumulate_points(b.sequence, flow);
    Frame& c = acc.cloud;
    for (std::size_t k = 0; k < b.sequence.size(); ++k) {
        const Frame& f = b.sequence.frames[k];
        for (std::size_t i = 0; i < f.size(); ++i) {
            c.foreground.push_back(f.has_labels() ? f.foreground[i] : 0);
            c.dynamic.push_back(f.has_labels() && f.dynamic.size() == f.size() ? f.dynamic[i] : 0);
            c.instance.push_back(have_labels ? labels[k][i] : 0);
        }
    }
    const fs::path dest(out_ply);
    if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
    const fs::path tmp = dest.string() + ".tmp." + std::to_string(::getpid());
    write_ply(tmp.string(), c, PlyFormat::BinaryLittleEndian, {{"source_frame", acc.source_frame}});
    fs::rename(tmp, dest);
    out << "wrote " << c.size() << " points to " << out_ply << "\n";
    return kOk;
}

}  // namespace

std::string git_blob_sha1(const std::string& bytes) {
    return sha1_hex("blob " + std::to_string(bytes.size()) + '\0' + bytes);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Rigid scene-flow accumulation over LiDAR sequences", "rigid-accum"};
    app.require_subcommand(1);

    std::string spec_path, out_dir;
    auto* sim = app.add_subcommand("simulate", "Generate a synthetic sequence bundle");
    sim->add_option("spec", spec_path, "Scene file, or 'default'")->required();
    sim->add_option("out_dir", out_dir, "Output bundle directory")->required();

    std::string bundle_dir, config_path, run_out, profile;
    unsigned threads = 0;
    auto* runc = app.add_subcommand("run", "Run the pipeline on a bundle");
    runc->add_option("bundle_dir", bundle_dir, "Input bundle")->required();
    runc->add_option("config", config_path, "Pipeline config file, or 'default'")->required();
    runc->add_option("out_dir", run_out, "Output directory")->required();
    runc->add_option("--threads", threads, "Worker threads (0 = all cores)");
    runc->add_option("--profile", profile, "Dataset profile")->check(CLI::IsMember({"waymo", "nuscenes"}));

    std::string pred_dir, gt_dir, ecdf, json_path;
    std::optional<double> region, ground_z;
    bool per_scene = false;
    auto* evalc = app.add_subcommand("eval", "Score predicted flow against ground truth");
    evalc->add_option("pred_dir", pred_dir, "Output of 'run'")->required();
    evalc->add_option("gt_dir", gt_dir, "Ground-truth bundle")->required();
    evalc->add_option("--region", region, "Half extent of the evaluation square in meters");
    evalc->add_option("--ground-z", ground_z, "Drop points at or below this height");
    evalc->add_flag("--per-scene", per_scene, "Treat both directories as collections of scenes");
    evalc->add_option("--ecdf", ecdf, "Print the ECDF of epe_static, epe_dynamic or epe_all");
    evalc->add_option("--json", json_path, "Report path (default: <pred_dir>/eval.json)");

    std::string ex_bundle, ex_result, ex_out;
    auto* exp = app.add_subcommand("export", "Write the accumulated cloud as PLY");
    exp->add_option("bundle_dir", ex_bundle, "Input bundle")->required();
    exp->add_option("result_dir", ex_result, "Output of 'run'")->required();
    exp->add_option("out_ply", ex_out, "Destination PLY")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kInputError;
    }

    try {
        if (*sim) return cmd_simulate(spec_path, out_dir, out);
        if (*runc) return cmd_run(bundle_dir, config_path, run_out, threads, profile, out);
        if (*evalc) return cmd_eval(pred_dir, gt_dir, region, ground_z, per_scene, ecdf, json_path, out);
        if (*exp) return cmd_export(ex_bundle, ex_result, ex_out, out);
    } catch (const EvalMismatch& e) {
        err << "error: " << e.what() << "\n";
        return kEvalMismatch;
    } catch (const PipelineError& e) {
        err << "pipeline error: " << e.what() << "\n";
        return kPipelineError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kInputError;
    }
    return kInputError;
}

}  // namespace rigid_accum::cli
