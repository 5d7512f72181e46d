#include "rigid_accum/config.hpp"

#include <charconv>

namespace rigid_accum {

namespace {

// Shortest text that parses back to the same double.
std::string num(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

std::string vec(std::initializer_list<double> v) {
    std::string out;
    for (double x : v) {
        if (!out.empty()) out += ", ";
        out += num(x);
    }
    return out;
}

template <int N>
Eigen::Matrix<double, N, 1> get_vec(const ConfigSection* s, const std::string& key,
                                    const Eigen::Matrix<double, N, 1>& fallback) {
    std::vector<double> d(fallback.data(), fallback.data() + N);
    d = get_doubles(s, key, d);
    if (d.size() != N) {
        throw ConfigError("[" + s->name + "] " + key + ": expected " + std::to_string(N) + " numbers");
    }
    return Eigen::Map<const Eigen::Matrix<double, N, 1>>(d.data());
}

std::size_t get_count(const ConfigSection* s, const std::string& key, std::size_t fallback) {
    const long long v = get_int(s, key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError("[" + s->name + "] " + key + " must not be negative");
    return static_cast<std::size_t>(v);
}

Trajectory read_motion(const ConfigSection* s, Trajectory t) {
    t.start = get_vec<3>(s, "start", t.start);
    t.yaw = get_double(s, "yaw", t.yaw);
    t.speed = get_double(s, "speed", t.speed);
    t.yaw_rate = get_double(s, "yaw_rate", t.yaw_rate);
    return t;
}

void write_motion(ConfigSection& s, const Trajectory& t) {
    s.values["start"] = vec({t.start.x(), t.start.y(), t.start.z()});
    s.values["yaw"] = num(t.yaw);
    s.values["speed"] = num(t.speed);
    s.values["yaw_rate"] = num(t.yaw_rate);
}

}  // namespace

SceneSpec scene_spec_from_config(const ConfigFile& cfg) {
    for (const auto& s : cfg.all()) {
        if (s.name == "scene") check_keys(s, {"seed", "frames", "dt", "ground_extent", "base"});
        else if (s.name == "ego") check_keys(s, {"start", "yaw", "speed", "yaw_rate"});
        else if (s.name == "sensor")
            check_keys(s, {"max_range", "points_per_frame", "body_density", "dropout", "noise_sigma", "height",
                           "occlusion", "occlusion_voxel"});
        else if (s.name == "wall") check_keys(s, {"from", "to", "height"});
        else if (s.name == "structure") check_keys(s, {"dims", "start", "yaw"});
        else if (s.name == "body") check_keys(s, {"dims", "clearance", "start", "yaw", "speed", "yaw_rate"});
        else throw ConfigError("unknown section [" + s.name + "] in scene file");
    }
    const ConfigSection* scene = cfg.section("scene");
    const std::string base = get_string(scene, "base", "default");
    SceneSpec spec;
    if (base == "default") spec = SceneSpec::default_scene();
    else if (base != "empty") throw ConfigError("[scene] base must be 'default' or 'empty'");

    spec.seed = static_cast<std::uint64_t>(get_int(scene, "seed", static_cast<long long>(spec.seed)));
    spec.frames = get_count(scene, "frames", spec.frames);
    spec.dt = get_double(scene, "dt", spec.dt);
    spec.ground_extent = get_double(scene, "ground_extent", spec.ground_extent);
    spec.ego = read_motion(cfg.section("ego"), spec.ego);

    const ConfigSection* sensor = cfg.section("sensor");
    SensorSpec& ss = spec.sensor;
    ss.max_range = get_double(sensor, "max_range", ss.max_range);
    ss.points_per_frame = get_count(sensor, "points_per_frame", ss.points_per_frame);
    ss.body_density = get_double(sensor, "body_density", ss.body_density);
    ss.dropout = get_double(sensor, "dropout", ss.dropout);
    ss.noise_sigma = get_double(sensor, "noise_sigma", ss.noise_sigma);
    ss.height = get_double(sensor, "height", ss.height);
    ss.occlusion = get_bool(sensor, "occlusion", ss.occlusion);
    ss.occlusion_voxel = get_double(sensor, "occlusion_voxel", ss.occlusion_voxel);

    if (auto walls = cfg.sections("wall"); !walls.empty()) {
        spec.walls.clear();
        for (const auto* w : walls) {
            WallSpec ws;
            ws.from = get_vec<2>(w, "from", ws.from);
            ws.to = get_vec<2>(w, "to", ws.to);
            ws.height = get_double(w, "height", ws.height);
            spec.walls.push_back(ws);
        }
    }
    if (auto structures = cfg.sections("structure"); !structures.empty()) {
        spec.structures.clear();
        for (const auto* s : structures) {
            BodySpec b;
            b.dims = get_vec<3>(s, "dims", b.dims);
            b.motion.start = get_vec<3>(s, "start", b.motion.start);
            b.motion.yaw = get_double(s, "yaw", 0.0);
            spec.structures.push_back(b);
        }
    }
    if (auto bodies = cfg.sections("body"); !bodies.empty()) {
        spec.bodies.clear();
        for (const auto* s : bodies) {
            BodySpec b;
            b.dims = get_vec<3>(s, "dims", b.dims);
            b.clearance = get_double(s, "clearance", b.clearance);
            b.motion = read_motion(s, b.motion);
            spec.bodies.push_back(b);
        }
    }
    return spec;
}

ConfigFile scene_spec_to_config(const SceneSpec& spec) {
    ConfigFile cfg;
    ConfigSection scene{"scene", {}, 0};
    scene.values["base"] = "empty";
    scene.values["seed"] = std::to_string(spec.seed);
    scene.values["frames"] = std::to_string(spec.frames);
    scene.values["dt"] = num(spec.dt);
    scene.values["ground_extent"] = num(spec.ground_extent);
    cfg.add(scene);
    ConfigSection ego{"ego", {}, 0};
    write_motion(ego, spec.ego);
    cfg.add(ego);
    ConfigSection sensor{"sensor", {}, 0};
    const SensorSpec& ss = spec.sensor;
    sensor.values["max_range"] = num(ss.max_range);
    sensor.values["points_per_frame"] = std::to_string(ss.points_per_frame);
    sensor.values["body_density"] = num(ss.body_density);
    sensor.values["dropout"] = num(ss.dropout);
    sensor.values["noise_sigma"] = num(ss.noise_sigma);
    sensor.values["height"] = num(ss.height);
    sensor.values["occlusion"] = ss.occlusion ? "true" : "false";
    sensor.values["occlusion_voxel"] = num(ss.occlusion_voxel);
    cfg.add(sensor);
    for (const auto& w : spec.walls) {
        ConfigSection s{"wall", {}, 0};
        s.values["from"] = vec({w.from.x(), w.from.y()});
        s.values["to"] = vec({w.to.x(), w.to.y()});
        s.values["height"] = num(w.height);
        cfg.add(s);
    }
    for (const auto& b : spec.structures) {
        ConfigSection s{"structure", {}, 0};
        s.values["dims"] = vec({b.dims.x(), b.dims.y(), b.dims.z()});
        s.values["start"] = vec({b.motion.start.x(), b.motion.start.y(), b.motion.start.z()});
        s.values["yaw"] = num(b.motion.yaw);
        cfg.add(s);
    }
    for (const auto& b : spec.bodies) {
        ConfigSection s{"body", {}, 0};
        s.values["dims"] = vec({b.dims.x(), b.dims.y(), b.dims.z()});
        s.values["clearance"] = num(b.clearance);
        write_motion(s, b.motion);
        cfg.add(s);
    }
    return cfg;
}

PipelineConfig pipeline_config_from_config(const ConfigFile& cfg) {
    for (const auto& s : cfg.all()) {
        if (s.name != "pipeline") throw ConfigError("unknown section [" + s.name + "] in pipeline file");
        check_keys(s, {"profile", "extent", "pillar", "n_ego", "fg_threshold", "sinkhorn_iters", "slack_cost", "beta",
                       "rounds", "v_max", "icp_ego", "icp_object", "icp_iters", "ego_icp", "chained", "warm_start",
                       "association", "eps", "min_pts", "voxel", "tracker_gate", "tracker_max_missed",
                       "residual_threshold", "residual_radius", "oracle_features", "oracle_segmentation",
                       "oracle_offsets", "seed", "threads"});
    }
    const ConfigSection* s = cfg.section("pipeline");
    PipelineConfig c;
    try {
        c = PipelineConfig::for_profile(get_string(s, "profile", "waymo"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const auto extent = get_doubles(s, "extent", {c.grid.x_min, c.grid.x_max, c.grid.y_min, c.grid.y_max});
    if (extent.size() != 4) throw ConfigError("[pipeline] extent: expected 4 numbers");
    c.grid.x_min = extent[0];
    c.grid.x_max = extent[1];
    c.grid.y_min = extent[2];
    c.grid.y_max = extent[3];
    c.grid.pillar = get_vec<3>(s, "pillar", c.grid.pillar);
    c.n_ego = get_count(s, "n_ego", c.n_ego);
    c.fg_threshold = get_double(s, "fg_threshold", c.fg_threshold);
    c.sinkhorn_iters = static_cast<int>(get_int(s, "sinkhorn_iters", c.sinkhorn_iters));
    c.slack_cost = get_double(s, "slack_cost", c.slack_cost);
    c.beta = get_double(s, "beta", c.beta);
    c.rounds = static_cast<int>(get_int(s, "rounds", c.rounds));
    c.v_max = get_double(s, "v_max", c.v_max);
    c.icp_ego = get_double(s, "icp_ego", c.icp_ego);
    c.icp_object = get_double(s, "icp_object", c.icp_object);
    c.icp_iters = static_cast<int>(get_int(s, "icp_iters", c.icp_iters));
    c.ego_icp = get_bool(s, "ego_icp", c.ego_icp);
    c.chained = get_bool(s, "chained", c.chained);
    c.warm_start = get_bool(s, "warm_start", c.warm_start);
    c.association = get_string(s, "association", c.association);
    c.cluster.eps = get_double(s, "eps", c.cluster.eps);
    c.cluster.min_pts = get_count(s, "min_pts", c.cluster.min_pts);
    c.cluster.voxel = get_double(s, "voxel", c.cluster.voxel);
    c.tracker.base_gate = get_double(s, "tracker_gate", c.tracker.base_gate);
    c.tracker.max_missed = static_cast<int>(get_int(s, "tracker_max_missed", c.tracker.max_missed));
    c.residual.threshold = get_double(s, "residual_threshold", c.residual.threshold);
    c.residual.radius = get_double(s, "residual_radius", c.residual.radius);
    c.oracle_features = get_bool(s, "oracle_features", c.oracle_features);
    c.oracle_segmentation = get_bool(s, "oracle_segmentation", c.oracle_segmentation);
    c.oracle_offsets = get_bool(s, "oracle_offsets", c.oracle_offsets);
    c.seed = static_cast<std::uint64_t>(get_int(s, "seed", static_cast<long long>(c.seed)));
    c.threads = static_cast<unsigned>(get_count(s, "threads", c.threads));
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

ConfigFile pipeline_config_to_config(const PipelineConfig& c) {
    ConfigSection s{"pipeline", {}, 0};
    auto& v = s.values;
    v["profile"] = c.profile;
    v["extent"] = vec({c.grid.x_min, c.grid.x_max, c.grid.y_min, c.grid.y_max});
    v["pillar"] = vec({c.grid.pillar.x(), c.grid.pillar.y(), c.grid.pillar.z()});
    v["n_ego"] = std::to_string(c.n_ego);
    v["fg_threshold"] = num(c.fg_threshold);
    v["sinkhorn_iters"] = std::to_string(c.sinkhorn_iters);
    v["slack_cost"] = num(c.slack_cost);
    v["beta"] = num(c.beta);
    v["rounds"] = std::to_string(c.rounds);
    v["v_max"] = num(c.v_max);
    v["icp_ego"] = num(c.icp_ego);
    v["icp_object"] = num(c.icp_object);
    v["icp_iters"] = std::to_string(c.icp_iters);
    v["ego_icp"] = c.ego_icp ? "true" : "false";
    v["chained"] = c.chained ? "true" : "false";
    v["warm_start"] = c.warm_start ? "true" : "false";
    v["association"] = c.association;
    v["eps"] = num(c.cluster.eps);
    v["min_pts"] = std::to_string(c.cluster.min_pts);
    v["voxel"] = num(c.cluster.voxel);
    v["tracker_gate"] = num(c.tracker.base_gate);
    v["tracker_max_missed"] = std::to_string(c.tracker.max_missed);
    v["residual_threshold"] = num(c.residual.threshold);
    v["residual_radius"] = num(c.residual.radius);
    v["oracle_features"] = c.oracle_features ? "true" : "false";
    v["oracle_segmentation"] = c.oracle_segmentation ? "true" : "false";
    v["oracle_offsets"] = c.oracle_offsets ? "true" : "false";
    v["seed"] = std::to_string(c.seed);
    v["threads"] = std::to_string(c.threads);
    ConfigFile cfg;
    cfg.add(s);
    return cfg;
}

}  // namespace rigid_accum
