#include "rigid_accum/gt.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace rigid_accum {

UncoveredForegroundPoint::UncoveredForegroundPoint(std::size_t f, std::size_t i)
    : std::runtime_error("foreground point " + std::to_string(i) + " of frame position " + std::to_string(f) +
                         " lies in no box"),
      frame(f),
      index(i) {}

namespace {

double wrap_angle(double a) {
    a = std::fmod(a + M_PI, 2.0 * M_PI);
    if (a < 0.0) {
        a += 2.0 * M_PI;
    }
    return a - M_PI;
}

}  // namespace

OrientedBox interpolate_box(const BoxTrack& track, int frame) {
    if (track.boxes.empty() || frame < track.boxes.begin()->first || frame > track.boxes.rbegin()->first) {
        throw OutOfSpan("interpolate_box: frame " + std::to_string(frame) + " outside track " +
                        std::to_string(track.id));
    }
    const auto hi = track.boxes.lower_bound(frame);
    if (hi->first == frame) {
        return hi->second;
    }
    const auto lo = std::prev(hi);
    const double s = static_cast<double>(frame - lo->first) / static_cast<double>(hi->first - lo->first);
    OrientedBox out = lo->second;
    out.center = (1.0 - s) * lo->second.center + s * hi->second.center;
    out.yaw = wrap_angle(lo->second.yaw + s * wrap_angle(hi->second.yaw - lo->second.yaw));
    return out;
}

std::vector<OrientedBox> interpolate_boxes(const BoxTrack& track, const std::vector<int>& frames) {
    std::vector<OrientedBox> out;
    out.reserve(frames.size());
    for (const int f : frames) {
        out.push_back(interpolate_box(track, f));
    }
    return out;
}

BoxTrack subsample_track(const BoxTrack& track, int stride) {
    if (stride < 1) {
        throw std::invalid_argument("subsample_track: stride must be >= 1");
    }
    BoxTrack out;
    out.id = track.id;
    int i = 0;
    for (const auto& [frame, box] : track.boxes) {
        if (i % stride == 0) {
            out.boxes.emplace(frame, box);
        }
        ++i;
    }
    if (!track.boxes.empty()) {
        out.boxes.insert(*track.boxes.rbegin());
    }
    return out;
}

RigidTransform box_pair_transform(const OrientedBox& box_t, const OrientedBox& box_1) {
    return compose(box_1.pose(), box_t.pose().inverse());
}

PseudoGt build_pseudo_gt(const FrameSequence& seq, std::span<const RigidTransform> gt_ego, const BoxTracks& tracks,
                         double margin, double dynamic_speed) {
    if (gt_ego.size() != seq.size()) {
        throw std::invalid_argument("build_pseudo_gt: ego transform count does not match");
    }
    PseudoGt out;
    out.flow = FlowField::zeros_like(seq);
    out.foreground.resize(seq.size());
    out.instance.resize(seq.size());
    if (seq.size() == 0) {
        return out;
    }
    const int target_ts = seq.target().timestamp_index;
    for (std::size_t k = 0; k < seq.size(); ++k) {
        const Frame& f = seq.frames[k];
        const int ts = f.timestamp_index;
        // Boxes present in this frame, with their motion onto the target box.
        std::vector<std::pair<const BoxTrack*, OrientedBox>> boxes;
        for (const auto& track : tracks) {
            if (track.boxes.empty() || ts < track.boxes.begin()->first || ts > track.boxes.rbegin()->first) {
                continue;
            }
            OrientedBox b = interpolate_box(track, ts);
            b.dims += Vec3::Constant(2.0 * margin);
            boxes.emplace_back(&track, b);
        }
        out.foreground[k].assign(f.size(), 0);
        out.instance[k].assign(f.size(), 0);
        std::map<std::uint32_t, RigidTransform> motion;
        for (std::size_t i = 0; i < f.size(); ++i) {
            const Vec3& x = f.points[i];
            const OrientedBox* hit = nullptr;
            const BoxTrack* track = nullptr;
            for (const auto& [t, b] : boxes) {
                if (b.contains(x)) {
                    hit = &b;
                    track = t;
                    break;
                }
            }
            if (hit == nullptr) {
                if (f.foreground.size() == f.size() && f.foreground[i]) {
                    throw UncoveredForegroundPoint(k, i);
                }
                if (k > 0) {
                    out.flow.frames[k][i] = gt_ego[k].apply(x) - x;
                }
                continue;
            }
            out.foreground[k][i] = 1;
            out.instance[k][i] = track->id;
            if (k == 0) {
                continue;
            }
            auto it = motion.find(track->id);
            if (it == motion.end()) {
                const OrientedBox target_box = interpolate_box(*track, target_ts);
                // Box motion in sensor coordinates, re-expressed on ego-aligned points.
                const RigidTransform pair = box_pair_transform(interpolate_box(*track, ts), target_box);
                it = motion.emplace(track->id, compose(pair, gt_ego[k].inverse())).first;
            }
            out.flow.frames[k][i] = compose(it->second, gt_ego[k]).apply(x) - x;
        }
        for (const auto& [id, t] : motion) {
            auto& slot = out.objects.motions[id];
            slot.resize(seq.size());
            slot[k] = t;
        }
        for (const auto& [t, b] : boxes) {
            bool seen = false;
            for (const auto id : out.instance[k]) {
                seen = seen || id == t->id;
            }
            if (k == 0 && seen) {
                auto& slot = out.objects.motions[t->id];
                slot.resize(seq.size());
                slot[0] = RigidTransform();
            }
        }
    }
    FrameSequence labeled = seq;
    for (std::size_t k = 0; k < seq.size(); ++k) {
        labeled.frames[k].instance = out.instance[k];
    }
    out.dynamic = label_dynamic_oracle(labeled, out.flow, gt_ego, dynamic_speed);
    return out;
}

BoxTracks read_box_tracks(std::istream& in) {
    std::map<std::uint32_t, BoxTrack> by_id;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        std::istringstream ss(line);
        int frame = 0;
        std::uint32_t id = 0;
        OrientedBox b;
        if (!(ss >> frame)) {
            continue;
        }
        if (!(ss >> id >> b.center.x() >> b.center.y() >> b.center.z() >> b.dims.x() >> b.dims.y() >> b.dims.z() >>
              b.yaw)) {
            throw std::runtime_error("box track line " + std::to_string(lineno) + ": expected 9 fields");
        }
        std::string extra;
        if (ss >> extra) {
            throw std::runtime_error("box track line " + std::to_string(lineno) + ": trailing fields");
        }
        if (!(b.dims.array() > 0.0).all()) {
            throw std::runtime_error("box track line " + std::to_string(lineno) + ": dimensions must be positive");
        }
        auto& t = by_id[id];
        t.id = id;
        if (!t.boxes.emplace(frame, b).second) {
            throw std::runtime_error("box track line " + std::to_string(lineno) + ": duplicate frame");
        }
    }
    BoxTracks out;
    for (auto& [id, t] : by_id) {
        out.push_back(std::move(t));
    }
    return out;
}

BoxTracks read_box_tracks(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    return read_box_tracks(in);
}

void write_box_tracks(std::ostream& out, const BoxTracks& tracks) {
    out << "# frame id cx cy cz dx dy dz yaw\n" << std::setprecision(17);
    for (const auto& t : tracks) {
        for (const auto& [frame, b] : t.boxes) {
            out << frame << ' ' << t.id << ' ' << b.center.x() << ' ' << b.center.y() << ' ' << b.center.z() << ' '
                << b.dims.x() << ' ' << b.dims.y() << ' ' << b.dims.z() << ' ' << b.yaw << '\n';
        }
    }
}

void write_box_tracks(const std::string& path, const BoxTracks& tracks) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    write_box_tracks(out, tracks);
}

}  // namespace rigid_accum
