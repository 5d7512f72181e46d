#pragma once

#include "rigid_accum/core.hpp"
#include "rigid_accum/segmenter.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace rigid_accum {

class OutOfSpan : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class UncoveredForegroundPoint : public std::runtime_error {
public:
    UncoveredForegroundPoint(std::size_t frame, std::size_t index);
    std::size_t frame;
    std::size_t index;
};

/// Annotated boxes of one instance keyed by frame timestamp (1-based), each
/// in the sensor coordinates of its frame.
struct BoxTrack {
    std::uint32_t id = 0;
    std::map<int, OrientedBox> boxes;
};
using BoxTracks = std::vector<BoxTrack>;

/// Linear center interpolation, shorter-arc yaw, dimensions of the earlier
/// annotation. Throws OutOfSpan outside [first, last] annotated frame.
OrientedBox interpolate_box(const BoxTrack& track, int frame);
std::vector<OrientedBox> interpolate_boxes(const BoxTrack& track, const std::vector<int>& frames);

/// Keeps every `stride`-th annotation plus the last one.
BoxTrack subsample_track(const BoxTrack& track, int stride);

/// Maps box_t's pose onto box_1's pose: pose(box_1) * pose(box_t)^-1.
RigidTransform box_pair_transform(const OrientedBox& box_t, const OrientedBox& box_1);

struct PseudoGt {
    FlowField flow;
    ObjectMotionSet objects;
    FrameMasks foreground;
    FrameMasks dynamic;
    FrameLabels instance;
};

/// Background flow is T_ego x - x; a point inside an interpolated box of a
/// track moves with that box onto the track's target-frame box. Boxes are
/// grown by `margin` on every face for the containment test. When a frame
/// carries foreground labels, a foreground point in no box throws
/// UncoveredForegroundPoint.
PseudoGt build_pseudo_gt(const FrameSequence& seq, std::span<const RigidTransform> gt_ego, const BoxTracks& tracks,
                         double margin = 0.0, double dynamic_speed = 0.5);

/// Line format: `frame id cx cy cz dx dy dz yaw`, '#' starts a comment.
BoxTracks read_box_tracks(std::istream& in);
BoxTracks read_box_tracks(const std::string& path);
void write_box_tracks(std::ostream& out, const BoxTracks& tracks);
void write_box_tracks(const std::string& path, const BoxTracks& tracks);

}  // namespace rigid_accum
