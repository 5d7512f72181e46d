#pragma once

#include "rigid_accum/io.hpp"
#include "rigid_accum/pipeline.hpp"
#include "rigid_accum/sim.hpp"

namespace rigid_accum {

/// Scene file layout:
///   [scene]      seed, frames, dt, ground_extent, base (default | empty)
///   [ego]        start, yaw, speed, yaw_rate
///   [sensor]     max_range, points_per_frame, body_density, dropout,
///                noise_sigma, height, occlusion, occlusion_voxel
///   [wall]       from, to, height                          (repeatable)
///   [structure]  dims, start, yaw                            (repeatable)
///   [body]       dims, clearance, start, yaw, speed, yaw_rate (repeatable)
/// With base = default the built-in scene supplies walls, structures and
/// bodies unless the file lists its own. Unknown keys throw ConfigError.
SceneSpec scene_spec_from_config(const ConfigFile& cfg);
ConfigFile scene_spec_to_config(const SceneSpec& spec);

/// [pipeline] section; `profile` sets v_max and the ICP gates before the
/// remaining keys are applied.
PipelineConfig pipeline_config_from_config(const ConfigFile& cfg);
ConfigFile pipeline_config_to_config(const PipelineConfig& config);

}  // namespace rigid_accum
