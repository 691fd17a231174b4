#pragma once

#include <initializer_list>
#include <string>

#include <json.hpp>

#include "cfdiff/classifiers.hpp"
#include "cfdiff/engine.hpp"
#include "cfdiff/guidance.hpp"
#include "cfdiff/latent.hpp"
#include "cfdiff/metrics.hpp"
#include "cfdiff/schedule.hpp"
#include "cfdiff/world.hpp"

namespace cfdiff {

using Json = nlohmann::json;

/// Throws invalid_argument naming the first key of `obj` outside `allowed`.
void reject_unknown_keys(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where);

Json vec_to_json(const Vec& v);
Vec vec_from_json(const Json& j);
Json mat_to_json(const Mat& m);  // row-major nested arrays
Mat mat_from_json(const Json& j);

Json world_to_json(const MixtureWorld& world);
MixtureWorld world_from_json(const Json& j);

/// {ambient_dim, latent_dim, seed, identity}; matrices regenerate from the seed.
Json codec_to_json(const AffineCodec& codec);
AffineCodec codec_from_json(const Json& j);

/// {type, dims: {input, classes, hidden}, seed, params}
Json classifier_to_json(const Classifier& classifier);
Classifier classifier_from_json(const Json& j);

Json guidance_to_json(const GuidanceConfig& config);
/// Missing keys keep the values already in `base`.
GuidanceConfig guidance_from_json(const Json& j, GuidanceConfig base = {});

Json schedule_to_json(const NoiseSchedule& schedule);

Json record_to_json(const CounterfactualRecord& record);
CounterfactualRecord record_from_json(const Json& j);
/// {id, steps: [{t, z_t, x0_hat, logits, consensus_pass_fraction}]}
Json trajectory_to_json(std::size_t id, const Trajectory& trajectory);
Trajectory trajectory_from_json(const Json& j);

Json report_to_json(const MetricReport& report);

}  // namespace cfdiff
