#pragma once

#include "json.hpp"

#include "pcp/metrics.hpp"
#include "pcp/nets.hpp"
#include "pcp/prior.hpp"
#include "pcp/specialize.hpp"

// Structured-text (JSON) views of the configuration types. `to_json` emits
// every field; `apply_json` overrides only the keys present and rejects
// unknown keys with Error(Usage).
namespace pcp {

using Json = nlohmann::ordered_json;

Json to_json(const nets::Arch& a);
Json to_json(const SamplingConfig& c);
Json to_json(const ad::AdamConfig& c);
Json to_json(const TrainConfig& c);
Json to_json(const SpecializeConfig& c);
Json to_json(const MetricConfig& c);

void apply_json(const Json& j, nets::Arch& a);
void apply_json(const Json& j, SamplingConfig& c);
void apply_json(const Json& j, ad::AdamConfig& c);
void apply_json(const Json& j, TrainConfig& c);
void apply_json(const Json& j, SpecializeConfig& c);
void apply_json(const Json& j, MetricConfig& c);

/// Parses text as JSON; Error(Usage) naming `what` on a syntax error.
Json parse_json(const std::string& text, const std::string& what);

}  // namespace pcp
