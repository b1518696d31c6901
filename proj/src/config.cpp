#include "pcp/config.hpp"

#include <functional>
#include <map>

#include "pcp/error.hpp"

namespace pcp {

namespace {

using Setter = std::function<void(const Json&)>;

// Applies known keys through their setters; anything else is a usage error.
void apply_keys(const Json& j, const char* section, const std::map<std::string, Setter>& setters) {
  if (!j.is_object()) usage_error(std::string("config: '") + section + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto s = setters.find(it.key());
    if (s == setters.end()) usage_error(std::string("config: unknown key '") + it.key() + "' in '" + section + "'");
    try {
      s->second(it.value());
    } catch (const nlohmann::json::exception& e) {
      usage_error(std::string("config: bad value for '") + section + "." + it.key() + "': " + e.what());
    }
  }
}

template <typename T>
Setter set(T& field) {
  return [&field](const Json& v) { field = v.get<T>(); };
}

}  // namespace

Json to_json(const nets::Arch& a) {
  return Json{{"dim", a.dim},
              {"cond_width", a.cond_width},
              {"encoder_hidden", a.encoder_hidden},
              {"implicit_hidden", a.implicit_hidden},
              {"implicit_layers", a.implicit_layers},
              {"implicit_skip", a.implicit_skip},
              {"query_hidden", a.query_hidden},
              {"query_layers", a.query_layers}};
}

Json to_json(const SamplingConfig& c) {
  return Json{{"per_point", c.per_point}, {"k_sigma", c.k_sigma}, {"sigma_mode", to_string(c.sigma_mode)}};
}

Json to_json(const ad::AdamConfig& c) {
  return Json{{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
}

Json to_json(const TrainConfig& c) {
  return Json{{"epochs", c.epochs},
              {"queries_per_region", c.queries_per_region},
              {"sampling", to_json(c.sampling)},
              {"adam", to_json(c.adam)},
              {"seed", c.seed},
              {"loss_mode", to_string(c.loss_mode)}};
}

Json to_json(const SpecializeConfig& c) {
  return Json{{"steps", c.steps},
              {"batch", c.batch},
              {"sampling", to_json(c.sampling)},
              {"adam", to_json(c.adam)},
              {"seed", c.seed},
              {"loss_mode", to_string(c.loss_mode)},
              {"mode", to_string(c.mode)}};
}

Json to_json(const MetricConfig& c) {
  return Json{{"sample_count", c.sample_count}, {"fscore_threshold", c.fscore_threshold}, {"seed", c.seed}};
}

void apply_json(const Json& j, nets::Arch& a) {
  apply_keys(j, "arch",
             {{"dim", set(a.dim)},
              {"cond_width", set(a.cond_width)},
              {"encoder_hidden", set(a.encoder_hidden)},
              {"implicit_hidden", set(a.implicit_hidden)},
              {"implicit_layers", set(a.implicit_layers)},
              {"implicit_skip", set(a.implicit_skip)},
              {"query_hidden", set(a.query_hidden)},
              {"query_layers", set(a.query_layers)}});
}

void apply_json(const Json& j, SamplingConfig& c) {
  apply_keys(j, "sampling",
             {{"per_point", set(c.per_point)},
              {"k_sigma", set(c.k_sigma)},
              {"sigma_mode", [&c](const Json& v) { c.sigma_mode = parse_sigma_mode(v.get<std::string>()); }}});
}

void apply_json(const Json& j, ad::AdamConfig& c) {
  apply_keys(j, "adam", {{"lr", set(c.lr)}, {"beta1", set(c.beta1)}, {"beta2", set(c.beta2)}, {"eps", set(c.eps)}});
}

void apply_json(const Json& j, TrainConfig& c) {
  apply_keys(j, "train",
             {{"epochs", set(c.epochs)},
              {"queries_per_region", set(c.queries_per_region)},
              {"sampling", [&c](const Json& v) { apply_json(v, c.sampling); }},
              {"adam", [&c](const Json& v) { apply_json(v, c.adam); }},
              {"seed", set(c.seed)},
              {"loss_mode", [&c](const Json& v) { c.loss_mode = parse_loss_mode(v.get<std::string>()); }}});
}

void apply_json(const Json& j, SpecializeConfig& c) {
  apply_keys(j, "specialize",
             {{"steps", set(c.steps)},
              {"batch", set(c.batch)},
              {"sampling", [&c](const Json& v) { apply_json(v, c.sampling); }},
              {"adam", [&c](const Json& v) { apply_json(v, c.adam); }},
              {"seed", set(c.seed)},
              {"loss_mode", [&c](const Json& v) { c.loss_mode = parse_loss_mode(v.get<std::string>()); }},
              {"mode", [&c](const Json& v) { c.mode = parse_specialize_mode(v.get<std::string>()); }}});
}

void apply_json(const Json& j, MetricConfig& c) {
  apply_keys(j, "metrics",
             {{"sample_count", set(c.sample_count)},
              {"fscore_threshold", set(c.fscore_threshold)},
              {"seed", set(c.seed)}});
}

Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    usage_error(what + ": " + e.what());
  }
}

}  // namespace pcp
