#pragma once

#include <nlohmann/json.hpp>

#include "ragar/corpus.hpp"
#include "ragar/encoders.hpp"
#include "ragar/generator.hpp"
#include "ragar/metrics.hpp"
#include "ragar/pipeline.hpp"
#include "ragar/preference.hpp"
#include "ragar/ranker.hpp"
#include "ragar/reflection.hpp"
#include "ragar/retrieval.hpp"

namespace ragar {

// JSON bindings for every config struct; field names are the dotted names
// the CLI flags use. Unknown fields are rejected nowhere (forward compat),
// missing fields keep their defaults.

void to_json(nlohmann::json& j, const CorpusConfig& c);
void from_json(const nlohmann::json& j, CorpusConfig& c);

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

void to_json(nlohmann::json& j, const KeywordExtractorConfig& c);
void from_json(const nlohmann::json& j, KeywordExtractorConfig& c);

void to_json(nlohmann::json& j, const RetrievalConfig& c);
void from_json(const nlohmann::json& j, RetrievalConfig& c);

void to_json(nlohmann::json& j, const PreferenceDims& c);
void from_json(const nlohmann::json& j, PreferenceDims& c);

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

void to_json(nlohmann::json& j, const RankTrainConfig& c);
void from_json(const nlohmann::json& j, RankTrainConfig& c);

void to_json(nlohmann::json& j, const ReflectionConfig& c);
void from_json(const nlohmann::json& j, ReflectionConfig& c);

void to_json(nlohmann::json& j, const MetricsConfig& c);
void from_json(const nlohmann::json& j, MetricsConfig& c);

}  // namespace ragar
