// JSON conversions shared by the project file and the HTTP layer.
#ifndef SPANLAB_SRC_JSON_IO_H_
#define SPANLAB_SRC_JSON_IO_H_

#include <memory>

#include "json.hpp"
#include "spanlab/label_model.h"
#include "spanlab/rules.h"
#include "spanlab/session.h"

namespace spanlab::json_io {

using nlohmann::json;

json ToJson(const LabelingFunction& lf);
// Throws std::invalid_argument when malformed or when the stored id does not
// match the content.
LabelingFunction FunctionFromJson(const json& j);

json ToJson(const SpanAnnotation& ann);
SpanAnnotation AnnotationFromJson(const json& j);

json ToJson(const LFStats& stats);
json ToJson(const ModelMetrics& metrics);
json ToJson(const ContextSpan& span);
json ToJson(const FPReport& report);

json ParamsToJson(const LabelModel& model);
std::unique_ptr<LabelModel> ModelFromJson(ModelKind kind, const json& params);

}  // namespace spanlab::json_io

#endif  // SPANLAB_SRC_JSON_IO_H_
