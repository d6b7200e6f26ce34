#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace synthmarket {

/// Validates an instance against the JSON Schema subset used by the shipped
/// schemas: type (single or list), properties, required,
/// additionalProperties (bool or schema), items, enum, minimum, maximum,
/// minItems, anyOf and local $ref ("#/definitions/..." or "#/$defs/...").
/// Returns one message per violation, each prefixed with its JSON pointer.
std::vector<std::string> validate_schema(const nlohmann::json& instance, const nlohmann::json& schema);

/// Shipped schemas, compiled into the library.
const nlohmann::json& evaluation_report_schema();
const nlohmann::json& regurgitation_report_schema();

}  // namespace synthmarket
