#pragma once

#include <string>
#include <vector>

#include <json.hpp>

// Minimal structural validator for the subset of JSON Schema the report
// schema uses: type, properties, required, items, enum, additionalProperties.

namespace qvortex::json_schema {

namespace detail {

inline bool type_matches(const nlohmann::json& value, const std::string& type) {
  if (type == "object") return value.is_object();
  if (type == "array") return value.is_array();
  if (type == "string") return value.is_string();
  if (type == "number") return value.is_number();
  if (type == "integer") return value.is_number_integer() || value.is_number_unsigned();
  if (type == "boolean") return value.is_boolean();
  if (type == "null") return value.is_null();
  return false;
}

inline void validate_node(const nlohmann::json& value, const nlohmann::json& schema,
                          const std::string& path, std::vector<std::string>& errors) {
  if (schema.contains("type")) {
    const auto& t = schema["type"];
    bool ok = false;
    if (t.is_string()) {
      ok = type_matches(value, t.get<std::string>());
    } else {
      for (const auto& alt : t) ok = ok || type_matches(value, alt.get<std::string>());
    }
    if (!ok) {
      errors.push_back(path + ": expected type " + t.dump() + ", got " +
                       std::string(value.type_name()));
      return;
    }
  }
  if (schema.contains("enum")) {
    bool ok = false;
    for (const auto& option : schema["enum"]) ok = ok || option == value;
    if (!ok) errors.push_back(path + ": value " + value.dump() + " not in enum");
  }
  if (value.is_object()) {
    if (schema.contains("required"))
      for (const auto& key : schema["required"])
        if (!value.contains(key.get<std::string>()))
          errors.push_back(path + ": missing required key '" + key.get<std::string>() + "'");
    const bool closed =
        schema.contains("additionalProperties") && schema["additionalProperties"] == false;
    for (auto it = value.begin(); it != value.end(); ++it) {
      const bool described = schema.contains("properties") && schema["properties"].contains(it.key());
      if (described)
        validate_node(it.value(), schema["properties"][it.key()], path + "/" + it.key(), errors);
      else if (closed)
        errors.push_back(path + ": unexpected key '" + it.key() + "'");
    }
  }
  if (value.is_array() && schema.contains("items")) {
    for (std::size_t i = 0; i < value.size(); ++i)
      validate_node(value[i], schema["items"], path + "/" + std::to_string(i), errors);
  }
}

}  // namespace detail

// Returns the list of violations; empty means the document validates.
inline std::vector<std::string> validate(const nlohmann::json& document,
                                         const nlohmann::json& schema) {
  std::vector<std::string> errors;
  detail::validate_node(document, schema, "#", errors);
  return errors;
}

}  // namespace qvortex::json_schema
