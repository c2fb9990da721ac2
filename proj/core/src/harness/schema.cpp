#include "stochep/harness/schema.hpp"

#include <set>
#include <stdexcept>

#include "schema_check.hpp"

namespace stochep::harness {

namespace detail {

namespace {

using nlohmann::json;

const std::set<std::string> kKnownKeywords = {
    "$schema", "$id", "title", "description", "type", "enum", "properties", "required",
    "additionalProperties", "items", "minItems", "uniqueItems", "minLength", "minimum",
    "maximum", "exclusiveMinimum", "exclusiveMaximum", "$ref", "definitions", "default"};

bool has_type(const json& value, const std::string& type) {
  if (type == "object") return value.is_object();
  if (type == "array") return value.is_array();
  if (type == "string") return value.is_string();
  if (type == "boolean") return value.is_boolean();
  if (type == "null") return value.is_null();
  if (type == "number") return value.is_number();
  if (type == "integer") {
    if (value.is_number_integer()) return true;
    if (!value.is_number_float()) return false;
    const double v = value.get<double>();
    return v == static_cast<double>(static_cast<long long>(v));
  }
  throw std::invalid_argument("schema: unknown type '" + type + "'");
}

class Checker {
 public:
  explicit Checker(const json& root) : root_(root) {}

  void check(const json& value, const json& schema, const std::string& where) {
    for (const auto& item : schema.items()) {
      if (!kKnownKeywords.count(item.key())) throw std::invalid_argument("schema: unsupported keyword '" + item.key() + "'");
    }
    if (schema.contains("$ref")) {
      check(value, resolve(schema["$ref"].get<std::string>()), where);
      return;
    }
    if (schema.contains("type")) {
      const json& t = schema["type"];
      bool ok = false;
      if (t.is_array()) {
        for (const auto& each : t) ok = ok || has_type(value, each.get<std::string>());
      } else {
        ok = has_type(value, t.get<std::string>());
      }
      if (!ok) {
        fail(where, "expected type " + t.dump());
        return;
      }
    }
    if (schema.contains("enum")) {
      bool found = false;
      for (const auto& option : schema["enum"]) found = found || option == value;
      if (!found) fail(where, "value " + value.dump() + " not in " + schema["enum"].dump());
    }
    if (value.is_number()) check_number(value.get<double>(), schema, where);
    if (value.is_string() && schema.contains("minLength") &&
        value.get<std::string>().size() < schema["minLength"].get<std::size_t>()) {
      fail(where, "string shorter than " + schema["minLength"].dump());
    }
    if (value.is_object()) check_object(value, schema, where);
    if (value.is_array()) check_array(value, schema, where);
  }

  std::vector<std::string> errors;

 private:
  const json& resolve(const std::string& ref) const {
    const std::string prefix = "#/definitions/";
    if (ref.rfind(prefix, 0) != 0) throw std::invalid_argument("schema: only local #/definitions refs are supported");
    const std::string name = ref.substr(prefix.size());
    if (!root_.contains("definitions") || !root_["definitions"].contains(name)) {
      throw std::invalid_argument("schema: unresolved $ref '" + ref + "'");
    }
    return root_["definitions"][name];
  }

  void check_number(double v, const json& schema, const std::string& where) {
    if (schema.contains("minimum") && v < schema["minimum"].get<double>()) fail(where, "below minimum " + schema["minimum"].dump());
    if (schema.contains("maximum") && v > schema["maximum"].get<double>()) fail(where, "above maximum " + schema["maximum"].dump());
    if (schema.contains("exclusiveMinimum") && v <= schema["exclusiveMinimum"].get<double>()) {
      fail(where, "must exceed " + schema["exclusiveMinimum"].dump());
    }
    if (schema.contains("exclusiveMaximum") && v >= schema["exclusiveMaximum"].get<double>()) {
      fail(where, "must be below " + schema["exclusiveMaximum"].dump());
    }
  }

  void check_object(const json& value, const json& schema, const std::string& where) {
    if (schema.contains("required")) {
      for (const auto& key : schema["required"]) {
        if (!value.contains(key.get<std::string>())) fail(where, "missing required property '" + key.get<std::string>() + "'");
      }
    }
    const json* props = schema.contains("properties") ? &schema["properties"] : nullptr;
    const bool closed = schema.contains("additionalProperties") && schema["additionalProperties"].is_boolean() &&
                        !schema["additionalProperties"].get<bool>();
    for (const auto& item : value.items()) {
      const std::string child = where + "/" + item.key();
      if (props && props->contains(item.key())) {
        check(item.value(), (*props)[item.key()], child);
      } else if (closed) {
        fail(child, "unknown property");
      }
    }
  }

  void check_array(const json& value, const json& schema, const std::string& where) {
    if (schema.contains("minItems") && value.size() < schema["minItems"].get<std::size_t>()) {
      fail(where, "fewer than " + schema["minItems"].dump() + " items");
    }
    if (schema.value("uniqueItems", false)) {
      for (std::size_t a = 0; a < value.size(); ++a)
        for (std::size_t b = a + 1; b < value.size(); ++b)
          if (value[a] == value[b]) fail(where, "duplicate item " + value[a].dump());
    }
    if (schema.contains("items")) {
      for (std::size_t k = 0; k < value.size(); ++k) check(value[k], schema["items"], where + "/" + std::to_string(k));
    }
  }

  void fail(const std::string& where, const std::string& what) {
    errors.push_back((where.empty() ? std::string("/") : where) + ": " + what);
  }

  const json& root_;
};

}  // namespace

std::vector<std::string> check_schema(const nlohmann::json& document, const nlohmann::json& schema) {
  Checker checker(schema);
  checker.check(document, schema, "");
  return checker.errors;
}

}  // namespace detail

std::vector<std::string> validate_json(const std::string& document, const std::string& schema) {
  nlohmann::json doc, sch;
  try {
    doc = nlohmann::json::parse(document);
    sch = nlohmann::json::parse(schema);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("not JSON: ") + e.what());
  }
  return detail::check_schema(doc, sch);
}

}  // namespace stochep::harness
