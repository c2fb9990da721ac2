#pragma once

// A small JSON Schema checker covering the draft-07 keywords the config
// schema uses: type, enum, properties, required, additionalProperties
// (boolean form), items, minItems, uniqueItems, minLength, minimum, maximum,
// exclusiveMinimum, exclusiveMaximum and local $ref into #/definitions.

#include <string>
#include <vector>

namespace stochep::harness {

/// Violations of `schema` by `document` (both JSON text), one message per
/// problem, each prefixed with a JSON pointer. Empty when valid. Throws
/// std::invalid_argument when either text is not JSON or the schema uses an
/// unsupported keyword.
std::vector<std::string> validate_json(const std::string& document, const std::string& schema);

}  // namespace stochep::harness
