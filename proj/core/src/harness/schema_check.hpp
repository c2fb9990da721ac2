#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace stochep::harness::detail {

std::vector<std::string> check_schema(const nlohmann::json& document, const nlohmann::json& schema);

}  // namespace stochep::harness::detail
