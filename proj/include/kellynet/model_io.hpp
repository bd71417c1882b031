#pragma once

#include <filesystem>
#include <string>
#include <variant>

#include "kellynet/model.hpp"

namespace kellynet {

using AnyModel = std::variant<OpenNetworkModel, ClosedNetworkModel>;

/// Strict parser: unknown keys, wrong types and malformed structure raise
/// ParseError. Semantic checks are left to validate_open/validate_closed.
AnyModel parse_model_text(const std::string& text);

AnyModel load_model_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace kellynet
