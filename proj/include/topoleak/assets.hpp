#pragma once

#include <optional>
#include <string_view>

namespace topoleak::assets {

/// Looks up a shipped text asset by relative path, e.g. "v1/teacher_user.txt".
std::optional<std::string_view> find(std::string_view name);

}  // namespace topoleak::assets
