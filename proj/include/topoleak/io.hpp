#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace topoleak::io {

std::string read_text(const std::filesystem::path& p);
void write_text(const std::filesystem::path& p, std::string_view content);

/// Little-endian float32 array, independent of host byte order.
void write_f32_le(const std::filesystem::path& p, std::span<const float> values);
std::vector<float> read_f32_le(const std::filesystem::path& p);

/// `stem` with `suffix` appended to its filename ("emb" -> "emb.bin").
std::filesystem::path with_suffix(const std::filesystem::path& stem, std::string_view suffix);

}  // namespace topoleak::io
