#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace convkit::resources {

// Compiled-in copy of a file under resources/, e.g. "stopwords.txt" or "lexicon/det.txt".
std::optional<std::string_view> builtin(std::string_view name);

/// One entry per non-empty line, trimmed; lines starting with '#' are comments.
std::vector<std::string> parse_word_list(std::string_view text);

/// Reads `override_dir / name` when an override directory is given and the file exists,
/// otherwise the compiled-in resource. Throws convkit::Error if neither is available.
std::vector<std::string> load_word_list(std::string_view name,
                                        const std::optional<std::filesystem::path>& override_dir = {});

std::vector<std::string> load_word_list_file(const std::filesystem::path& path);

}  // namespace convkit::resources
