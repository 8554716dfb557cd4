#include "convkit/resources.hpp"

#include <fstream>
#include <sstream>

#include "convkit/error.hpp"
#include "convkit/text.hpp"

namespace convkit::resources {

std::vector<std::string> parse_word_list(std::string_view text)
{
    std::vector<std::string> words;
    for (auto line : text::split(text, '\n')) {
        line = text::trim(line);
        if (line.empty() || line.front() == '#') {
            continue;
        }
        words.emplace_back(line);
    }
    return words;
}

std::vector<std::string> load_word_list_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open word list " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_word_list(buffer.str());
}

std::vector<std::string> load_word_list(std::string_view name, const std::optional<std::filesystem::path>& override_dir)
{
    if (override_dir) {
        auto candidate = *override_dir / std::filesystem::path(name);
        if (std::filesystem::exists(candidate)) {
            return load_word_list_file(candidate);
        }
    }
    auto text = builtin(name);
    if (!text) {
        throw Error("unknown resource " + std::string(name));
    }
    return parse_word_list(*text);
}

}  // namespace convkit::resources
