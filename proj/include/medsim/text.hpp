#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace medsim {

using Slots = std::map<std::string, std::string>;

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string capitalize_first(std::string_view s);
bool contains_ci(std::string_view haystack, std::string_view needle);
bool starts_with_ci(std::string_view s, std::string_view prefix);

std::vector<std::string> split_whitespace(std::string_view s);
// Whitespace-delimited token count.
std::size_t word_count(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string collapse_whitespace(std::string_view s);

// Substitutes `{{name}}` slots. Every slot in the template must be present in
// `slots`; a missing one raises TemplateError naming it. Text that is not an
// identifier wrapped in double braces (JSON examples, say) passes through.
std::string render_slots(std::string_view tmpl, const Slots& slots,
                         std::string_view template_id = {});
std::set<std::string> slot_names(std::string_view tmpl);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

std::string sha256_hex(std::string_view data);
// Stable 64-bit mix used to derive sub-seeds.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t stable_hash(std::string_view s);

}  // namespace medsim
