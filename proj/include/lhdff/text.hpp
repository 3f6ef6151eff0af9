#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace lhdff::text {

// Lowercase, drop ASCII punctuation (apostrophes and hyphens included),
// split on whitespace.
std::vector<std::string> tokenize(std::string_view caption);

std::string join(const std::vector<std::string>& words, std::string_view sep = " ");

}  // namespace lhdff::text
