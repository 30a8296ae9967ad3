#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ncdforest::csv {

/// Splits one CSV record. Supports double-quoted fields with "" escapes.
/// Returns false on an unterminated quote.
bool split_record(std::string_view line, std::vector<std::string>& fields);

/// Quotes a field when it contains a comma, quote or newline.
std::string escape(std::string_view field);

}  // namespace ncdforest::csv
