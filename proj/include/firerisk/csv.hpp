#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "firerisk/common.hpp"

namespace firerisk::csv {

enum class Errc { Io, Malformed };
using Error = CodedError<Errc>;

using Row = std::vector<std::string>;

/// RFC 4180 parser: quoted fields may contain commas, doubled quotes and
/// line breaks. Accepts LF or CRLF record terminators. A UTF-8 BOM on the
/// first field is discarded.
std::vector<Row> parse(std::string_view text);
std::vector<Row> read_file(const std::filesystem::path& path);

/// Quotes a field only when it needs it.
std::string escape(std::string_view field);
void write_row(std::ostream& out, const Row& row);
void write_file(const std::filesystem::path& path, const std::vector<Row>& rows);

}  // namespace firerisk::csv
