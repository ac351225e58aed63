#pragma once

// Minimal CSV plumbing shared by the file formats of every module. Fields are
// comma separated, no quoting; the first line is a fixed header.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fluxcal::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// Parses CSV text. Blank lines are skipped; every row must have the header's width.
Table parse(std::string_view text);

/// Reads and parses a file, then checks that the header matches `expected_header` exactly.
Table read_file(const std::filesystem::path& path, const std::vector<std::string>& expected_header);

double parse_real(std::string_view field);
long long parse_integer(std::string_view field);

/// Round-trip exact, locale independent, 17 significant digits.
std::string format_real(double value);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace fluxcal::csv
