#include "fluxcal/csv.hpp"

#include "fluxcal/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace fluxcal::csv {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        fields.emplace_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return fields;
}

}  // namespace

Table parse(std::string_view text) {
    Table table;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const auto line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (line.empty()) continue;
        auto fields = split(line);
        if (table.header.empty()) {
            table.header = std::move(fields);
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw IoError("csv line " + std::to_string(line_no) + ": expected " +
                          std::to_string(table.header.size()) + " fields, got " +
                          std::to_string(fields.size()));
        }
        table.rows.push_back(std::move(fields));
    }
    return table;
}

Table read_file(const std::filesystem::path& path, const std::vector<std::string>& expected_header) {
    auto table = parse(read_text(path));
    if (table.header != expected_header) {
        std::string want;
        for (const auto& h : expected_header) want += (want.empty() ? "" : ",") + h;
        throw IoError(path.string() + ": expected header '" + want + "'");
    }
    return table;
}

double parse_real(std::string_view field) {
    double value = 0.0;
    const auto* first = field.data();
    const auto* last = field.data() + field.size();
    if (!field.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw IoError("not a number: '" + std::string(field) + "'");
    }
    return value;
}

long long parse_integer(std::string_view field) {
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size()) {
        throw IoError("not an integer: '" + std::string(field) + "'");
    }
    return value;
}

std::string format_real(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
    if (ec != std::errc{}) throw IoError("failed to format number");
    return {buf, ptr};
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace fluxcal::csv
