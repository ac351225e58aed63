#include "fluxcal/provenance.hpp"

#include "fluxcal/csv.hpp"
#include "fluxcal/errors.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cmath>

#ifndef FLUXCAL_VERSION
#define FLUXCAL_VERSION "0.0.0"
#endif

namespace fluxcal {

const char* const kToolVersion = FLUXCAL_VERSION;

namespace {

using nlohmann::json;

bool is_scalar(const json& j) { return !j.is_array() && !j.is_object(); }

void write(std::string& out, const json& j, int level) {
    const std::string pad(static_cast<std::size_t>(2 * (level + 1)), ' ');
    const std::string close_pad(static_cast<std::size_t>(2 * level), ' ');
    switch (j.type()) {
        case json::value_t::number_float: {
            const double v = j.get<double>();
            out += std::isfinite(v) ? csv::format_real(v) : "null";
            return;
        }
        case json::value_t::array: {
            if (j.empty()) {
                out += "[]";
                return;
            }
            const bool flat = std::all_of(j.begin(), j.end(), is_scalar);
            out += flat ? "[" : "[\n";
            bool first = true;
            for (const auto& v : j) {
                if (!first) out += flat ? ", " : ",\n";
                first = false;
                if (!flat) out += pad;
                write(out, v, level + 1);
            }
            out += flat ? "]" : "\n" + close_pad + "]";
            return;
        }
        case json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += "{\n";
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out += ",\n";
                first = false;
                out += pad + json(it.key()).dump() + ": ";
                write(out, it.value(), level + 1);
            }
            out += "\n" + close_pad + "}";
            return;
        }
        default:
            out += j.dump();
    }
}

}  // namespace

std::string dump_json(const json& j) {
    std::string out;
    write(out, j, 0);
    out += '\n';
    return out;
}

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw IoError("sha256 digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) {
        hex += kHex[md[i] >> 4];
        hex += kHex[md[i] & 0xF];
    }
    return hex;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(csv::read_text(path)); }

json provenance(const std::string& command, const std::vector<std::filesystem::path>& inputs, const json& settings) {
    json files = json::array();
    for (const auto& p : inputs) files.push_back({{"path", p.generic_string()}, {"sha256", sha256_file(p)}});
    return {{"tool", kToolName},
            {"version", kToolVersion},
            {"command", command},
            {"inputs", files},
            {"settings", settings}};
}

}  // namespace fluxcal
