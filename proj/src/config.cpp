#include "symptomcast/config.hpp"

#include "symptomcast/errors.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <set>

namespace symptomcast {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const KeyValue& kv, const char* what)
{
    throw ConfigError("line " + std::to_string(kv.line) + ": " + kv.key + " must be " + what + ", got '" +
                      kv.value + "'");
}

template <typename T>
T parse_number(const KeyValue& kv, const char* what)
{
    T out{};
    const char* first = kv.value.data();
    const char* last = first + kv.value.size();
    const auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last || kv.value.empty()) {
        bad_value(kv, what);
    }
    return out;
}

} // namespace

std::vector<KeyValue> parse_key_values(std::istream& is)
{
    std::vector<KeyValue> out;
    std::set<std::string> seen;
    std::string raw;
    int line = 0;
    while (std::getline(is, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (text.empty()) {
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line) + ": expected key=value, got '" + text + "'");
        }
        KeyValue kv{trim(text.substr(0, eq)), trim(text.substr(eq + 1)), line};
        if (kv.key.empty()) {
            throw ConfigError("line " + std::to_string(line) + ": empty key");
        }
        if (!seen.insert(kv.key).second) {
            throw ConfigError("line " + std::to_string(line) + ": duplicate key " + kv.key);
        }
        out.push_back(std::move(kv));
    }
    return out;
}

double to_double(const KeyValue& kv)
{
    const double v = parse_number<double>(kv, "a number");
    if (!std::isfinite(v)) {
        bad_value(kv, "finite");
    }
    return v;
}

long long to_int(const KeyValue& kv) { return parse_number<long long>(kv, "an integer"); }

std::uint64_t to_uint64(const KeyValue& kv) { return parse_number<std::uint64_t>(kv, "a non-negative integer"); }

bool to_bool(const KeyValue& kv)
{
    if (kv.value == "1" || kv.value == "true") {
        return true;
    }
    if (kv.value == "0" || kv.value == "false") {
        return false;
    }
    bad_value(kv, "true/false");
}

std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

} // namespace symptomcast
