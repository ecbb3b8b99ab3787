#ifndef SYMPTOMCAST_CONFIG_HPP
#define SYMPTOMCAST_CONFIG_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace symptomcast {

// One `key=value` line; `line` is 1-based in the source text.
struct KeyValue {
    std::string key;
    std::string value;
    int line = 0;
};

// Blank lines and `#` comments are skipped; whitespace around keys and values
// is trimmed. Malformed lines and repeated keys throw ConfigError.
std::vector<KeyValue> parse_key_values(std::istream& is);

// Typed conversions; errors name the key and line.
double to_double(const KeyValue& kv);
long long to_int(const KeyValue& kv);
std::uint64_t to_uint64(const KeyValue& kv);
bool to_bool(const KeyValue& kv);

// Shortest decimal text that round-trips the double exactly.
std::string format_double(double v);

} // namespace symptomcast

#endif
