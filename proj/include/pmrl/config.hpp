#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pmrl {

// Flat `key = value` text: one pair per line, # starts a comment, dotted keys
// express grouping. Duplicate keys within one source are an error; later
// sources override via set().
class KeyValueConfig {
public:
    static KeyValueConfig from_file(const std::string& path);
    static KeyValueConfig from_string(const std::string& text,
                                      const std::string& origin = "<config>");

    void set(const std::string& key, std::string value);
    bool has(const std::string& key) const;
    std::optional<std::string> raw(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    std::vector<std::string> keys() const;
    // Throws listing every key not present in `known`.
    void require_known(const std::vector<std::string>& known) const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace pmrl
