#pragma once

// INI-style config files: [section] headers, key = value lines, # or ;
// comments. Nested sections spelled [a.b]. Schema in docs/config.md.

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace craftrl {

class IniFile {
public:
    static IniFile parse(const std::string& text);
    static IniFile load(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;
    std::string get_str(const std::string& section, const std::string& key,
                        const std::string& fallback) const;
    long get_int(const std::string& section, const std::string& key, long fallback) const;
    double get_real(const std::string& section, const std::string& key, double fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    // comma-separated list
    std::vector<std::string> get_list(const std::string& section, const std::string& key) const;

    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return sections_;
    }

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace craftrl
