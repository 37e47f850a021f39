#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace trl3d {

inline constexpr const char* kLibraryVersion = "0.1.0";

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Flat key=value run configuration. Every key has a registered default;
/// unknown keys are rejected. '#' starts a comment.
class RunConfig {
public:
    RunConfig();

    static RunConfig parse(const std::string& text, const std::string& origin = "<string>");
    static RunConfig load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    bool has_key(const std::string& key) const;

    const std::string& str(const std::string& key) const;
    double real(const std::string& key) const;
    std::int64_t integer(const std::string& key) const;
    std::size_t count(const std::string& key) const;
    std::uint64_t u64(const std::string& key) const;
    bool flag(const std::string& key) const;
    /// Comma-separated non-negative integers; an empty value is an empty list.
    std::vector<std::size_t> counts(const std::string& key) const;
    std::vector<std::string> words(const std::string& key) const;

    /// All keys, sorted, one "key=value" per line.
    std::string resolved() const;
    static std::vector<std::string> known_keys();

private:
    std::map<std::string, std::string> values_;
};

}  // namespace trl3d
