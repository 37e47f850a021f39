#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace trl3d {

/// Fixed-precision number formatting so reruns produce identical bytes.
std::string fmt(double v);

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);

    CsvWriter& row(const std::vector<std::string>& cells);
    std::string text() const;
    void save(const std::filesystem::path& path) const;

private:
    std::size_t columns_;
    std::string text_;
};

/// Parses a CSV produced by CsvWriter (no quoting); the header is row 0.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

}  // namespace trl3d
