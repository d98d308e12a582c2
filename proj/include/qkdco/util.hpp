#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace qkdco {

// Number of workers to use: QKDCO_THREADS if set and > 0, otherwise the
// OpenMP default. QKDCO_THREADS=0 means auto.
int worker_count();

// %.9g formatting used by every CSV emitter.
std::string fmt_g9(double x);

// Write-to-temp-then-rename so failed runs never leave partial files.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

std::vector<std::string> split(const std::string& s, char sep);

}  // namespace qkdco
