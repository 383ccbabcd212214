#pragma once

#include "seedbench/data.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace seedbench::data {

/// Download failure. `retriable()` is true for transport errors (connection
/// refused, timeouts, 5xx) and false for integrity or configuration errors.
class FetchError : public std::runtime_error {
 public:
  FetchError(const std::string& what, bool retriable)
      : std::runtime_error(what), retriable_(retriable) {}
  bool retriable() const noexcept { return retriable_; }

 private:
  bool retriable_;
};

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(std::string_view bytes);

/// <cache_dir>/<name>/<sha256>.csv
std::filesystem::path cache_path(const DatasetSpec& spec, const std::filesystem::path& cache_dir);

/// Ensures the remote file is present in the cache with a matching digest and
/// returns its path. A verified cached copy is reused without touching the
/// network. On digest mismatch the file is removed and a non-retriable
/// FetchError naming both digests is thrown.
std::filesystem::path fetch_dataset(const DatasetSpec& spec, const std::filesystem::path& cache_dir);

}  // namespace seedbench::data
