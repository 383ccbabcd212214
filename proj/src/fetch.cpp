#include "seedbench/fetch.hpp"

#include <httplib.h>
#include <openssl/evp.h>
#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <array>
#include <fstream>
#include <memory>

namespace seedbench::data {
namespace fs = std::filesystem;
namespace {

// Exclusive advisory lock held for the lifetime of the object.
class FileLock {
 public:
  explicit FileLock(const fs::path& lock_path) {
    fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) throw FetchError("cannot open lock file " + lock_path.string(), false);
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw FetchError("cannot lock " + lock_path.string(), true);
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw FetchError("malformed url: " + url, false);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

void download(const std::string& url, const fs::path& dest) {
  const auto parsed = parse_url(url);
  httplib::Client client(parsed.origin);
  client.set_follow_location(true);
  client.set_connection_timeout(30);
  client.set_read_timeout(120);

  std::ofstream out(dest, std::ios::binary | std::ios::trunc);
  if (!out) throw FetchError("cannot write " + dest.string(), false);
  auto res = client.Get(parsed.path, [&](const char* data, std::size_t len) {
    out.write(data, static_cast<std::streamsize>(len));
    return static_cast<bool>(out);
  });
  out.close();
  if (!res) throw FetchError("download of " + url + " failed: " + httplib::to_string(res.error()), true);
  if (res->status != 200) {
    const bool retriable = res->status >= 500 || res->status == 429;
    throw FetchError("download of " + url + " returned HTTP " + std::to_string(res->status), retriable);
  }
  if (!out) throw FetchError("short write to " + dest.string(), false);
}

}  // namespace

namespace {

std::string hex_digest(EVP_MD_CTX* ctx) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md.data(), &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[md[i] >> 4]);
    hex.push_back(kHex[md[i] & 0xf]);
  }
  return hex;
}

using DigestCtx = std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)>;

DigestCtx sha256_ctx() {
  DigestCtx ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  return ctx;
}

}  // namespace

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FetchError("cannot read " + path.string(), false);
  auto ctx = sha256_ctx();
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return hex_digest(ctx.get());
}

std::string sha256_hex(std::string_view bytes) {
  auto ctx = sha256_ctx();
  EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size());
  return hex_digest(ctx.get());
}

fs::path cache_path(const DatasetSpec& spec, const fs::path& cache_dir) {
  if (!spec.checksum) throw FetchError(spec.name + ": no checksum, cannot locate cache entry", false);
  return cache_dir / spec.name / (*spec.checksum + ".csv");
}

fs::path fetch_dataset(const DatasetSpec& spec, const fs::path& cache_dir) {
  if (spec.source != DataSource::RemoteUrl)
    throw FetchError(spec.name + ": fetch requires a remote-url source", false);
  spec.validate();
  const fs::path target = cache_path(spec, cache_dir);
  fs::create_directories(target.parent_path());
  FileLock lock(fs::path(target).concat(".lock"));

  if (fs::exists(target)) {
    if (sha256_file(target) == *spec.checksum) return target;
    fs::remove(target);
  }

  const fs::path tmp = fs::path(target).concat(".part");
  try {
    download(*spec.url, tmp);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
  const std::string actual = sha256_file(tmp);
  if (actual != *spec.checksum) {
    fs::remove(tmp);
    throw FetchError(spec.name + ": checksum mismatch (expected " + *spec.checksum + ", actual " +
                         actual + ")",
                     false);
  }
  fs::rename(tmp, target);
  return target;
}

}  // namespace seedbench::data
