#include "seedbench/fetch.hpp"

#include <httplib.h>
#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

namespace fs = std::filesystem;
using namespace seedbench::data;

namespace {

// 1 MiB fixture; its SHA-256 was computed independently (Python hashlib) and
// frozen here.
std::string fixture_bytes() {
  std::string s(std::size_t{1} << 20, '\0');
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<char>((i * 131 + (i >> 8) * 7) & 0xFF);
  return s;
}
constexpr const char* kFixtureDigest = "058d61bf2e123d1c81cbd1f530b33d607253969b3bc13556f3e8cc43d4b478f0";
constexpr const char* kSmallCsvDigest = "81bf9fa83c6f7f151bd491a98cd7d933de3965289e3ebd77c6c425f7eaa16392";

class FixtureServer {
 public:
  FixtureServer() {
    server_.Get("/fixture.bin", [this](const httplib::Request&, httplib::Response& res) {
      ++hits_;
      res.set_content(fixture_bytes(), "application/octet-stream");
    });
    server_.Get("/small.csv", [this](const httplib::Request&, httplib::Response& res) {
      ++hits_;
      res.set_content("x,y\n1,2\n", "text/csv");
    });
    server_.Get("/broken", [this](const httplib::Request&, httplib::Response& res) {
      ++hits_;
      res.status = 503;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FixtureServer() {
    server_.stop();
    thread_.join();
  }
  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }
  int hits() const { return hits_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> hits_{0};
};

DatasetSpec remote(const std::string& url, const std::string& digest) {
  DatasetSpec s;
  s.name = "remote";
  s.source = DataSource::RemoteUrl;
  s.url = url;
  s.checksum = digest;
  s.feature_columns = {std::string("x")};
  s.target_column = std::string("y");
  return s;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("seedbench_fetch_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(fixture_bytes()), kFixtureDigest);
}

TEST(Fetch, FreshDownloadOfOneMegabyteFixture) {
  FixtureServer srv;
  const auto cache = scratch("fresh");
  const auto p = fetch_dataset(remote(srv.url("/fixture.bin"), kFixtureDigest), cache);
  ASSERT_TRUE(fs::exists(p));
  EXPECT_EQ(fs::file_size(p), std::size_t{1} << 20);
  EXPECT_EQ(sha256_file(p), kFixtureDigest);
  EXPECT_EQ(p, cache / "remote" / (std::string(kFixtureDigest) + ".csv"));
}

TEST(Fetch, CacheHitMakesNoNetworkCall) {
  FixtureServer srv;
  const auto cache = scratch("hit");
  auto spec = remote(srv.url("/small.csv"), kSmallCsvDigest);
  fetch_dataset(spec, cache);
  EXPECT_EQ(srv.hits(), 1);
  fetch_dataset(spec, cache);
  EXPECT_EQ(srv.hits(), 1);
  // Even an unreachable url is fine once the file is cached.
  spec.url = "http://127.0.0.1:1/nothing";
  EXPECT_NO_THROW(fetch_dataset(spec, cache));
  const auto load = load_dataset(spec, cache);
  EXPECT_EQ(load.dataset.rows(), 1);
  EXPECT_EQ(load.dataset.targets(0), 2.0);
}

TEST(Fetch, ChecksumMismatchIsFatalAndLeavesNoFile) {
  FixtureServer srv;
  const auto cache = scratch("mismatch");
  const std::string wrong(64, '0');
  try {
    fetch_dataset(remote(srv.url("/small.csv"), wrong), cache);
    FAIL() << "expected FetchError";
  } catch (const FetchError& e) {
    EXPECT_FALSE(e.retriable());
    const std::string w = e.what();
    EXPECT_NE(w.find(wrong), std::string::npos);
    EXPECT_NE(w.find(kSmallCsvDigest), std::string::npos);
  }
  const auto dir = cache / "remote";
  for (const auto& entry : fs::directory_iterator(dir))
    EXPECT_EQ(entry.path().extension(), ".lock") << entry.path();
}

TEST(Fetch, CorruptCachedCopyIsRemoved) {
  const auto cache = scratch("corrupt");
  const auto spec = remote("http://127.0.0.1:1/nothing", kSmallCsvDigest);
  const auto target = cache_path(spec, cache);
  fs::create_directories(target.parent_path());
  std::ofstream(target) << "tampered\n";
  EXPECT_THROW(fetch_dataset(spec, cache), FetchError);
  EXPECT_FALSE(fs::exists(target));
}

TEST(Fetch, TransportErrorsAreRetriable) {
  FixtureServer srv;
  const auto cache = scratch("retriable");
  try {
    fetch_dataset(remote(srv.url("/broken"), kSmallCsvDigest), cache);
    FAIL() << "expected FetchError";
  } catch (const FetchError& e) {
    EXPECT_TRUE(e.retriable());
  }
  try {
    fetch_dataset(remote("http://127.0.0.1:1/nothing", kSmallCsvDigest), cache);
    FAIL() << "expected FetchError";
  } catch (const FetchError& e) {
    EXPECT_TRUE(e.retriable());
  }
}

TEST(Fetch, RemoteSourceNotInCacheCannotLoad) {
  const auto cache = scratch("absent");
  EXPECT_THROW(load_dataset(remote("http://127.0.0.1:1/x", kSmallCsvDigest), cache), DataError);
}
