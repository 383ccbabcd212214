#include "seedbench/seeding.hpp"

#include <stdexcept>

namespace seedbench {
namespace {

constexpr std::uint64_t kDomainTag = 0x5eedbe4c4c0ffeeULL;

class SeedHasher {
 public:
  explicit SeedHasher(std::uint64_t init) : state_(splitmix64(init ^ kDomainTag)) {}

  void absorb(std::uint64_t word) noexcept { state_ = splitmix64(state_ ^ word); }

  void absorb(std::string_view s) noexcept {
    absorb(static_cast<std::uint64_t>(s.size()));
    std::uint64_t word = 0;
    int filled = 0;
    for (unsigned char c : s) {
      word |= static_cast<std::uint64_t>(c) << (8 * filled);
      if (++filled == 8) {
        absorb(word);
        word = 0;
        filled = 0;
      }
    }
    if (filled > 0) absorb(word);
  }

  std::uint64_t digest() const noexcept { return splitmix64(state_); }

 private:
  std::uint64_t state_;
};

bool valid_purpose(std::string_view p) {
  if (p == "train" || p == "draw" || p == "eval") return true;
  constexpr std::string_view prefix = "restart-";
  if (p.size() <= prefix.size() || p.substr(0, prefix.size()) != prefix) return false;
  for (char c : p.substr(prefix.size()))
    if (c < '0' || c > '9') return false;
  return true;
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base_seed, std::string_view dataset,
                          std::string_view method, std::uint64_t n,
                          std::uint64_t rep, std::string_view purpose) {
  if (!valid_purpose(purpose))
    throw std::invalid_argument("derive_seed: unknown purpose '" + std::string(purpose) + "'");
  SeedHasher h(base_seed);
  h.absorb(dataset);
  h.absorb(method);
  h.absorb(n);
  h.absorb(rep);
  h.absorb(purpose);
  return h.digest();
}

std::string restart_purpose(int k) { return "restart-" + std::to_string(k); }

std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index) noexcept {
  SeedHasher h(seed);
  h.absorb(tag);
  h.absorb(index);
  return h.digest();
}

}  // namespace seedbench
