#include "crow/rng.hpp"

namespace crow {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RngState::RngState(std::uint64_t seed_value) : seed(seed_value) {
  std::uint64_t sm = seed_value;
  for (auto& lane : s) lane = splitmix64(sm);
}

std::uint64_t RngState::next_u64() {
  const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
  const std::uint64_t t = s[1] << 17;
  s[2] ^= s[0];
  s[3] ^= s[1];
  s[1] ^= s[2];
  s[0] ^= s[3];
  s[2] ^= t;
  s[3] = rotl(s[3], 45);
  return result;
}

double RngState::next_uniform() {
  std::uint64_t bits = next_u64() >> 11;  // 53 bits
  double u = static_cast<double>(bits) * 0x1.0p-53;
  if (u <= 0.0) u = 0x1.0p-53;
  return u;
}

RngState RngState::fork() { return RngState(next_u64()); }

}  // namespace crow
