#include "hyperleaf/rng.hpp"

namespace hyperleaf {

uint64_t derive_seed(uint64_t base, const std::string& tag) {
  uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  SplitMix64 sm(base ^ h);
  return sm.next();
}

}  // namespace hyperleaf
