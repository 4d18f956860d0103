#include "brwre/rng.h"

namespace brwre {

std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

std::uint64_t streamKey(std::uint64_t master, StreamPurpose purpose, std::uint64_t index0,
                        std::uint64_t index1, std::uint64_t index2) {
    std::uint64_t h = mix64(master ^ 0x243f6a8885a308d3ULL);
    h = mix64(h ^ static_cast<std::uint64_t>(purpose));
    h = mix64(h + index0 * 0x9e3779b97f4a7c15ULL);
    h = mix64(h + index1 * 0xc2b2ae3d27d4eb4fULL);
    h = mix64(h + index2 * 0x165667b19e3779f9ULL);
    return h;
}

}  // namespace brwre
