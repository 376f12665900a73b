#include "unibrain/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace unibrain {

namespace fs = std::filesystem;

namespace {

constexpr uint64_t kTeacherSeedSalt = 0x7ea5u;
constexpr uint64_t kLatentSeedSalt = 0x1a7e17u;
constexpr uint64_t kBasisSeedSalt = 0xba515u;
constexpr uint64_t kSubjectSeedSalt = 0x5ubu...

}  // namespace

}  // namespace unibrain
