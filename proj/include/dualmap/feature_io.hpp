#pragma once

// Per-video clip feature files: a 16-byte little-endian header
//   bytes 0..7   magic "DMFEAT01"
//   bytes 8..11  uint32 T (clip count)
//   bytes 12..15 uint32 d_v (feature dimension)
// followed by T*d_v row-major float32 values.

#include "dualmap/autograd.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>

namespace dualmap {

class FeatureFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FeatureHeader {
  std::uint32_t clip_count = 0;
  std::uint32_t dim = 0;
};

inline constexpr char kFeatureMagic[8] = {'D', 'M', 'F', 'E', 'A', 'T', '0', '1'};

FeatureHeader read_feature_header(const std::filesystem::path& path);
ad::Matrix read_features(const std::filesystem::path& path);
/// Values are narrowed to float32 on write.
void write_features(const std::filesystem::path& path, const ad::Matrix& features);

}  // namespace dualmap
