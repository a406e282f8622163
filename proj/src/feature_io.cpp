#include "dualmap/feature_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

namespace dualmap {

static_assert(std::endian::native == std::endian::little,
              "feature files are little-endian; big-endian hosts need byte swapping");

namespace {

FeatureHeader parse_header(std::istream& in, const std::filesystem::path& path) {
  char header[16];
  if (!in.read(header, sizeof header))
    throw FeatureFileError(path.string() + ": truncated header");
  if (std::memcmp(header, kFeatureMagic, sizeof kFeatureMagic) != 0)
    throw FeatureFileError(path.string() + ": bad magic");
  FeatureHeader h;
  std::memcpy(&h.clip_count, header + 8, 4);
  std::memcpy(&h.dim, header + 12, 4);
  if (h.clip_count == 0 || h.dim == 0)
    throw FeatureFileError(path.string() + ": empty feature matrix");
  return h;
}

}  // namespace

FeatureHeader read_feature_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FeatureFileError("cannot open " + path.string());
  return parse_header(in, path);
}

ad::Matrix read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FeatureFileError("cannot open " + path.string());
  const FeatureHeader h = parse_header(in, path);
  std::vector<float> buf(static_cast<std::size_t>(h.clip_count) * h.dim);
  if (!in.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * sizeof(float))))
    throw FeatureFileError(path.string() + ": truncated payload");
  ad::Matrix out(h.clip_count, h.dim);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    if (!std::isfinite(buf[i])) throw FeatureFileError(path.string() + ": non-finite value");
    out.data()[i] = buf[i];
  }
  return out;
}

void write_features(const std::filesystem::path& path, const ad::Matrix& features) {
  if (features.rows() == 0 || features.cols() == 0)
    throw FeatureFileError("refusing to write an empty feature matrix to " + path.string());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FeatureFileError("cannot create " + path.string());
  char header[16];
  std::memcpy(header, kFeatureMagic, 8);
  const auto t = static_cast<std::uint32_t>(features.rows());
  const auto d = static_cast<std::uint32_t>(features.cols());
  std::memcpy(header + 8, &t, 4);
  std::memcpy(header + 12, &d, 4);
  out.write(header, sizeof header);
  std::vector<float> buf(static_cast<std::size_t>(features.size()));
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(features.data()[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw FeatureFileError("write failed for " + path.string());
}

}  // namespace dualmap
