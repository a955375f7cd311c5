#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "swinseg3d/errors.hpp"
#include "swinseg3d/volume.hpp"

namespace swinseg3d {

static_assert(std::numeric_limits<float>::is_iec559);

std::string modality_name(Modality m) {
  switch (m) {
    case Modality::PET: return "PET";
    case Modality::CT: return "CT";
    case Modality::MASK: return "MASK";
  }
  return "?";
}

Modality parse_modality(const std::string& name) {
  if (name == "PET") return Modality::PET;
  if (name == "CT") return Modality::CT;
  if (name == "MASK") return Modality::MASK;
  throw ParseError(ParseErrorKind::BadHeader, "unknown modality '" + name + "'");
}

Volume::Volume(std::size_t d, std::size_t h, std::size_t w, Modality m, float fill)
    : depth(d), height(h), width(w), modality(m), data(d * h * w, fill) {}

std::string Volume::shape_str() const {
  return std::to_string(depth) + "x" + std::to_string(height) + "x" + std::to_string(width);
}

ChannelVolume::ChannelVolume(std::size_t c, std::size_t d, std::size_t h, std::size_t w, float fill)
    : channels(c), depth(d), height(h), width(w), data(c * d * h * w, fill) {}

std::string ChannelVolume::shape_str() const {
  return std::to_string(channels) + "x" + std::to_string(depth) + "x" + std::to_string(height) + "x" +
         std::to_string(width);
}

namespace {

constexpr std::size_t kMaxVoxels = std::size_t{1} << 34;

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

std::size_t parse_dim(const std::string& token) {
  if (token.empty() || token.find_first_not_of("0123456789") != std::string::npos) {
    throw ParseError(ParseErrorKind::BadHeader, "VVOL dimension '" + token + "' is not a non-negative integer");
  }
  if (token.size() > 12) {
    throw ParseError(ParseErrorKind::DimensionOverflow, "VVOL dimension '" + token + "' overflows");
  }
  return static_cast<std::size_t>(std::stoull(token));
}

}  // namespace

std::string serialize_volume(const Volume& v) {
  if (v.data.size() != v.voxels()) throw ContractError("volume data size does not match its shape");
  std::ostringstream header;
  header.precision(9);
  header << "VVOL1 " << modality_name(v.modality) << ' ' << v.depth << ' ' << v.height << ' ' << v.width
         << ' ' << v.spacing[0] << ' ' << v.spacing[1] << ' ' << v.spacing[2] << '\n';
  std::string out = header.str();
  const std::size_t offset = out.size();
  out.resize(offset + v.data.size() * 4);
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    const std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(v.data[i]));
    std::memcpy(out.data() + offset + i * 4, &bits, 4);
  }
  return out;
}

Volume parse_volume(const std::string& bytes) {
  if (bytes.compare(0, 6, "VVOL1 ") != 0) throw ParseError(ParseErrorKind::BadMagic, "not a VVOL1 file (bad magic)");
  const std::size_t eol = bytes.find('\n');
  if (eol == std::string::npos || eol > 512) {
    throw ParseError(ParseErrorKind::BadHeader, "VVOL header line not terminated");
  }
  std::istringstream header(bytes.substr(6, eol - 6));
  std::string modality, sd, sh, sw;
  float spacing[3];
  if (!(header >> modality >> sd >> sh >> sw >> spacing[0] >> spacing[1] >> spacing[2])) {
    throw ParseError(ParseErrorKind::BadHeader, "VVOL header needs modality, 3 dims and 3 spacings");
  }
  Volume v;
  v.modality = parse_modality(modality);
  v.depth = parse_dim(sd);
  v.height = parse_dim(sh);
  v.width = parse_dim(sw);
  v.spacing = {spacing[0], spacing[1], spacing[2]};
  if (v.depth == 0 || v.height == 0 || v.width == 0) {
    throw ParseError(ParseErrorKind::BadHeader, "VVOL dimensions must be positive");
  }
  if (v.depth > kMaxVoxels / v.height || v.depth * v.height > kMaxVoxels / v.width) {
    throw ParseError(ParseErrorKind::DimensionOverflow, "VVOL dimensions " + v.shape_str() + " overflow");
  }
  const std::size_t n = v.voxels();
  const std::size_t payload = bytes.size() - eol - 1;
  if (payload < n * 4) {
    throw ParseError(ParseErrorKind::Truncated, "VVOL payload truncated: header declares " + std::to_string(n) +
                                                    " floats, found " + std::to_string(payload / 4));
  }
  if (payload > n * 4) {
    throw ParseError(ParseErrorKind::TrailingData, "VVOL payload has " + std::to_string(payload - n * 4) +
                                                       " trailing bytes");
  }
  v.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, bytes.data() + eol + 1 + i * 4, 4);
    v.data[i] = std::bit_cast<float>(to_little(bits));
  }
  return v;
}

Volume load_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_volume(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(e.parse_kind(), path.string() + ": " + e.what());
  }
}

void save_volume(const Volume& volume, const std::filesystem::path& path) {
  const std::string bytes = serialize_volume(volume);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace swinseg3d
