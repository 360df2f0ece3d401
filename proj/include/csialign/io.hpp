#ifndef CSIALIGN_IO_HPP
#define CSIALIGN_IO_HPP

// File formats: the .csit channel dataset container, environment config files,
// trained compressor parameters and loss traces.
//
// .csit (little-endian):
//   "CSIT" | u16 version = 1 | u32 count | u16 n_h | u16 n_v | u16 n_c | u8 flags
//   per sample: N_T * N_C complex entries as (f64 re, f64 im), row-major
//   if flags bit 0: u32 path count, then per path
//     u32 cluster_id, f64 gain_re, f64 gain_im, f64 aaod, f64 eaod, f64 delay
//
// Environment configs are INI-style key = value files:
//   id = urban-west
//   seed = 7
//   clusters_min = 1
//   clusters_max = 4
//   aaod_lo_deg = -60          (angles in degrees)
//   aaod_hi_deg = -10
//   eaod_lo_deg = 60
//   eaod_hi_deg = 120
//   delay_lo_s = 0
//   delay_hi_s = 1.5e-6
//   aod_spread_deg = 2
//   delay_spread_s = 4.7e-9
//   paths_per_cluster = 20
//   power_decay_db = 3
//   [geometry]                 (optional section)
//   n_h = 8
//   n_v = 4
//   n_c = 32
//   bandwidth_hz = 10e6
// Missing keys keep their defaults.

#include <filesystem>
#include <string>
#include <vector>

#include "csialign/channel.hpp"
#include "csialign/codec.hpp"

namespace csialign {

enum class IoErrorCode {
  kOpenFailed,
  kBadMagic,
  kBadVersion,
  kTruncated,
  kGeometryMismatch,
  kMalformed,
};

class IoError : public Error {
 public:
  IoError(IoErrorCode code, const std::string& what) : Error(what), code_(code) {}
  IoErrorCode code() const { return code_; }

 private:
  IoErrorCode code_;
};

inline constexpr std::uint16_t kCsitVersion = 1;

struct Dataset {
  ArrayGeometry geometry;
  std::vector<ChannelSample> samples;
};

/// Writes samples of one geometry. Path tables are written when every sample
/// has one; otherwise none are written.
void write_csit(const std::filesystem::path& path, const ArrayGeometry& geom, const std::vector<ChannelSample>& samples);

/// Bandwidth is not stored in the container; it is taken from `bandwidth_hz`.
Dataset read_csit(const std::filesystem::path& path, double bandwidth_hz = ArrayGeometry{}.bandwidth_hz);

struct EnvironmentFile {
  EnvironmentConfig env;
  ArrayGeometry geometry;
};

EnvironmentFile parse_environment_config(const std::string& text);
EnvironmentFile read_environment_config(const std::filesystem::path& path);
std::string format_environment_config(const EnvironmentConfig& env, const ArrayGeometry& geom);

/// Parameters as a flat little-endian f64 record: for each layer in
/// MlpParams::layers() order, the weight (row-major, out x in) then the bias.
/// The JSON manifest at `<path>.json` records the spec and the layer table.
void write_model(const std::filesystem::path& path, const CompressorSpec& spec, const MlpParams& params);

struct StoredModel {
  CompressorSpec spec;
  MlpParams params;
};

StoredModel read_model(const std::filesystem::path& path);

/// "epoch,loss" rows, epochs counted from 1.
void write_loss_trace(const std::filesystem::path& path, const std::vector<double>& loss);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace csialign

#endif  // CSIALIGN_IO_HPP
