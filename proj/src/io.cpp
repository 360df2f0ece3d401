#include "csialign/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

namespace csialign {

namespace {

static_assert(std::endian::native == std::endian::little, "csialign file formats assume a little-endian host");

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void bytes(const char* p, std::size_t n) { buf_.append(p, n); }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > data_.size()) throw IoError(IoErrorCode::kTruncated, "truncated file");
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string take(std::size_t n) {
    if (pos_ + n > data_.size()) throw IoError(IoErrorCode::kTruncated, "truncated file");
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrorCode::kOpenFailed, "cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void dump(const std::filesystem::path& path, const std::string& data, std::ios::openmode mode) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw IoError(IoErrorCode::kOpenFailed, "cannot open '" + path.string() + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError(IoErrorCode::kOpenFailed, "write to '" + path.string() + "' failed");
}

constexpr double kDeg = kPi<double> / 180.0;

}  // namespace

void write_text(const std::filesystem::path& path, const std::string& text) { dump(path, text, std::ios::out); }

// ---------------------------------------------------------------------------

void write_csit(const std::filesystem::path& path, const ArrayGeometry& geom, const std::vector<ChannelSample>& samples) {
  geom.validate();
  if (geom.n_h > 0xFFFF || geom.n_v > 0xFFFF || geom.n_c > 0xFFFF) {
    throw IoError(IoErrorCode::kGeometryMismatch, "geometry does not fit the csit header");
  }
  bool with_paths = !samples.empty();
  for (const auto& s : samples) {
    if (s.h.rows() != geom.n_t() || s.h.cols() != geom.n_c) {
      throw IoError(IoErrorCode::kGeometryMismatch, "sample shape does not match the geometry");
    }
    with_paths = with_paths && s.paths.has_value();
  }

  Writer w;
  w.bytes("CSIT", 4);
  w.put<std::uint16_t>(kCsitVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(samples.size()));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(geom.n_h));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(geom.n_v));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(geom.n_c));
  w.put<std::uint8_t>(with_paths ? 1 : 0);
  for (const auto& s : samples) {
    for (Index i = 0; i < s.h.rows(); ++i) {
      for (Index k = 0; k < s.h.cols(); ++k) {
        w.put<double>(s.h(i, k).real());
        w.put<double>(s.h(i, k).imag());
      }
    }
    if (!with_paths) continue;
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.paths->size()));
    for (const auto& p : *s.paths) {
      w.put<std::uint32_t>(p.cluster_id);
      w.put<double>(p.gain.real());
      w.put<double>(p.gain.imag());
      w.put<double>(p.aaod_rad);
      w.put<double>(p.eaod_rad);
      w.put<double>(p.delay_s);
    }
  }
  dump(path, w.str(), std::ios::binary);
}

Dataset read_csit(const std::filesystem::path& path, double bandwidth_hz) {
  Reader r(slurp(path));
  std::string magic;
  try {
    magic = r.take(4);
  } catch (const IoError&) {
    throw IoError(IoErrorCode::kBadMagic, "not a csit file");
  }
  if (magic != "CSIT") throw IoError(IoErrorCode::kBadMagic, "not a csit file");
  const auto version = r.get<std::uint16_t>();
  if (version != kCsitVersion) {
    throw IoError(IoErrorCode::kBadVersion, "unsupported csit version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  Dataset ds;
  ds.geometry.n_h = r.get<std::uint16_t>();
  ds.geometry.n_v = r.get<std::uint16_t>();
  ds.geometry.n_c = r.get<std::uint16_t>();
  ds.geometry.bandwidth_hz = bandwidth_hz;
  const auto flags = r.get<std::uint8_t>();
  try {
    ds.geometry.validate();
  } catch (const Error& e) {
    throw IoError(IoErrorCode::kMalformed, std::string("bad csit geometry: ") + e.what());
  }
  if ((flags & ~1u) != 0) throw IoError(IoErrorCode::kMalformed, "unknown csit flags");

  const Index rows = ds.geometry.n_t();
  const Index cols = ds.geometry.n_c;
  ds.samples.resize(count);
  for (auto& s : ds.samples) {
    s.h.resize(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index k = 0; k < cols; ++k) {
        const double re = r.get<double>();
        const double im = r.get<double>();
        s.h(i, k) = {re, im};
      }
    }
    if (!(flags & 1u)) continue;
    const auto n_paths = r.get<std::uint32_t>();
    std::vector<PathComponent> paths(n_paths);
    for (auto& p : paths) {
      p.cluster_id = r.get<std::uint32_t>();
      const double gr = r.get<double>();
      const double gi = r.get<double>();
      p.gain = {gr, gi};
      p.aaod_rad = r.get<double>();
      p.eaod_rad = r.get<double>();
      p.delay_s = r.get<double>();
    }
    s.paths = std::move(paths);
  }
  if (!r.done()) throw IoError(IoErrorCode::kMalformed, "trailing bytes after last csit sample");
  return ds;
}

// ---------------------------------------------------------------------------

EnvironmentFile parse_environment_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw IoError(IoErrorCode::kMalformed, std::string("environment config: ") + e.what());
  }

  EnvironmentFile out;
  auto& e = out.env;
  auto& g = out.geometry;
  const auto get = [&tree](const char* key, auto fallback) {
    using T = decltype(fallback);
    return tree.get_optional<std::string>(key) ? tree.get<T>(key) : fallback;
  };
  try {
    e.id = get("id", e.id);
    e.seed = get("seed", e.seed);
    e.cluster_count_range.first = get("clusters_min", e.cluster_count_range.first);
    e.cluster_count_range.second = get("clusters_max", e.cluster_count_range.second);
    e.aaod_sector_rad.first = get("aaod_lo_deg", e.aaod_sector_rad.first / kDeg) * kDeg;
    e.aaod_sector_rad.second = get("aaod_hi_deg", e.aaod_sector_rad.second / kDeg) * kDeg;
    e.eaod_sector_rad.first = get("eaod_lo_deg", e.eaod_sector_rad.first / kDeg) * kDeg;
    e.eaod_sector_rad.second = get("eaod_hi_deg", e.eaod_sector_rad.second / kDeg) * kDeg;
    e.delay_range_s.first = get("delay_lo_s", e.delay_range_s.first);
    e.delay_range_s.second = get("delay_hi_s", e.delay_range_s.second);
    e.aod_spread_rad = get("aod_spread_deg", e.aod_spread_rad / kDeg) * kDeg;
    e.delay_spread_s = get("delay_spread_s", e.delay_spread_s);
    e.paths_per_cluster = get("paths_per_cluster", e.paths_per_cluster);
    e.power_decay_db_per_cluster = get("power_decay_db", e.power_decay_db_per_cluster);
    g.n_h = get("geometry.n_h", g.n_h);
    g.n_v = get("geometry.n_v", g.n_v);
    g.n_c = get("geometry.n_c", g.n_c);
    g.bandwidth_hz = get("geometry.bandwidth_hz", g.bandwidth_hz);
  } catch (const pt::ptree_bad_data& ex) {
    throw IoError(IoErrorCode::kMalformed, std::string("environment config: ") + ex.what());
  }
  e.validate();
  g.validate();
  return out;
}

EnvironmentFile read_environment_config(const std::filesystem::path& path) {
  return parse_environment_config(slurp(path));
}

std::string format_environment_config(const EnvironmentConfig& e, const ArrayGeometry& g) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "id = " << e.id << '\n'
     << "seed = " << e.seed << '\n'
     << "clusters_min = " << e.cluster_count_range.first << '\n'
     << "clusters_max = " << e.cluster_count_range.second << '\n'
     << "aaod_lo_deg = " << e.aaod_sector_rad.first / kDeg << '\n'
     << "aaod_hi_deg = " << e.aaod_sector_rad.second / kDeg << '\n'
     << "eaod_lo_deg = " << e.eaod_sector_rad.first / kDeg << '\n'
     << "eaod_hi_deg = " << e.eaod_sector_rad.second / kDeg << '\n'
     << "delay_lo_s = " << e.delay_range_s.first << '\n'
     << "delay_hi_s = " << e.delay_range_s.second << '\n'
     << "aod_spread_deg = " << e.aod_spread_rad / kDeg << '\n'
     << "delay_spread_s = " << e.delay_spread_s << '\n'
     << "paths_per_cluster = " << e.paths_per_cluster << '\n'
     << "power_decay_db = " << e.power_decay_db_per_cluster << '\n'
     << "\n[geometry]\n"
     << "n_h = " << g.n_h << '\n'
     << "n_v = " << g.n_v << '\n'
     << "n_c = " << g.n_c << '\n'
     << "bandwidth_hz = " << g.bandwidth_hz << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------

void write_model(const std::filesystem::path& path, const CompressorSpec& spec, const MlpParams& params) {
  Writer w;
  nlohmann::json manifest;
  manifest["format"] = "csialign-mlp";
  manifest["dtype"] = "f64le";
  manifest["spec"] = {{"n_t", spec.n_t},
                      {"n_c", spec.n_c},
                      {"codeword_dim", spec.codeword_dim},
                      {"hidden_dim", spec.hidden_dim},
                      {"variant", to_string(spec.variant)},
                      {"seed", spec.seed},
                      {"input_scale", spec.input_scale}};
  auto table = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, layer] : params.layers()) {
    for (Index i = 0; i < layer->weight.rows(); ++i) {
      for (Index j = 0; j < layer->weight.cols(); ++j) w.put<double>(layer->weight(i, j));
    }
    for (Index i = 0; i < layer->bias.size(); ++i) w.put<double>(layer->bias(i));
    table.push_back({{"name", name},
                     {"out", layer->weight.rows()},
                     {"in", layer->weight.cols()},
                     {"offset", offset},
                     {"count", layer->weight.size() + layer->bias.size()}});
    offset += static_cast<std::size_t>(layer->weight.size() + layer->bias.size());
  }
  manifest["layers"] = std::move(table);
  manifest["total"] = offset;
  dump(path, w.str(), std::ios::binary);
  dump(path.string() + ".json", manifest.dump(2) + "\n", std::ios::out);
}

StoredModel read_model(const std::filesystem::path& path) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(slurp(path.string() + ".json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoErrorCode::kMalformed, std::string("model manifest: ") + e.what());
  }
  StoredModel m;
  try {
    const auto& s = manifest.at("spec");
    m.spec.n_t = s.at("n_t").get<Index>();
    m.spec.n_c = s.at("n_c").get<Index>();
    m.spec.codeword_dim = s.at("codeword_dim").get<int>();
    m.spec.hidden_dim = s.at("hidden_dim").get<int>();
    m.spec.variant = compressor_kind_from_string(s.at("variant").get<std::string>());
    m.spec.seed = s.at("seed").get<std::uint64_t>();
    m.spec.input_scale = s.at("input_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoErrorCode::kMalformed, std::string("model manifest: ") + e.what());
  }
  m.spec.validate();
  m.params = initialize_params(m.spec);

  Reader r(slurp(path));
  for (auto& [name, layer] : m.params.layers()) {
    for (Index i = 0; i < layer->weight.rows(); ++i) {
      for (Index j = 0; j < layer->weight.cols(); ++j) layer->weight(i, j) = r.get<double>();
    }
    for (Index i = 0; i < layer->bias.size(); ++i) layer->bias(i) = r.get<double>();
  }
  if (!r.done()) throw IoError(IoErrorCode::kMalformed, "model record larger than its manifest");
  return m;
}

void write_loss_trace(const std::filesystem::path& path, const std::vector<double>& loss) {
  std::ostringstream os;
  os << std::setprecision(17) << "epoch,loss\n";
  for (std::size_t i = 0; i < loss.size(); ++i) os << (i + 1) << ',' << loss[i] << '\n';
  dump(path, os.str(), std::ios::out);
}

}  // namespace csialign
