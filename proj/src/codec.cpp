#include "csialign/codec.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

#include "csialign/rng.hpp"

namespace csialign {

std::string to_string(CompressorKind kind) {
  switch (kind) {
    case CompressorKind::kReferenceMlp:
      return "reference-mlp";
    case CompressorKind::kTruncationBaseline:
      return "truncation-baseline";
    case CompressorKind::kIdentity:
      return "identity";
  }
  return "unknown";
}

CompressorKind compressor_kind_from_string(const std::string& name) {
  if (name == "reference-mlp") return CompressorKind::kReferenceMlp;
  if (name == "truncation-baseline") return CompressorKind::kTruncationBaseline;
  if (name == "identity") return CompressorKind::kIdentity;
  throw Error("unknown compressor variant '" + name + "'");
}

void CompressorSpec::validate() const {
  if (n_t < 1 || n_c < 1) throw Error("compressor: input dims must be >= 1");
  if (codeword_dim < 1 || codeword_dim > input_dim()) {
    throw Error("compressor: codeword_dim must be in [1, " + std::to_string(input_dim()) + "]");
  }
  if (variant == CompressorKind::kTruncationBaseline && codeword_dim % 2 != 0) {
    throw Error("compressor: truncation baseline needs an even codeword_dim");
  }
  if (variant == CompressorKind::kIdentity && codeword_dim != input_dim()) {
    throw Error("compressor: identity compressor needs codeword_dim = 2 N_T N_C");
  }
  if (hidden_dim < 1) throw Error("compressor: hidden_dim must be >= 1");
  if (!(input_scale > 0) || !std::isfinite(input_scale)) throw Error("compressor: input_scale must be positive");
}

void QuantizerSpec::validate() const {
  if (q_f < 1 || q_f > 32) throw Error("quantizer: q_f must be in [1, 32]");
  if (!(clip_lo < clip_hi)) throw Error("quantizer: empty clip range");
}

void TrainingConfig::validate() const {
  if (!(learning_rate > 0)) throw Error("training: learning_rate must be > 0");
  if (batch_size < 1) throw Error("training: batch_size must be >= 1");
  if (epochs < 1) throw Error("training: epochs must be >= 1");
}

// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, DenseLayer*>> MlpParams::layers() {
  return {{"enc_hidden", &enc_hidden},
          {"enc_out", &enc_out},
          {"dec_hidden", &dec_hidden},
          {"dec_refine", &dec_refine},
          {"dec_out", &dec_out}};
}

std::vector<std::pair<std::string, const DenseLayer*>> MlpParams::layers() const {
  return {{"enc_hidden", &enc_hidden},
          {"enc_out", &enc_out},
          {"dec_hidden", &dec_hidden},
          {"dec_refine", &dec_refine},
          {"dec_out", &dec_out}};
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, layer] : layers()) n += static_cast<std::size_t>(layer->weight.size() + layer->bias.size());
  return n;
}

namespace {

DenseLayer xavier_layer(Index in, Index out, std::uint64_t seed, std::uint64_t stream) {
  auto rng = detail::seeded_engine(seed, stream);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  DenseLayer layer;
  layer.weight.resize(out, in);
  for (Index j = 0; j < in; ++j) {
    for (Index i = 0; i < out; ++i) layer.weight(i, j) = dist(rng);
  }
  layer.bias = Eigen::VectorXd::Zero(out);
  return layer;
}

void check_params(const CompressorSpec& spec, const MlpParams& p) {
  const Index d = spec.input_dim();
  const Index h = spec.hidden_dim;
  const Index m = spec.codeword_dim;
  const auto ok = [](const DenseLayer& l, Index in, Index out) {
    return l.weight.rows() == out && l.weight.cols() == in && l.bias.size() == out;
  };
  if (!ok(p.enc_hidden, d, h) || !ok(p.enc_out, h, m) || !ok(p.dec_hidden, m, h) || !ok(p.dec_refine, h, h) ||
      !ok(p.dec_out, h, d)) {
    throw Error("mlp parameters do not match the compressor spec");
  }
}

// Column-batched activations of one forward pass.
struct Activations {
  Eigen::MatrixXd x;   // scaled input
  Eigen::MatrixXd a1;  // encoder hidden
  Eigen::MatrixXd c;   // codeword
  Eigen::MatrixXd cq;  // quantized codeword
  Eigen::MatrixXd a3;  // decoder hidden
  Eigen::MatrixXd a4;  // refinement
  Eigen::MatrixXd y;   // output, unscaled
};

Eigen::MatrixXd dense(const DenseLayer& l, const Eigen::MatrixXd& in) {
  Eigen::MatrixXd out = l.weight * in;
  out.colwise() += l.bias;
  return out;
}

Eigen::MatrixXd dense_tanh(const DenseLayer& l, const Eigen::MatrixXd& in) { return dense(l, in).array().tanh(); }

Eigen::MatrixXd quantize_columns(const Eigen::MatrixXd& c, const QuantizerSpec& q) {
  Eigen::MatrixXd out(c.rows(), c.cols());
  for (Index j = 0; j < c.cols(); ++j) out.col(j) = quantize_roundtrip(c.col(j), q);
  return out;
}

Eigen::MatrixXd decode_batch(const CompressorSpec& spec, const MlpParams& p, const Eigen::MatrixXd& cq,
                             Eigen::MatrixXd* a3, Eigen::MatrixXd* a4) {
  Eigen::MatrixXd h3 = dense_tanh(p.dec_hidden, cq);
  Eigen::MatrixXd h4 = dense_tanh(p.dec_refine, h3);
  Eigen::MatrixXd y = dense(p.dec_out, h4) / spec.input_scale;
  if (a3) *a3 = std::move(h3);
  if (a4) *a4 = std::move(h4);
  return y;
}

Activations forward_batch(const CompressorSpec& spec, const MlpParams& p, const QuantizerSpec& q,
                          const Eigen::MatrixXd& x) {
  Activations a;
  a.x = x * spec.input_scale;
  a.a1 = dense_tanh(p.enc_hidden, a.x);
  a.c = dense_tanh(p.enc_out, a.a1);
  a.cq = quantize_columns(a.c, q);
  a.y = decode_batch(spec, p, a.cq, &a.a3, &a.a4);
  return a;
}

struct AdamState {
  std::vector<Eigen::MatrixXd> m_w, v_w;
  std::vector<Eigen::VectorXd> m_b, v_b;
  long step = 0;
};

}  // namespace

MlpParams initialize_params(const CompressorSpec& spec) {
  spec.validate();
  const Index d = spec.input_dim();
  const Index h = spec.hidden_dim;
  const Index m = spec.codeword_dim;
  MlpParams p;
  p.enc_hidden = xavier_layer(d, h, spec.seed, 0);
  p.enc_out = xavier_layer(h, m, spec.seed, 1);
  p.dec_hidden = xavier_layer(m, h, spec.seed, 2);
  p.dec_refine = xavier_layer(h, h, spec.seed, 3);
  p.dec_out = xavier_layer(h, d, spec.seed, 4);
  return p;
}

Eigen::VectorXd flatten(const Eigen::MatrixXcd& x) {
  Eigen::VectorXd v(2 * x.size());
  Index k = 0;
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      v(k++) = x(i, j).real();
      v(k++) = x(i, j).imag();
    }
  }
  return v;
}

Eigen::MatrixXcd unflatten(const Eigen::VectorXd& v, Index rows, Index cols) {
  if (v.size() != 2 * rows * cols) throw Error("unflatten: dimension mismatch");
  Eigen::MatrixXcd x(rows, cols);
  Index k = 0;
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      x(i, j) = {v(k), v(k + 1)};
      k += 2;
    }
  }
  return x;
}

Eigen::VectorXd encoder_forward(const CompressorSpec& spec, const MlpParams& params, const Eigen::MatrixXcd& c_aln) {
  if (c_aln.rows() != spec.n_t || c_aln.cols() != spec.n_c) throw Error("encoder_forward: shape mismatch");
  check_params(spec, params);
  const Eigen::MatrixXd x = flatten(c_aln) * spec.input_scale;
  return dense_tanh(params.enc_out, dense_tanh(params.enc_hidden, x));
}

Eigen::MatrixXcd decoder_forward(const CompressorSpec& spec, const MlpParams& params, const Eigen::VectorXd& codeword) {
  if (codeword.size() != spec.codeword_dim) throw Error("decoder_forward: codeword dimension mismatch");
  check_params(spec, params);
  const Eigen::MatrixXd y = decode_batch(spec, params, codeword, nullptr, nullptr);
  return unflatten(y.col(0), spec.n_t, spec.n_c);
}

// ---------------------------------------------------------------------------

TruncatedCode truncation_baseline_encode(const Eigen::MatrixXcd& c_aln, int codeword_dim) {
  const Index n = c_aln.size();
  if (codeword_dim < 2 || codeword_dim % 2 != 0) throw Error("truncation baseline: M must be even and >= 2");
  if (codeword_dim > 2 * n) throw Error("truncation baseline: M exceeds 2 N_T N_C");
  const Index keep = codeword_dim / 2;
  const Index cols = c_aln.cols();

  std::vector<std::uint32_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0u);
  const auto mag = [&](std::uint32_t f) { return std::norm(c_aln(f / cols, f % cols)); };
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return mag(a) > mag(b); });
  order.resize(static_cast<std::size_t>(keep));
  std::sort(order.begin(), order.end());

  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  TruncatedCode code;
  code.values.resize(codeword_dim);
  for (Index k = 0; k < keep; ++k) {
    const std::uint32_t f = order[static_cast<std::size_t>(k)];
    const auto z = c_aln(f / cols, f % cols) * scale;
    code.values(2 * k) = z.real();
    code.values(2 * k + 1) = z.imag();
  }
  code.support = std::move(order);
  return code;
}

Eigen::MatrixXcd truncation_baseline_decode(const TruncatedCode& code, Index rows, Index cols) {
  if (code.values.size() != 2 * static_cast<Index>(code.support.size())) {
    throw Error("truncation baseline: codeword and support sizes disagree");
  }
  const double scale = std::sqrt(static_cast<double>(rows * cols));
  Eigen::MatrixXcd x = Eigen::MatrixXcd::Zero(rows, cols);
  for (std::size_t k = 0; k < code.support.size(); ++k) {
    const std::uint32_t f = code.support[k];
    if (f >= static_cast<std::uint64_t>(rows * cols)) throw Error("truncation baseline: support index out of range");
    const auto i = static_cast<Index>(k);
    x(f / cols, f % cols) = std::complex<double>(code.values(2 * i), code.values(2 * i + 1)) * scale;
  }
  return x;
}

// ---------------------------------------------------------------------------

MlpCompressor::MlpCompressor(CompressorSpec spec, MlpParams params) : spec_(spec), params_(std::move(params)) {
  spec_.validate();
  check_params(spec_, params_);
}

Codeword MlpCompressor::encode(const Eigen::MatrixXcd& x) const { return {encoder_forward(spec_, params_, x), {}}; }

Eigen::MatrixXcd MlpCompressor::decode(const Codeword& codeword) const {
  return decoder_forward(spec_, params_, codeword.values);
}

IdentityCompressor::IdentityCompressor(CompressorSpec spec) : spec_(spec) {
  spec_.variant = CompressorKind::kIdentity;
  spec_.validate();
}

Codeword IdentityCompressor::encode(const Eigen::MatrixXcd& x) const {
  if (x.rows() != spec_.n_t || x.cols() != spec_.n_c) throw Error("identity compressor: shape mismatch");
  return {flatten(x), {}};
}

Eigen::MatrixXcd IdentityCompressor::decode(const Codeword& codeword) const {
  return unflatten(codeword.values, spec_.n_t, spec_.n_c);
}

TruncationCompressor::TruncationCompressor(CompressorSpec spec) : spec_(spec) {
  spec_.variant = CompressorKind::kTruncationBaseline;
  spec_.validate();
}

Codeword TruncationCompressor::encode(const Eigen::MatrixXcd& x) const {
  if (x.rows() != spec_.n_t || x.cols() != spec_.n_c) throw Error("truncation compressor: shape mismatch");
  auto code = truncation_baseline_encode(x, spec_.codeword_dim);
  return {std::move(code.values), std::move(code.support)};
}

Eigen::MatrixXcd TruncationCompressor::decode(const Codeword& codeword) const {
  return truncation_baseline_decode({codeword.values, codeword.support}, spec_.n_t, spec_.n_c);
}

std::unique_ptr<Compressor> make_compressor(const CompressorSpec& spec, const MlpParams* params) {
  switch (spec.variant) {
    case CompressorKind::kReferenceMlp:
      if (!params) throw Error("reference-mlp compressor needs trained parameters");
      return std::make_unique<MlpCompressor>(spec, *params);
    case CompressorKind::kTruncationBaseline:
      return std::make_unique<TruncationCompressor>(spec);
    case CompressorKind::kIdentity:
      return std::make_unique<IdentityCompressor>(spec);
  }
  throw Error("unknown compressor variant");
}

// ---------------------------------------------------------------------------

std::vector<std::uint64_t> quantize_codeword(const Eigen::VectorXd& c, const QuantizerSpec& q) {
  q.validate();
  std::vector<std::uint64_t> out(static_cast<std::size_t>(c.size()));
  if (!q.enabled) {
    for (Index i = 0; i < c.size(); ++i) out[static_cast<std::size_t>(i)] = std::bit_cast<std::uint64_t>(c(i));
    return out;
  }
  const double step = q.step();
  const auto top = static_cast<double>(q.levels() - 1);
  for (Index i = 0; i < c.size(); ++i) {
    const double x = std::isnan(c(i)) ? 0.0 : c(i);
    const double level = std::clamp(std::floor((x - q.clip_lo) / step), 0.0, top);
    out[static_cast<std::size_t>(i)] = static_cast<std::uint64_t>(level);
  }
  return out;
}

Eigen::VectorXd dequantize_codeword(std::span<const std::uint64_t> levels, const QuantizerSpec& q) {
  q.validate();
  Eigen::VectorXd out(static_cast<Index>(levels.size()));
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!q.enabled) {
      out(static_cast<Index>(i)) = std::bit_cast<double>(levels[i]);
      continue;
    }
    if (levels[i] >= q.levels()) throw Error("dequantize: level out of range");
    out(static_cast<Index>(i)) = q.clip_lo + (static_cast<double>(levels[i]) + 0.5) * q.step();
  }
  return out;
}

Eigen::VectorXd quantize_roundtrip(const Eigen::VectorXd& c, const QuantizerSpec& q) {
  const auto levels = quantize_codeword(c, q);
  return dequantize_codeword(levels, q);
}

// ---------------------------------------------------------------------------

TrainingResult train_autoencoder(std::span<const Eigen::MatrixXcd> dataset, const CompressorSpec& spec,
                                 const QuantizerSpec& quant, const TrainingConfig& tcfg) {
  if (dataset.empty()) throw Error("train_autoencoder: empty dataset");
  spec.validate();
  quant.validate();
  tcfg.validate();
  if (spec.variant != CompressorKind::kReferenceMlp) throw Error("train_autoencoder: only reference-mlp is trainable");

  const Index d = spec.input_dim();
  const Index n = static_cast<Index>(dataset.size());
  Eigen::MatrixXd data(d, n);
  for (Index s = 0; s < n; ++s) {
    const auto& x = dataset[static_cast<std::size_t>(s)];
    if (x.rows() != spec.n_t || x.cols() != spec.n_c) throw Error("train_autoencoder: sample shape mismatch");
    data.col(s) = flatten(x);
  }

  TrainingResult result;
  result.params = initialize_params(spec);
  auto layers = result.params.layers();

  AdamState adam;
  for (const auto& [name, l] : layers) {
    adam.m_w.push_back(Eigen::MatrixXd::Zero(l->weight.rows(), l->weight.cols()));
    adam.v_w.push_back(Eigen::MatrixXd::Zero(l->weight.rows(), l->weight.cols()));
    adam.m_b.push_back(Eigen::VectorXd::Zero(l->bias.size()));
    adam.v_b.push_back(Eigen::VectorXd::Zero(l->bias.size()));
  }
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  const Index batch = std::min<Index>(tcfg.batch_size, n);
  const double inv_scale = 1.0 / spec.input_scale;

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    auto rng = detail::seeded_engine(tcfg.seed, static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng() % i);
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    for (Index start = 0; start < n; start += batch) {
      const Index b = std::min(batch, n - start);
      Eigen::MatrixXd x(d, b);
      for (Index k = 0; k < b; ++k) x.col(k) = data.col(order[static_cast<std::size_t>(start + k)]);

      const auto& p = result.params;
      const Activations a = forward_batch(spec, p, quant, x);
      const Eigen::MatrixXd err = a.y - x;
      epoch_loss += err.squaredNorm();

      // Backward pass of the batch-mean loss.
      const Eigen::MatrixXd g5 = err * (2.0 * inv_scale / static_cast<double>(b));
      Eigen::MatrixXd g4 = (p.dec_out.weight.transpose() * g5).array() * (1.0 - a.a4.array().square());
      Eigen::MatrixXd g3 = (p.dec_refine.weight.transpose() * g4).array() * (1.0 - a.a3.array().square());
      // Straight-through: d cq / d c = I.
      Eigen::MatrixXd g2 = (p.dec_hidden.weight.transpose() * g3).array() * (1.0 - a.c.array().square());
      Eigen::MatrixXd g1 = (p.enc_out.weight.transpose() * g2).array() * (1.0 - a.a1.array().square());

      const std::array<std::pair<const Eigen::MatrixXd*, const Eigen::MatrixXd*>, 5> grads{{
          {&g1, &a.x},
          {&g2, &a.a1},
          {&g3, &a.cq},
          {&g4, &a.a3},
          {&g5, &a.a4},
      }};

      ++adam.step;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam.step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam.step));
      const double lr = tcfg.learning_rate * std::sqrt(c2) / c1;
      for (std::size_t li = 0; li < layers.size(); ++li) {
        DenseLayer& layer = *layers[li].second;
        const Eigen::MatrixXd gw = *grads[li].first * grads[li].second->transpose();
        const Eigen::VectorXd gb = grads[li].first->rowwise().sum();
        adam.m_w[li] = kBeta1 * adam.m_w[li] + (1 - kBeta1) * gw;
        adam.v_w[li] = kBeta2 * adam.v_w[li] + (1 - kBeta2) * gw.cwiseAbs2();
        adam.m_b[li] = kBeta1 * adam.m_b[li] + (1 - kBeta1) * gb;
        adam.v_b[li] = kBeta2 * adam.v_b[li] + (1 - kBeta2) * gb.cwiseAbs2();
        layer.weight.array() -= lr * adam.m_w[li].array() / (adam.v_w[li].array().sqrt() + kEps);
        layer.bias.array() -= lr * adam.m_b[li].array() / (adam.v_b[li].array().sqrt() + kEps);
      }
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(n));
  }
  return result;
}

double mean_nmse_linear(std::span<const Eigen::MatrixXcd> dataset, const Compressor& compressor,
                        const QuantizerSpec& quant) {
  if (dataset.empty()) throw Error("mean_nmse_linear: empty dataset");
  double acc = 0.0;
  for (const auto& x : dataset) {
    Codeword cw = compressor.encode(x);
    cw.values = quantize_roundtrip(cw.values, quant);
    const double ref = x.squaredNorm();
    if (!(ref > 0)) throw Error("mean_nmse_linear: zero sample");
    acc += (compressor.decode(cw) - x).squaredNorm() / ref;
  }
  return acc / static_cast<double>(dataset.size());
}

// ---------------------------------------------------------------------------

void BitStream::put(std::uint64_t value, int n_bits) {
  if (n_bits < 0 || n_bits > 64) throw Error("bitstream: field width must be in [0, 64]");
  if (n_bits < 64 && (value >> n_bits) != 0) throw Error("bitstream: value does not fit its field");
  for (int b = n_bits - 1; b >= 0; --b) {
    if (n_bits_ % 8 == 0) bytes_.push_back(0);
    if ((value >> b) & 1u) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (n_bits_ % 8));
    ++n_bits_;
  }
}

std::uint64_t BitStream::get(std::size_t& cursor, int n_bits) const {
  if (n_bits < 0 || n_bits > 64) throw Error("bitstream: field width must be in [0, 64]");
  if (cursor + static_cast<std::size_t>(n_bits) > n_bits_) throw Error("frame underflow");
  std::uint64_t value = 0;
  for (int b = 0; b < n_bits; ++b, ++cursor) {
    const unsigned bit = (bytes_[cursor / 8] >> (7 - cursor % 8)) & 1u;
    value = (value << 1) | bit;
  }
  return value;
}

BitStream BitStream::from_bytes(std::vector<std::uint8_t> bytes, std::size_t n_bits) {
  if (bytes.size() != (n_bits + 7) / 8) throw Error("bitstream: byte count does not match bit count");
  BitStream s;
  s.bytes_ = std::move(bytes);
  s.n_bits_ = n_bits;
  if (n_bits % 8 != 0) s.bytes_.back() &= static_cast<std::uint8_t>(0xFFu << (8 - n_bits % 8));
  return s;
}

int ceil_log2(std::uint64_t n) {
  if (n == 0) throw Error("ceil_log2: zero");
  return n == 1 ? 0 : std::bit_width(n - 1);
}

FrameLayout FrameLayout::clustered(const ArrayGeometry& geom, const CodebookConfig& cb, int codeword_dim,
                                   const QuantizerSpec& q, int r_max) {
  geom.validate();
  cb.validate();
  q.validate();
  if (r_max < 1) throw Error("frame layout: r_max must be >= 1");
  FrameLayout l;
  l.has_header = true;
  l.r_max = r_max;
  l.q_p = cb.q_p;
  l.size_h = cb.o_h * geom.n_h;
  l.size_v = cb.o_v * geom.n_v;
  l.size_d = cb.o_d * geom.n_c;
  l.codeword_dim = codeword_dim;
  l.bits_per_element = q.bits_per_element();
  return l;
}

FrameLayout FrameLayout::plain(int codeword_dim, const QuantizerSpec& q) {
  q.validate();
  FrameLayout l;
  l.has_header = false;
  l.r_max = 1;
  l.codeword_dim = codeword_dim;
  l.bits_per_element = q.bits_per_element();
  return l;
}

namespace {

void check_record(const ClusterRecord& rec, const FrameLayout& layout) {
  if (static_cast<int>(rec.levels.size()) != layout.codeword_dim) throw Error("frame: codeword length mismatch");
  if (!layout.has_header) return;
  const auto& m = rec.meta;
  if (m.n1 < 0 || m.n1 >= layout.size_h || m.n2 < 0 || m.n2 >= layout.size_v || m.m < 0 || m.m >= layout.size_d ||
      m.t < 0 || m.t >= (1 << layout.q_p)) {
    throw Error("frame: alignment metadata out of range");
  }
}

}  // namespace

BitStream pack_frame(const FeedbackFrame& frame, const FrameLayout& layout) {
  if (frame.r_hat < 1) throw Error("frame: r_hat must be >= 1");
  if (frame.r_hat > layout.r_max) {
    throw Error("frame: r_hat=" + std::to_string(frame.r_hat) + " exceeds r_max=" + std::to_string(layout.r_max));
  }
  if (static_cast<int>(frame.clusters.size()) != frame.r_hat) throw Error("frame: cluster count disagrees with r_hat");

  BitStream bits;
  bits.put(static_cast<std::uint64_t>(frame.r_hat - 1), layout.q_r());
  for (const auto& rec : frame.clusters) {
    check_record(rec, layout);
    if (layout.has_header) {
      const auto& m = rec.meta;
      const std::uint64_t joint = (static_cast<std::uint64_t>(m.n1) * static_cast<std::uint64_t>(layout.size_v) +
                                   static_cast<std::uint64_t>(m.n2)) *
                                      static_cast<std::uint64_t>(layout.size_d) +
                                  static_cast<std::uint64_t>(m.m);
      bits.put(static_cast<std::uint64_t>(m.t), layout.q_p);
      bits.put(joint, layout.index_bits());
    }
    for (const auto level : rec.levels) bits.put(level, layout.bits_per_element);
  }
  return bits;
}

FeedbackFrame parse_frame(const BitStream& bits, const FrameLayout& layout) {
  std::size_t cursor = 0;
  FeedbackFrame frame;
  frame.r_hat = static_cast<int>(bits.get(cursor, layout.q_r())) + 1;
  if (frame.r_hat > layout.r_max) throw Error("frame: r_hat exceeds r_max");
  frame.clusters.resize(static_cast<std::size_t>(frame.r_hat));
  const auto sv = static_cast<std::uint64_t>(layout.size_v);
  const auto sd = static_cast<std::uint64_t>(layout.size_d);
  for (auto& rec : frame.clusters) {
    if (layout.has_header) {
      rec.meta.t = static_cast<int>(bits.get(cursor, layout.q_p));
      const std::uint64_t joint = bits.get(cursor, layout.index_bits());
      rec.meta.m = static_cast<int>(joint % sd);
      rec.meta.n2 = static_cast<int>((joint / sd) % sv);
      rec.meta.n1 = static_cast<int>(joint / sd / sv);
    }
    rec.levels.resize(static_cast<std::size_t>(layout.codeword_dim));
    for (auto& level : rec.levels) level = bits.get(cursor, layout.bits_per_element);
    check_record(rec, layout);
  }
  if (cursor != bits.size()) throw Error("frame: trailing bits after last cluster");
  frame.total_bits = cursor;
  return frame;
}

FeedbackFrame make_frame(std::vector<ClusterRecord> clusters, const FrameLayout& layout) {
  FeedbackFrame frame;
  frame.r_hat = static_cast<int>(clusters.size());
  frame.clusters = std::move(clusters);
  for (const auto& rec : frame.clusters) check_record(rec, layout);
  if (frame.r_hat < 1 || frame.r_hat > layout.r_max) throw Error("frame: r_hat outside [1, r_max]");
  frame.total_bits = layout.bits_for(frame.r_hat);
  return frame;
}

Eigen::MatrixXcd reconstruct_channel(std::span<const Eigen::MatrixXcd> recovered_clusters) {
  if (recovered_clusters.empty()) throw Error("reconstruct_channel: no recovered clusters");
  Eigen::MatrixXcd h = recovered_clusters.front();
  for (std::size_t l = 1; l < recovered_clusters.size(); ++l) {
    if (recovered_clusters[l].rows() != h.rows() || recovered_clusters[l].cols() != h.cols()) {
      throw Error("reconstruct_channel: shape mismatch");
    }
    h += recovered_clusters[l];
  }
  return h;
}

// ---------------------------------------------------------------------------

double compressed_dimension_ratio(int q_r, double mean_r_hat, int m2, int bits_per_element, int q_m) {
  if (m2 < 1 || bits_per_element < 1) throw Error("compressed_dimension_ratio: invalid codeword size");
  const double payload = static_cast<double>(m2) * bits_per_element;
  return q_r / payload + mean_r_hat * (1.0 + q_m / payload);
}

OverheadReport overhead_report(std::span<const int> r_hats, const FrameLayout& layout) {
  OverheadReport rep;
  rep.q_r = layout.q_r();
  rep.q_m = layout.q_m();
  rep.q_f = layout.q_f();
  double bits = 0.0;
  double r_sum = 0.0;
  for (const int r : r_hats) {
    if (r < 1 || r > layout.r_max) throw Error("overhead_report: r_hat outside [1, r_max]");
    rep.per_sample_bits.push_back(layout.bits_for(r));
    bits += static_cast<double>(rep.per_sample_bits.back());
    r_sum += r;
  }
  if (!r_hats.empty()) {
    rep.mean_bits = bits / static_cast<double>(r_hats.size());
    rep.mean_r_hat = r_sum / static_cast<double>(r_hats.size());
  }
  rep.dimension_ratio =
      compressed_dimension_ratio(rep.q_r, rep.mean_r_hat, layout.codeword_dim, layout.bits_per_element, rep.q_m);
  rep.ratio_exceeds_mean_r_hat = rep.dimension_ratio > rep.mean_r_hat;
  return rep;
}

}  // namespace csialign
