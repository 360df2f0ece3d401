#include "csialign/harness.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace csialign {

std::string to_string(VariantKind kind) {
  switch (kind) {
    case VariantKind::kEgCsiNet:
      return "eg-csinet";
    case VariantKind::kEgWithoutMcd:
      return "eg-without-mcd";
    case VariantKind::kVanillaAe:
      return "vanilla-ae";
    case VariantKind::kTruncationBaseline:
      return "truncation-baseline";
  }
  return "unknown";
}

VariantKind variant_kind_from_string(const std::string& name) {
  for (const auto k : {VariantKind::kEgCsiNet, VariantKind::kEgWithoutMcd, VariantKind::kVanillaAe,
                       VariantKind::kTruncationBaseline}) {
    if (to_string(k) == name) return k;
  }
  throw Error("unknown pipeline variant '" + name + "'");
}

std::string to_string(RankCriterion c) {
  switch (c) {
    case RankCriterion::kMdl:
      return "mdl";
    case RankCriterion::kThreshold:
      return "threshold";
    case RankCriterion::kHybrid:
      return "hybrid";
  }
  return "unknown";
}

void PipelineVariant::validate() const {
  compressor.validate();
  codebook.validate();
  quantizer.validate();
  if (!(eta > 0 && eta <= 1)) throw Error("variant: eta must be in (0, 1]");
  if (r_max < 1) throw Error("variant: r_max must be >= 1");
  if (kind == VariantKind::kTruncationBaseline && compressor.variant != CompressorKind::kTruncationBaseline) {
    throw Error("variant: truncation-baseline pipelines need the truncation compressor");
  }
}

FrameLayout frame_layout(const PipelineVariant& variant, const ArrayGeometry& geom) {
  switch (variant.kind) {
    case VariantKind::kEgCsiNet:
    case VariantKind::kTruncationBaseline:
      return FrameLayout::clustered(geom, variant.codebook, variant.compressor.codeword_dim, variant.quantizer,
                                    variant.r_max);
    case VariantKind::kEgWithoutMcd:
      return FrameLayout::clustered(geom, variant.codebook, variant.compressor.codeword_dim, variant.quantizer, 1);
    case VariantKind::kVanillaAe:
      return FrameLayout::plain(variant.compressor.codeword_dim, variant.quantizer);
  }
  throw Error("unknown pipeline variant");
}

// ---------------------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

template <typename F>
auto run_stage(const char* name, StageRecord& rec, F&& fn) {
  const auto start = Clock::now();
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      rec.seconds[name] += std::chrono::duration<double>(Clock::now() - start).count();
    } else {
      auto out = fn();
      rec.seconds[name] += std::chrono::duration<double>(Clock::now() - start).count();
      return out;
    }
  } catch (const Error& e) {
    throw Error(std::string("stage '") + name + "': " + e.what());
  }
}

std::vector<Eigen::MatrixXcd> variant_inputs(const PipelineVariant& variant, const Aligner<double>& aligner,
                                            const Eigen::MatrixXcd& h) {
  std::vector<Eigen::MatrixXcd> out;
  if (variant.kind == VariantKind::kVanillaAe) {
    out.push_back(aligner.transform().forward(h));
  } else if (variant.kind == VariantKind::kEgWithoutMcd) {
    out.push_back(aligner.align(h).c_aln);
  } else {
    const auto rank = estimate_rank_hybrid<double>(h, variant.eta, variant.r_max);
    for (const auto& c : svd_decouple<double>(h, rank.r_final)) out.push_back(aligner.align(c.matrix()).c_aln);
  }
  return out;
}

}  // namespace

Pipeline::Pipeline(PipelineVariant variant, const ArrayGeometry& geom, std::shared_ptr<const Compressor> compressor)
    : variant_(std::move(variant)), geom_(geom), compressor_(std::move(compressor)), aligner_(geom, variant_.codebook) {
  geom_.validate();
  variant_.validate();
  if (!compressor_) throw Error("pipeline: missing compressor");
  const auto& cs = compressor_->spec();
  if (cs.n_t != geom_.n_t() || cs.n_c != geom_.n_c) throw Error("pipeline: compressor dims do not match geometry");
  if (cs.codeword_dim != variant_.compressor.codeword_dim) {
    throw Error("pipeline: compressor codeword length differs from the variant's");
  }
  layout_ = frame_layout(variant_, geom_);
}

std::vector<Eigen::MatrixXcd> Pipeline::compressor_inputs(const Eigen::MatrixXcd& h) const {
  return variant_inputs(variant_, aligner_, h);
}

PipelineResult Pipeline::run(const Eigen::MatrixXcd& h_input, const Eigen::MatrixXcd& h_reference) const {
  if (h_input.rows() != geom_.n_t() || h_input.cols() != geom_.n_c) throw Error("pipeline: input shape mismatch");
  PipelineResult res;
  auto& st = res.stages;

  // UE side.
  if (variant_.decouples()) {
    run_stage("decouple", st, [&] {
      res.rank = estimate_rank_hybrid<double>(h_input, variant_.eta, variant_.r_max);
      res.r_hat = res.rank.r_final;
      for (const auto& c : svd_decouple<double>(h_input, res.r_hat)) res.clusters.push_back(c.matrix());
    });
    st.decoupled = true;
  } else {
    res.r_hat = 1;
    res.rank = {1, 1, 1, variant_.r_max};
    if (variant_.kind == VariantKind::kEgWithoutMcd) res.clusters.push_back(h_input);
  }

  std::vector<Eigen::MatrixXcd> inputs;
  std::vector<AlignmentMetadata> metas;
  if (variant_.aligns()) {
    run_stage("align", st, [&] {
      for (const auto& c : res.clusters) {
        auto a = aligner_.align(c);
        inputs.push_back(std::move(a.c_aln));
        metas.push_back(a.meta);
      }
    });
    st.aligned = true;
  } else {
    run_stage("transform", st, [&] { inputs.push_back(aligner_.transform().forward(h_input)); });
    metas.emplace_back();
  }

  std::vector<ClusterRecord> records;
  std::vector<std::vector<std::uint32_t>> supports;
  run_stage("encode", st, [&] {
    for (std::size_t l = 0; l < inputs.size(); ++l) {
      Codeword cw = compressor_->encode(inputs[l]);
      records.push_back({metas[l], quantize_codeword(cw.values, variant_.quantizer)});
      res.side_info_bits += cw.support.size() * static_cast<std::size_t>(ceil_log2(
                                                    static_cast<std::uint64_t>(geom_.n_t() * geom_.n_c)));
      supports.push_back(std::move(cw.support));
    }
  });
  st.encoded = true;

  run_stage("frame", st, [&] {
    const auto frame = make_frame(std::move(records), layout_);
    res.bits = pack_frame(frame, layout_);
    res.total_bits = res.bits.size();
  });
  st.framed = true;

  // BS side.
  std::vector<Eigen::MatrixXcd> recovered;
  run_stage("parse", st, [&] { res.frame = parse_frame(res.bits, layout_); });
  run_stage("decode", st, [&] {
    for (std::size_t l = 0; l < res.frame.clusters.size(); ++l) {
      const auto& rec = res.frame.clusters[l];
      Codeword cw{dequantize_codeword(rec.levels, variant_.quantizer), supports[l]};
      const Eigen::MatrixXcd x_hat = compressor_->decode(cw);
      recovered.push_back(variant_.aligns() ? aligner_.unalign(x_hat, rec.meta) : aligner_.transform().inverse(x_hat));
    }
    res.h_hat = reconstruct_channel(recovered);
  });
  st.decoded = true;

  res.nmse = nmse(res.h_hat, h_reference);
  res.nmde = variant_.decouples() ? nmde(h_input, res.clusters) : Decibels{0.0};
  return res;
}

PipelineResult run_pipeline(const Pipeline& pipeline, const ChannelSample& sample) { return pipeline.run(sample.h); }

std::vector<Eigen::MatrixXcd> collect_compressor_inputs(const PipelineVariant& variant, const ArrayGeometry& geom,
                                                        const std::vector<ChannelSample>& samples) {
  const Aligner<double> aligner(geom, variant.codebook);
  std::vector<Eigen::MatrixXcd> out;
  for (const auto& s : samples) {
    auto inputs = variant_inputs(variant, aligner, s.h);
    for (auto& x : inputs) out.push_back(std::move(x));
  }
  return out;
}

TrainedVariant train_variant(const PipelineVariant& variant, const ArrayGeometry& geom,
                             const std::vector<ChannelSample>& samples, const TrainingConfig& training) {
  variant.validate();
  TrainedVariant out;
  out.variant = variant;
  if (variant.compressor.variant != CompressorKind::kReferenceMlp) {
    out.compressor = make_compressor(variant.compressor);
    return out;
  }
  const auto inputs = collect_compressor_inputs(variant, geom, samples);
  auto result = train_autoencoder(inputs, variant.compressor, variant.quantizer, training);
  out.loss_trace = std::move(result.loss_trace);
  out.compressor = std::make_shared<MlpCompressor>(variant.compressor, std::move(result.params));
  return out;
}

MetricReport evaluate(const Pipeline& pipeline, const std::vector<ChannelSample>& samples, bool with_ub_npae) {
  MetricReport rep;
  rep.variant = to_string(pipeline.variant().kind);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto r = pipeline.run(s.h);
    SampleMetrics m;
    m.index = i;
    m.env_id = s.env_id;
    m.r_hat = r.r_hat;
    m.bits = r.total_bits;
    m.nmse = r.nmse;
    m.nmde = r.nmde;
    if (with_ub_npae && s.paths && !r.clusters.empty()) {
      m.ub_npae = ub_npae(s.h, r.clusters, s.paths, pipeline.geometry(), PartitionSearch::kGreedy).value;
    }
    rep.samples.push_back(std::move(m));
  }
  return rep;
}

int matched_codeword_dim(VariantKind kind, double target_bits, const FrameLayout& eg_layout, int bits_per_element) {
  if (bits_per_element < 1) throw Error("matched_codeword_dim: invalid bits per element");
  double payload = target_bits;
  switch (kind) {
    case VariantKind::kVanillaAe:
      break;
    case VariantKind::kEgWithoutMcd:
      payload -= eg_layout.q_m();
      break;
    case VariantKind::kEgCsiNet:
    case VariantKind::kTruncationBaseline:
      return eg_layout.codeword_dim;
  }
  return std::max(1, static_cast<int>(std::lround(payload / bits_per_element)));
}

// ---------------------------------------------------------------------------

void BenchmarkConfig::validate() const {
  geometry.validate();
  if (train_envs.empty() || test_envs.empty()) throw Error("benchmark: train and test environment lists must be nonempty");
  if (train_samples_per_env == 0 || test_samples_per_env == 0) throw Error("benchmark: sample counts must be >= 1");
  if (variants.empty()) throw Error("benchmark: no variants");
  std::set<std::string> ids;
  for (const auto& e : train_envs) {
    e.validate();
    ids.insert(e.id);
  }
  for (const auto& e : test_envs) {
    e.validate();
    if (!allow_overlap && ids.count(e.id)) throw Error("benchmark: test environment '" + e.id + "' is also a training one");
  }
  codebook.validate();
  quantizer.validate();
  training.validate();
}

namespace {

std::vector<ChannelSample> generate(const std::vector<EnvironmentConfig>& envs, std::size_t per_env,
                                    const ArrayGeometry& geom) {
  std::vector<ChannelSample> out;
  for (const auto& e : envs) {
    auto s = sample_environment(e, per_env, geom);
    for (auto& x : s) out.push_back(std::move(x));
  }
  return out;
}

std::vector<ChannelSample> of_env(const std::vector<ChannelSample>& samples, const std::string& id) {
  std::vector<ChannelSample> out;
  for (const auto& s : samples) {
    if (s.env_id == id) out.push_back(s);
  }
  return out;
}

std::string num(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

nlohmann::json db_field(const Decibels& d) {
  return {{"linear", d.linear}, {"db", d.exact_zero() ? nlohmann::json(nullptr) : nlohmann::json(d.db())},
          {"exact_zero", d.exact_zero()}};
}

}  // namespace

const VariantOutcome& BenchmarkReport::outcome(VariantKind kind) const {
  for (const auto& v : variants) {
    if (v.kind == kind) return v;
  }
  throw Error("benchmark report: variant '" + to_string(kind) + "' was not run");
}

std::string BenchmarkReport::to_csv() const {
  std::ostringstream os;
  os << "variant,codeword_dim,mean_test_bits,mean_test_r_hat,train_nmse_db,test_nmse_db,train_nmse_linear,"
        "test_nmse_linear\n";
  for (const auto& v : variants) {
    os << to_string(v.kind) << ',' << v.codeword_dim << ',' << num(v.mean_test_bits) << ','
       << num(v.mean_test_r_hat) << ',' << format_db(v.train_nmse) << ',' << format_db(v.test_nmse) << ','
       << num(v.train_nmse.linear) << ',' << num(v.test_nmse.linear) << '\n';
  }
  return os.str();
}

std::string BenchmarkReport::w1_csv() const {
  std::ostringstream os;
  os << "features,env_a,env_b,w1\n";
  const auto emit = [&](const char* kind, const Eigen::MatrixXd& m) {
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index k = 0; k < m.cols(); ++k) {
        os << kind << ',' << env_labels[static_cast<std::size_t>(i)] << ',' << env_labels[static_cast<std::size_t>(k)]
           << ',' << num(m(i, k)) << '\n';
      }
    }
  };
  emit("raw", w1_raw);
  emit("aligned", w1_aligned);
  return os.str();
}

std::string BenchmarkReport::to_json() const {
  nlohmann::json j;
  auto vs = nlohmann::json::array();
  for (const auto& v : variants) {
    vs.push_back({{"variant", to_string(v.kind)},
                  {"codeword_dim", v.codeword_dim},
                  {"mean_test_bits", v.mean_test_bits},
                  {"mean_test_r_hat", v.mean_test_r_hat},
                  {"train_nmse", db_field(v.train_nmse)},
                  {"test_nmse", db_field(v.test_nmse)},
                  {"loss_trace", v.loss_trace}});
  }
  j["variants"] = std::move(vs);
  j["env_labels"] = env_labels;
  const auto mat = [](const Eigen::MatrixXd& m) {
    auto a = nlohmann::json::array();
    for (Index i = 0; i < m.rows(); ++i) {
      auto row = nlohmann::json::array();
      for (Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
      a.push_back(std::move(row));
    }
    return a;
  };
  j["w1_raw"] = mat(w1_raw);
  j["w1_aligned"] = mat(w1_aligned);
  return j.dump(2);
}

BenchmarkReport run_generalization_benchmark(const BenchmarkConfig& cfg) {
  cfg.validate();
  const auto& geom = cfg.geometry;
  const auto train = generate(cfg.train_envs, cfg.train_samples_per_env, geom);
  const auto test = generate(cfg.test_envs, cfg.test_samples_per_env, geom);

  PipelineVariant base;
  base.compressor.n_t = geom.n_t();
  base.compressor.n_c = geom.n_c;
  base.compressor.codeword_dim = cfg.eg_codeword_dim;
  base.compressor.hidden_dim = cfg.hidden_dim;
  base.compressor.input_scale = cfg.input_scale;
  base.compressor.seed = cfg.seed;
  base.codebook = cfg.codebook;
  base.quantizer = cfg.quantizer;
  base.eta = cfg.eta;
  base.r_max = cfg.r_max;

  // Mean EG frame length on the test set fixes the overhead every variant gets.
  PipelineVariant eg = base;
  const FrameLayout eg_layout = frame_layout(eg, geom);
  double target_bits = 0.0;
  for (const auto& s : test) {
    const int r = estimate_rank_hybrid<double>(s.h, cfg.eta, cfg.r_max).r_final;
    target_bits += static_cast<double>(eg_layout.bits_for(r));
  }
  target_bits /= static_cast<double>(test.size());

  BenchmarkReport rep;
  for (const auto kind : cfg.variants) {
    PipelineVariant v = base;
    v.kind = kind;
    v.compressor.codeword_dim = matched_codeword_dim(kind, target_bits, eg_layout, cfg.quantizer.bits_per_element());
    if (kind == VariantKind::kTruncationBaseline) {
      v.compressor.variant = CompressorKind::kTruncationBaseline;
      v.compressor.codeword_dim += v.compressor.codeword_dim % 2;
    }
    auto trained = train_variant(v, geom, train, cfg.training);
    const Pipeline pipeline(v, geom, trained.compressor);

    VariantOutcome out;
    out.kind = kind;
    out.codeword_dim = v.compressor.codeword_dim;
    out.loss_trace = std::move(trained.loss_trace);
    out.train_nmse = evaluate(pipeline, train).mean_nmse();
    out.test_report = evaluate(pipeline, test);
    out.test_nmse = out.test_report.mean_nmse();
    out.mean_test_bits = out.test_report.mean_bits();
    out.mean_test_r_hat = kind == VariantKind::kVanillaAe ? 0.0 : out.test_report.mean_r_hat();
    rep.variants.push_back(std::move(out));
  }

  // Distribution diagnostic over every environment.
  const Aligner<double> aligner(geom, cfg.codebook);
  std::vector<Eigen::MatrixXd> raw_features;
  std::vector<Eigen::MatrixXd> aligned_features;
  const auto add_env = [&](const EnvironmentConfig& e, const std::vector<ChannelSample>& pool) {
    const auto samples = of_env(pool, e.id);
    std::vector<Eigen::MatrixXcd> raw;
    std::vector<Eigen::MatrixXcd> aligned;
    for (const auto& s : samples) {
      raw.push_back(aligner.transform().forward(s.h));
      const auto lead = svd_decouple<double>(s.h, 1).front().matrix();
      aligned.push_back(normalize_sample<double>(aligner.align(lead).c_aln));
    }
    rep.env_labels.push_back(e.id);
    raw_features.push_back(feature_matrix(raw));
    aligned_features.push_back(feature_matrix(aligned));
  };
  for (const auto& e : cfg.train_envs) add_env(e, train);
  for (const auto& e : cfg.test_envs) add_env(e, test);
  const auto n_env = static_cast<Index>(rep.env_labels.size());
  rep.w1_raw = Eigen::MatrixXd::Zero(n_env, n_env);
  rep.w1_aligned = Eigen::MatrixXd::Zero(n_env, n_env);
  for (Index a = 0; a < n_env; ++a) {
    for (Index b = a + 1; b < n_env; ++b) {
      const auto ua = static_cast<std::size_t>(a);
      const auto ub = static_cast<std::size_t>(b);
      rep.w1_raw(a, b) = rep.w1_raw(b, a) =
          wasserstein1_sliced(raw_features[ua], raw_features[ub], cfg.w1_projections, cfg.seed);
      rep.w1_aligned(a, b) = rep.w1_aligned(b, a) =
          wasserstein1_sliced(aligned_features[ua], aligned_features[ub], cfg.w1_projections, cfg.seed);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------

int criterion_rank(const RankEstimate& est, RankCriterion c) {
  switch (c) {
    case RankCriterion::kMdl:
      return std::max(1, std::min(est.r_mdl, est.r_max));
    case RankCriterion::kThreshold:
      return std::max(1, std::min(est.r_threshold, est.r_max));
    case RankCriterion::kHybrid:
      return est.r_final;
  }
  throw Error("unknown rank criterion");
}

std::string NoiseSweepReport::to_csv() const {
  std::ostringstream os;
  os << "snr_db,criterion,mean_r_hat,mean_nmde_db,mean_nmse_db,mean_nmde_linear,mean_nmse_linear\n";
  for (const auto& p : points) {
    for (const auto& [c, st] : p.criteria) {
      os << num(p.snr_db) << ',' << to_string(c) << ',' << num(st.mean_r_hat) << ',' << format_db(st.mean_nmde) << ','
         << format_db(st.mean_nmse) << ',' << num(st.mean_nmde.linear) << ',' << num(st.mean_nmse.linear) << '\n';
    }
  }
  return os.str();
}

NoiseSweepReport run_noise_sweep(const NoiseSweepConfig& cfg) {
  if (cfg.snr_db.empty()) throw Error("noise sweep: empty SNR list");
  if (cfg.samples == 0) throw Error("noise sweep: no samples");
  const auto samples = sample_environment(cfg.env, cfg.samples, cfg.geometry);
  const std::array criteria{RankCriterion::kMdl, RankCriterion::kThreshold, RankCriterion::kHybrid};

  NoiseSweepReport rep;
  for (std::size_t k = 0; k < cfg.snr_db.size(); ++k) {
    NoiseSweepPoint point;
    point.snr_db = cfg.snr_db[k];
    std::map<RankCriterion, std::array<double, 3>> acc;  // r, nmde, nmse
    std::size_t mdl_active = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& h = samples[i].h;
      const std::uint64_t noise_seed = cfg.seed * 0x9E3779B97F4A7C15ull + i * 131 + k;
      const Eigen::MatrixXcd h_e = add_estimation_noise(h, cfg.snr_db[k], noise_seed);
      const auto svd = detail::thin_svd<double>(h_e);
      const Eigen::VectorXd sv = svd.singularValues();
      const auto est = combine_rank_estimates(estimate_rank_mdl(sv, h_e.rows(), h_e.cols()),
                                              estimate_rank_threshold(sv, cfg.eta), cfg.r_max);
      if (est.r_mdl <= est.r_threshold) ++mdl_active;
      for (const auto c : criteria) {
        const int r = criterion_rank(est, c);
        const Eigen::MatrixXcd trunc = svd.matrixU().leftCols(r) * sv.head(r).asDiagonal() *
                                       svd.matrixV().leftCols(r).adjoint();
        auto& a = acc[c];
        a[0] += r;
        a[1] += nmde_from_singular_values(sv, r).linear;
        a[2] += nmse(trunc, h).linear;
      }
    }
    const double n = static_cast<double>(samples.size());
    for (const auto c : criteria) {
      const auto& a = acc[c];
      point.criteria[c] = {a[0] / n, {a[1] / n}, {a[2] / n}};
    }
    point.mdl_active_fraction = static_cast<double>(mdl_active) / n;
    rep.points.push_back(std::move(point));
  }
  return rep;
}

// ---------------------------------------------------------------------------

std::string OverheadSweepReport::to_csv() const {
  std::ostringstream os;
  os << "codeword_dim,q_r,q_m,q_f,mean_r_hat,mean_bits,dimension_ratio,ratio_exceeds_mean_r_hat,"
        "vanilla_codeword_dim,without_mcd_codeword_dim\n";
  for (const auto& r : rows) {
    os << r.codeword_dim << ',' << r.report.q_r << ',' << r.report.q_m << ',' << r.report.q_f << ','
       << num(r.report.mean_r_hat) << ',' << num(r.report.mean_bits) << ',' << num(r.report.dimension_ratio) << ','
       << (r.report.ratio_exceeds_mean_r_hat ? "true" : "false") << ',' << r.vanilla_codeword_dim << ','
       << r.without_mcd_codeword_dim << '\n';
  }
  return os.str();
}

OverheadSweepReport run_overhead_sweep(const OverheadSweepConfig& cfg) {
  if (cfg.codeword_dims.empty()) throw Error("overhead sweep: no codeword lengths");
  const auto samples = sample_environment(cfg.env, cfg.samples, cfg.geometry);
  std::vector<int> r_hats;
  for (const auto& s : samples) r_hats.push_back(estimate_rank_hybrid<double>(s.h, cfg.eta, cfg.r_max).r_final);

  OverheadSweepReport rep;
  for (const int m : cfg.codeword_dims) {
    const auto layout = FrameLayout::clustered(cfg.geometry, cfg.codebook, m, cfg.quantizer, cfg.r_max);
    OverheadSweepRow row;
    row.codeword_dim = m;
    row.report = overhead_report(r_hats, layout);
    const int bpe = cfg.quantizer.bits_per_element();
    row.vanilla_codeword_dim = matched_codeword_dim(VariantKind::kVanillaAe, row.report.mean_bits, layout, bpe);
    row.without_mcd_codeword_dim = matched_codeword_dim(VariantKind::kEgWithoutMcd, row.report.mean_bits, layout, bpe);
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace csialign
