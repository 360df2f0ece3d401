// csialign command-line driver.
//
// CSIALIGN_SEED, when set, replaces the default seed of every subcommand.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "csialign/harness.hpp"
#include "csialign/io.hpp"

namespace fs = std::filesystem;
using namespace csialign;

namespace {

std::uint64_t default_seed() {
  if (const char* s = std::getenv("CSIALIGN_SEED")) {
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      throw Error(std::string("CSIALIGN_SEED is not an unsigned integer: '") + s + "'");
    }
  }
  return 1;
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_text(out, text);
  }
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(6) << x;
  return os.str();
}

PipelineVariant make_variant(VariantKind kind, const ArrayGeometry& geom, int m, int hidden, int q_f, int q_p,
                             int oversampling, double eta, int r_max, std::uint64_t seed) {
  PipelineVariant v;
  v.kind = kind;
  v.compressor.n_t = geom.n_t();
  v.compressor.n_c = geom.n_c;
  v.compressor.codeword_dim = m;
  v.compressor.hidden_dim = hidden;
  v.compressor.seed = seed;
  if (kind == VariantKind::kTruncationBaseline) v.compressor.variant = CompressorKind::kTruncationBaseline;
  v.codebook = {oversampling, oversampling, oversampling, q_p};
  v.quantizer.q_f = q_f;
  v.eta = eta;
  v.r_max = r_max;
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cluster-aligned CSI feedback: channel generation, decoupling, alignment and compression"};
  app.require_subcommand(1);
  std::string stage = "startup";

  try {
    const std::uint64_t seed0 = default_seed();

    // gen
    auto* gen = app.add_subcommand("gen", "Generate a .csit dataset from an environment config");
    std::string gen_config, gen_out;
    std::size_t gen_samples = 1000;
    std::uint64_t gen_seed = 0;
    gen->add_option("--config", gen_config, "Environment config file")->required()->check(CLI::ExistingFile);
    gen->add_option("--out", gen_out, "Output .csit path")->required();
    gen->add_option("--samples", gen_samples, "Number of samples")->capture_default_str();
    gen->add_option("--seed", gen_seed, "Override the config seed");

    // decouple
    auto* dec = app.add_subcommand("decouple", "Estimate cluster counts and decouple every sample");
    std::string dec_in, dec_out;
    double dec_eta = kDefaultEta;
    int dec_rmax = kDefaultRMax;
    double dec_bw = ArrayGeometry{}.bandwidth_hz;
    dec->add_option("--in", dec_in, "Input .csit")->required()->check(CLI::ExistingFile);
    dec->add_option("--eta", dec_eta, "Energy threshold")->capture_default_str();
    dec->add_option("--rmax", dec_rmax, "Maximum cluster count")->capture_default_str();
    dec->add_option("--bandwidth", dec_bw, "Bandwidth in Hz")->capture_default_str();
    dec->add_option("--out", dec_out, "CSV output (default stdout)");

    // align
    auto* aln = app.add_subcommand("align", "Decouple and align every sample, printing alignment metadata");
    std::string aln_in, aln_out;
    double aln_eta = kDefaultEta;
    int aln_rmax = kDefaultRMax, aln_os = 2, aln_qp = 2;
    aln->add_option("--in", aln_in, "Input .csit")->required()->check(CLI::ExistingFile);
    aln->add_option("--eta", aln_eta, "Energy threshold")->capture_default_str();
    aln->add_option("--rmax", aln_rmax, "Maximum cluster count")->capture_default_str();
    aln->add_option("--oversampling", aln_os, "Codebook oversampling factor")->capture_default_str();
    aln->add_option("--qp", aln_qp, "Peak-phase bits")->capture_default_str();
    aln->add_option("--out", aln_out, "CSV output (default stdout)");

    // train
    auto* trn = app.add_subcommand("train", "Train a compressor for one pipeline variant");
    std::string trn_variant = "eg-csinet", trn_config, trn_in, trn_model = "model.bin";
    std::size_t trn_samples = 1000;
    int trn_m = 20, trn_hidden = 256, trn_epochs = 40, trn_batch = 64, trn_qf = 6, trn_qp = 2, trn_os = 2;
    int trn_rmax = kDefaultRMax;
    double trn_lr = 1e-3, trn_eta = kDefaultEta;
    trn->add_option("--variant", trn_variant, "eg-csinet | eg-without-mcd | vanilla-ae")->capture_default_str();
    auto* trn_cfg_opt = trn->add_option("--config", trn_config, "Environment config to sample training data from");
    auto* trn_in_opt = trn->add_option("--in", trn_in, "Training .csit instead of --config");
    trn_cfg_opt->excludes(trn_in_opt);
    trn->add_option("--samples", trn_samples, "Samples drawn from --config")->capture_default_str();
    trn->add_option("--m", trn_m, "Codeword length M")->capture_default_str();
    trn->add_option("--hidden", trn_hidden, "Hidden width")->capture_default_str();
    trn->add_option("--epochs", trn_epochs, "Epochs")->capture_default_str();
    trn->add_option("--batch", trn_batch, "Batch size")->capture_default_str();
    trn->add_option("--lr", trn_lr, "Adam learning rate")->capture_default_str();
    trn->add_option("--qf", trn_qf, "Codeword bits per element")->capture_default_str();
    trn->add_option("--qp", trn_qp, "Peak-phase bits")->capture_default_str();
    trn->add_option("--oversampling", trn_os, "Codebook oversampling factor")->capture_default_str();
    trn->add_option("--eta", trn_eta, "Energy threshold")->capture_default_str();
    trn->add_option("--rmax", trn_rmax, "Maximum cluster count")->capture_default_str();
    trn->add_option("--model", trn_model, "Output model path (manifest at <model>.json)")->capture_default_str();

    // eval
    auto* evl = app.add_subcommand("eval", "Run a variant end to end on a dataset");
    std::string evl_variant = "eg-csinet", evl_model, evl_in, evl_dir = ".";
    int evl_m = 20, evl_qf = 6, evl_qp = 2, evl_os = 2, evl_rmax = kDefaultRMax;
    double evl_eta = kDefaultEta;
    bool evl_npae = false;
    evl->add_option("--variant", evl_variant, "Pipeline variant")->capture_default_str();
    evl->add_option("--model", evl_model, "Trained model (not needed for truncation-baseline)");
    evl->add_option("--in", evl_in, "Input .csit")->required()->check(CLI::ExistingFile);
    evl->add_option("--m", evl_m, "Codeword length for truncation-baseline")->capture_default_str();
    evl->add_option("--qf", evl_qf, "Codeword bits per element")->capture_default_str();
    evl->add_option("--qp", evl_qp, "Peak-phase bits")->capture_default_str();
    evl->add_option("--oversampling", evl_os, "Codebook oversampling factor")->capture_default_str();
    evl->add_option("--eta", evl_eta, "Energy threshold")->capture_default_str();
    evl->add_option("--rmax", evl_rmax, "Maximum cluster count")->capture_default_str();
    evl->add_flag("--ub-npae", evl_npae, "Also compute UB-NPAE when path tables are present");
    evl->add_option("--report", evl_dir, "Report directory")->capture_default_str();

    // sweep
    auto* swp = app.add_subcommand("sweep", "Noise or overhead sweep");
    std::string swp_kind, swp_config, swp_out;
    std::size_t swp_samples = 200;
    swp->add_option("--kind", swp_kind, "noise | overhead")->required()->check(CLI::IsMember({"noise", "overhead"}));
    swp->add_option("--config", swp_config, "Environment config (default: built-in environment)");
    swp->add_option("--samples", swp_samples, "Samples")->capture_default_str();
    swp->add_option("--out", swp_out, "CSV output (default stdout)");

    // bench
    auto* bch = app.add_subcommand("bench", "Cross-environment generalization benchmark");
    std::vector<std::string> bch_train, bch_test;
    std::string bch_dir = "bench-report";
    std::size_t bch_ntrain = 1000, bch_ntest = 200;
    int bch_epochs = 40, bch_hidden = 256, bch_m = 20;
    bch->add_option("--train-config", bch_train, "Training environment configs (default: built-in west sector)");
    bch->add_option("--test-config", bch_test, "Test environment configs (default: built-in east sector)");
    bch->add_option("--train-samples", bch_ntrain, "Samples per training environment")->capture_default_str();
    bch->add_option("--test-samples", bch_ntest, "Samples per test environment")->capture_default_str();
    bch->add_option("--epochs", bch_epochs, "Training epochs")->capture_default_str();
    bch->add_option("--hidden", bch_hidden, "Hidden width")->capture_default_str();
    bch->add_option("--m", bch_m, "EG codeword length")->capture_default_str();
    bch->add_option("--out", bch_dir, "Report directory")->capture_default_str();

    // report
    auto* rpt = app.add_subcommand("report", "Summarize the reports in a directory");
    std::string rpt_dir;
    rpt->add_option("--dir", rpt_dir, "Report directory")->required()->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);

    if (*gen) {
      stage = "gen";
      auto file = read_environment_config(gen_config);
      if (gen->count("--seed")) file.env.seed = gen_seed;
      else if (std::getenv("CSIALIGN_SEED")) file.env.seed = seed0;
      const auto samples = sample_environment(file.env, gen_samples, file.geometry);
      write_csit(gen_out, file.geometry, samples);
      std::cerr << "wrote " << samples.size() << " samples of '" << file.env.id << "' to " << gen_out << '\n';
    } else if (*dec) {
      stage = "decouple";
      const auto ds = read_csit(dec_in, dec_bw);
      std::ostringstream os;
      os << "index,r_mdl,r_threshold,r_hat,nmde_db,concentration_lead\n";
      for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& h = ds.samples[i].h;
        const auto est = estimate_rank_hybrid<double>(h, dec_eta, dec_rmax);
        std::vector<Eigen::MatrixXcd> cl;
        for (const auto& c : svd_decouple<double>(h, est.r_final)) cl.push_back(c.matrix());
        os << i << ',' << est.r_mdl << ',' << est.r_threshold << ',' << est.r_final << ','
           << format_db(nmde(h, cl)) << ',' << fmt(concentration<double>(h)) << '\n';
      }
      emit(dec_out, os.str());
    } else if (*aln) {
      stage = "align";
      const auto ds = read_csit(aln_in);
      const CodebookConfig cb{aln_os, aln_os, aln_os, aln_qp};
      const Aligner<double> aligner(ds.geometry, cb);
      std::ostringstream os;
      os << "index,cluster,sigma,n1,n2,m,t\n";
      for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& h = ds.samples[i].h;
        const auto est = estimate_rank_hybrid<double>(h, aln_eta, aln_rmax);
        const auto clusters = svd_decouple<double>(h, est.r_final);
        for (std::size_t l = 0; l < clusters.size(); ++l) {
          const auto a = aligner.align(clusters[l].matrix());
          os << i << ',' << l << ',' << fmt(clusters[l].sigma) << ',' << a.meta.n1 << ',' << a.meta.n2 << ','
             << a.meta.m << ',' << a.meta.t << '\n';
        }
      }
      emit(aln_out, os.str());
    } else if (*trn) {
      stage = "train";
      std::vector<ChannelSample> samples;
      ArrayGeometry geom;
      if (!trn_in.empty()) {
        auto ds = read_csit(trn_in);
        geom = ds.geometry;
        samples = std::move(ds.samples);
      } else {
        EnvironmentFile file;
        if (!trn_config.empty()) file = read_environment_config(trn_config);
        file.env.seed = trn_config.empty() || std::getenv("CSIALIGN_SEED") ? seed0 : file.env.seed;
        geom = file.geometry;
        samples = sample_environment(file.env, trn_samples, geom);
      }
      const auto kind = variant_kind_from_string(trn_variant);
      if (kind == VariantKind::kTruncationBaseline) throw Error("truncation-baseline has nothing to train");
      const auto v = make_variant(kind, geom, trn_m, trn_hidden, trn_qf, trn_qp, trn_os, trn_eta, trn_rmax, seed0);
      const TrainingConfig tc{trn_lr, trn_batch, trn_epochs, seed0};
      const auto trained = train_variant(v, geom, samples, tc);
      const auto& mlp = dynamic_cast<const MlpCompressor&>(*trained.compressor);
      write_model(trn_model, mlp.spec(), mlp.params());
      write_loss_trace(trn_model + ".loss.csv", trained.loss_trace);
      std::cerr << "trained " << trn_variant << " on " << samples.size() << " samples, final loss "
                << fmt(trained.loss_trace.back()) << ", model " << trn_model << '\n';
    } else if (*evl) {
      stage = "eval";
      const auto ds = read_csit(evl_in);
      const auto kind = variant_kind_from_string(evl_variant);
      std::shared_ptr<const Compressor> comp;
      PipelineVariant v = make_variant(kind, ds.geometry, evl_m, 1, evl_qf, evl_qp, evl_os, evl_eta, evl_rmax, seed0);
      if (kind == VariantKind::kTruncationBaseline) {
        comp = make_compressor(v.compressor);
      } else {
        if (evl_model.empty()) throw Error("--model is required for " + evl_variant);
        auto stored = read_model(evl_model);
        v.compressor = stored.spec;
        comp = std::make_shared<MlpCompressor>(stored.spec, std::move(stored.params));
      }
      const Pipeline pipeline(v, ds.geometry, comp);
      const auto rep = evaluate(pipeline, ds.samples, evl_npae);
      fs::create_directories(evl_dir);
      write_text(fs::path(evl_dir) / (evl_variant + ".metrics.csv"), rep.to_csv());
      write_text(fs::path(evl_dir) / (evl_variant + ".metrics.json"), rep.to_json() + "\n");
      std::cout << evl_variant << ": mean NMSE " << format_db(rep.mean_nmse()) << " dB, mean NMDE "
                << format_db(rep.mean_nmde()) << " dB, mean bits " << fmt(rep.mean_bits()) << '\n';
    } else if (*swp) {
      stage = "sweep";
      EnvironmentFile file;
      if (!swp_config.empty()) file = read_environment_config(swp_config);
      if (swp_config.empty() || std::getenv("CSIALIGN_SEED")) file.env.seed = seed0;
      if (swp_kind == "noise") {
        NoiseSweepConfig cfg;
        cfg.geometry = file.geometry;
        cfg.env = file.env;
        cfg.samples = swp_samples;
        cfg.seed = seed0;
        emit(swp_out, run_noise_sweep(cfg).to_csv());
      } else {
        OverheadSweepConfig cfg;
        cfg.geometry = file.geometry;
        cfg.env = file.env;
        cfg.samples = swp_samples;
        emit(swp_out, run_overhead_sweep(cfg).to_csv());
      }
    } else if (*bch) {
      stage = "bench";
      BenchmarkConfig cfg;
      const auto load = [&](const std::vector<std::string>& files, bool train) {
        std::vector<EnvironmentConfig> envs;
        for (const auto& f : files) {
          auto file = read_environment_config(f);
          cfg.geometry = file.geometry;
          envs.push_back(file.env);
        }
        if (envs.empty()) {
          EnvironmentConfig e;
          e.id = train ? "west" : "east";
          e.seed = train ? seed0 : seed0 + 1;
          e.cluster_count_range = {2, 4};
          e.aaod_sector_rad = train ? std::pair{-60.0 * kPi<double> / 180, -10.0 * kPi<double> / 180}
                                    : std::pair{10.0 * kPi<double> / 180, 60.0 * kPi<double> / 180};
          envs.push_back(e);
        }
        return envs;
      };
      cfg.train_envs = load(bch_train, true);
      cfg.test_envs = load(bch_test, false);
      cfg.train_samples_per_env = bch_ntrain;
      cfg.test_samples_per_env = bch_ntest;
      cfg.training.epochs = bch_epochs;
      cfg.training.seed = seed0;
      cfg.hidden_dim = bch_hidden;
      cfg.eg_codeword_dim = bch_m;
      cfg.seed = seed0;
      const auto rep = run_generalization_benchmark(cfg);
      fs::create_directories(bch_dir);
      write_text(fs::path(bch_dir) / "generalization.csv", rep.to_csv());
      write_text(fs::path(bch_dir) / "wasserstein.csv", rep.w1_csv());
      write_text(fs::path(bch_dir) / "generalization.json", rep.to_json() + "\n");
      std::cout << rep.to_csv();
    } else if (*rpt) {
      stage = "report";
      for (const auto& entry : fs::directory_iterator(rpt_dir)) {
        const auto& p = entry.path();
        if (p.extension() != ".json") continue;
        std::ifstream in(p);
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception&) {
          continue;
        }
        std::cout << p.filename().string() << '\n';
        if (j.contains("aggregate")) {
          const auto& a = j["aggregate"];
          std::cout << "  samples " << a.value("count", 0);
          if (a.contains("mean_nmse")) {
            const auto& m = a["mean_nmse"];
            std::cout << ", mean NMSE " << (m["db"].is_null() ? std::string(kNegInfToken) : fmt(m["db"].get<double>()))
                      << " dB, mean bits " << fmt(a.value("mean_bits", 0.0));
          }
          std::cout << '\n';
        }
        if (j.contains("variants")) {
          for (const auto& v : j["variants"]) {
            const auto& t = v["test_nmse"];
            std::cout << "  " << v["variant"].get<std::string>() << ": M=" << v["codeword_dim"].get<int>()
                      << ", test NMSE "
                      << (t["db"].is_null() ? std::string(kNegInfToken) : fmt(t["db"].get<double>()))
                      << " dB, mean bits " << fmt(v["mean_test_bits"].get<double>()) << '\n';
          }
        }
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "csialign: " << stage << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
