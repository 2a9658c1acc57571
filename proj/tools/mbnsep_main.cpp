// Copyright 2026 The mbnsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Batch front end for the separation pipeline. Subcommands:
//   mix        render a manifest of synthetic two-channel mixtures
//   features   log-magnitude + cosIPD tensor from a 2-channel mixture
//   embed      oracle or file-based embeddings for a feature tensor
//   separate   cluster embeddings, build masks, resynthesize per speaker
//   eval       permutation-invariant SI-SDR report (+ mask metrics)
//   mbn        generic fit/transform on tensor files
//   viz        2-D m-vector coordinates as CSV
//
// MBNSEP_THREADS caps the worker count; outputs are identical at any cap.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "mbnsep/mbnsep.hpp"

namespace fs = std::filesystem;
using namespace mbnsep;

namespace {

struct CommonOpts {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
};

PipelineConfig resolve_config(const CommonOpts& common) {
  PipelineConfig cfg;
  if (!common.config_path.empty()) cfg = parse_config(read_file(common.config_path), common.config_path);
  if (common.seed_set) {
    cfg.seed = common.seed;
    cfg.mbn.seed = common.seed;
  }
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& common) {
  cmd->add_option("--config", common.config_path, "pipeline config file (key = value)");
  cmd->add_option("--seed", common.seed, "master seed override")
      ->each([&common](const std::string&) { common.seed_set = true; });
}

AudioBuffer read_wav_checked(const std::string& path, int expected_rate) {
  AudioBuffer audio = read_wav(path);
  require(audio.sample_rate == expected_rate, path, ": sample rate ", audio.sample_rate,
          " does not match the configured ", expected_rate,
          " Hz (resampling is out of scope)");
  return audio;
}

std::vector<double> read_mono(const std::string& path, int expected_rate) {
  const AudioBuffer audio = read_wav_checked(path, expected_rate);
  require(audio.num_channels() == 1, path, ": expected a mono file, got ",
          audio.num_channels(), " channels");
  return audio.channels[0];
}

FeatureTensor features_of_mixture(const AudioBuffer& mixture, const StftConfig& stft_cfg) {
  require(mixture.num_channels() == 2, "mixture must have 2 channels, got ",
          mixture.num_channels());
  const Spectrogram s1 = stft(mixture.channels[0], stft_cfg);
  const Spectrogram s2 = stft(mixture.channels[1], stft_cfg);
  return assemble_features(s1, s2);
}

IndicatorMatrix indicator_from_refs(const std::vector<std::string>& ref_paths,
                                    const StftConfig& stft_cfg, int expected_rate) {
  require(ref_paths.size() >= 2, "need at least 2 reference files, got ", ref_paths.size());
  std::vector<Eigen::MatrixXd> mags;
  for (const std::string& p : ref_paths)
    mags.push_back(magnitude(stft(read_mono(p, expected_rate), stft_cfg)));
  return indicator_matrix(mags);
}

Tensor labels_tensor(const std::vector<int32_t>& labels) {
  Tensor t;
  t.dims = {labels.size()};
  t.data.reserve(labels.size());
  for (int32_t l : labels) t.data.push_back(static_cast<float>(l));
  return t;
}

// --- subcommand bodies ------------------------------------------------------

int run_mix(const CommonOpts& common, const std::string& manifest_path,
            const std::string& out_dir) {
  const PipelineConfig cfg = resolve_config(common);
  std::vector<MixSpec> specs = parse_manifest(read_file(manifest_path), manifest_path);
  if (common.seed_set)
    for (MixSpec& s : specs) s.seed ^= common.seed;

  parallel_for(specs.size(), [&](size_t i) {
    const MixSpec& spec = specs[i];
    std::vector<std::vector<double>> waves;
    for (const std::string& src : spec.sources)
      waves.push_back(read_mono(src, cfg.stft.sample_rate));
    const Mixture mixture = mix(spec, waves, cfg.stft.sample_rate);

    const fs::path dir = fs::path(out_dir) / spec.id;
    AudioBuffer mix_buf;
    mix_buf.sample_rate = cfg.stft.sample_rate;
    mix_buf.channels = mixture.channels;
    write_wav((dir / "mix.wav").string(), mix_buf);
    for (size_t s = 0; s < mixture.images.size(); ++s) {
      AudioBuffer ref;
      ref.sample_rate = cfg.stft.sample_rate;
      ref.channels = {mixture.images[s][0]};  // channel-1 image, the eval reference
      write_wav((dir / ("ref" + std::to_string(s + 1) + ".wav")).string(), ref);
    }
  });
  std::cout << "mixed " << specs.size() << " scene(s) into " << out_dir << "\n";
  return 0;
}

int run_features(const CommonOpts& common, const std::string& in_wav,
                 const std::string& out_path) {
  const PipelineConfig cfg = resolve_config(common);
  const AudioBuffer mixture = read_wav_checked(in_wav, cfg.stft.sample_rate);
  const FeatureTensor ft = features_of_mixture(mixture, cfg.stft);
  save_tensor(out_path, features_to_tensor(ft));
  std::cout << "features: " << ft.frames() << " frames x " << ft.bins() << " bins -> "
            << out_path << "\n";
  return 0;
}

int run_embed(const CommonOpts& common, const std::string& features_path,
              const std::string& out_path, bool oracle,
              const std::vector<std::string>& refs, double sigma, bool sigma_set,
              const std::string& embeddings_in) {
  PipelineConfig cfg = resolve_config(common);
  if (oracle) cfg.embedder_kind = "oracle";
  if (!embeddings_in.empty()) cfg.embedder_kind = "file";
  if (sigma_set) cfg.embedder_sigma = sigma;
  cfg.validate();

  const FeatureTensor ft = features_from_tensor(load_tensor(features_path), features_path);
  EmbeddingMatrix emb;
  if (cfg.embedder_kind == "oracle") {
    const IndicatorMatrix truth = indicator_from_refs(refs, cfg.stft, cfg.stft.sample_rate);
    require(truth.rows() == static_cast<size_t>(ft.units()),
            "reference spectrograms cover ", truth.rows(),
            " units but the feature tensor has ", ft.units());
    const OracleEmbedder embedder(truth, cfg.embedder_sigma,
                                  static_cast<int>(cfg.embedding_dim), cfg.seed);
    emb = embedder.embed(ft);
  } else {
    const FileEmbedder embedder(embeddings_in);
    emb = embedder.embed(ft);
  }
  validate_embeddings(emb);
  save_embeddings(emb, out_path);
  std::cout << "embeddings: " << emb.rows() << " x " << emb.dim() << " -> " << out_path << "\n";
  return 0;
}

int run_separate(const CommonOpts& common, const std::string& in_wav,
                 const std::string& embeddings_path, const std::string& out_dir,
                 bool no_mbn, bool no_vad, int speakers_override) {
  PipelineConfig cfg = resolve_config(common);
  if (no_mbn) cfg.use_mbn = false;
  if (no_vad) cfg.vad = false;
  if (speakers_override > 0) {
    cfg.n_speakers = speakers_override;
    cfg.mbn.n_classes = static_cast<uint32_t>(speakers_override);
  }
  cfg.validate();

  const AudioBuffer mixture = read_wav_checked(in_wav, cfg.stft.sample_rate);
  const FeatureTensor ft = features_of_mixture(mixture, cfg.stft);
  const FileEmbedder embedder(embeddings_path);

  SeparateOptions opts;
  opts.use_mbn = cfg.use_mbn;
  opts.vad = cfg.vad;
  opts.vad_range_db = cfg.vad_range_db;
  opts.restarts = cfg.kmeans_restarts;
  opts.seed = cfg.seed;
  const SeparationResult res = separate(ft, embedder, cfg.mbn, cfg.n_speakers, opts);

  const Spectrogram mix_spec = stft(mixture.channels[0], cfg.stft);
  const auto waves = apply_masks_and_resynthesize(res.masks, mix_spec);
  const fs::path dir(out_dir);
  for (size_t o = 0; o < waves.size(); ++o) {
    AudioBuffer est;
    est.sample_rate = cfg.stft.sample_rate;
    est.channels = {waves[o]};
    write_wav((dir / ("est" + std::to_string(o + 1) + ".wav")).string(), est);
  }

  Tensor masks;
  masks.dims = {res.masks.speakers(), static_cast<uint64_t>(ft.frames()),
                static_cast<uint64_t>(ft.bins())};
  for (const Eigen::MatrixXd& m : res.masks.masks)
    for (Eigen::Index t = 0; t < m.rows(); ++t)
      for (Eigen::Index f = 0; f < m.cols(); ++f)
        masks.data.push_back(static_cast<float>(m(t, f)));
  save_tensor((dir / "masks.mbnt").string(), masks);
  save_tensor((dir / "mvectors.mbnt").string(), tensor_from_matrix(res.mvectors));
  save_tensor((dir / "labels.mbnt").string(), labels_tensor(res.labels));
  std::cout << "separated " << waves.size() << " speaker(s) into " << out_dir << "\n";
  return 0;
}

int run_eval(const CommonOpts& common, const std::string& mixture_path,
             const std::vector<std::string>& est_paths,
             const std::vector<std::string>& ref_paths, const std::string& masks_path,
             const std::string& out_csv, const std::string& row_id) {
  const PipelineConfig cfg = resolve_config(common);
  require(est_paths.size() == ref_paths.size(), "got ", est_paths.size(),
          " estimates for ", ref_paths.size(), " references");

  const AudioBuffer mix_audio = read_wav_checked(mixture_path, cfg.stft.sample_rate);
  const std::vector<double>& mixture = mix_audio.channels[0];
  std::vector<std::vector<double>> ests, refs;
  for (const std::string& p : est_paths) ests.push_back(read_mono(p, cfg.stft.sample_rate));
  for (const std::string& p : ref_paths) refs.push_back(read_mono(p, cfg.stft.sample_rate));
  const size_t len = mixture.size();
  for (auto* group : {&ests, &refs})
    for (auto& w : *group) {
      require(w.size() >= len * 9 / 10, "waveform length mismatch against the mixture");
      w.resize(len, 0.0);
    }

  EvalReport report = permutation_invariant_eval(ests, refs, mixture);
  if (!masks_path.empty()) {
    const Tensor mt = load_tensor(masks_path);
    require(mt.dims.size() == 3, masks_path, ": expected a rank-3 mask tensor, got rank ",
            mt.dims.size());
    const IndicatorMatrix truth = indicator_from_refs(ref_paths, cfg.stft, cfg.stft.sample_rate);
    const size_t units = mt.dims[1] * mt.dims[2];
    require(units == truth.rows(), masks_path, ": mask grid does not match the references");
    std::vector<int32_t> pred(units, -1);
    for (uint64_t o = 0; o < mt.dims[0]; ++o)
      for (size_t i = 0; i < units; ++i)
        if (mt.data[o * units + i] != 0.0f) pred[i] = static_cast<int32_t>(o);
    report.mask_accuracy = clustering_accuracy(pred, truth.labels,
                                               static_cast<int>(mt.dims[0]));
    report.nmi = nmi(pred, truth.labels);
  }

  std::cout << eval_report_text(row_id, report);
  if (!out_csv.empty()) atomic_write_file(out_csv, eval_report_csv({{row_id, report}}));
  return 0;
}

int run_mbn_fit(const CommonOpts& common, const std::string& in_path,
                const std::string& model_path) {
  const PipelineConfig cfg = resolve_config(common);
  const Eigen::MatrixXd data = matrix_from_tensor(load_tensor(in_path), in_path);
  const MbnModel model = fit(data, cfg.mbn);
  std::cout << "mbn: " << model.depth() << " hidden layer(s), k schedule";
  for (const MbnLayer& l : model.layers) std::cout << " " << l.k;
  std::cout << ", code dim " << model.layers.back().output_dim() << " -> "
            << cfg.mbn.output_dim << "\n";
  save_model(model, model_path);
  return 0;
}

int run_mbn_transform(const std::string& model_path, const std::string& in_path,
                      const std::string& out_path) {
  const MbnModel model = load_model(model_path);
  const Eigen::MatrixXd data = matrix_from_tensor(load_tensor(in_path), in_path);
  const Eigen::MatrixXd m = transform_batch(model, data);
  save_tensor(out_path, tensor_from_matrix(m));
  std::cout << "m-vectors: " << m.rows() << " x " << m.cols() << " -> " << out_path << "\n";
  return 0;
}

int run_viz(const std::string& mvectors_path, const std::string& labels_path,
            const std::string& out_csv) {
  Eigen::MatrixXd m = matrix_from_tensor(load_tensor(mvectors_path), mvectors_path);
  if (m.cols() > 2) {
    const PcaResult pca = pca_fit(m, 2);
    m = (m.rowwise() - pca.mean.transpose()) * pca.components.transpose();
  }
  require(m.cols() >= 2, mvectors_path, ": need at least 2-dimensional vectors");

  std::vector<int32_t> labels;
  if (!labels_path.empty()) {
    const Tensor lt = load_tensor(labels_path);
    require(lt.dims.size() == 1 && lt.dims[0] == static_cast<uint64_t>(m.rows()),
            labels_path, ": label count does not match the vectors");
    for (float v : lt.data) labels.push_back(static_cast<int32_t>(v));
  }

  std::string csv = labels.empty() ? "x,y\n" : "x,y,label\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    csv += detail::fixed6(m(i, 0)) + "," + detail::fixed6(m(i, 1));
    if (!labels.empty()) csv += "," + std::to_string(labels[static_cast<size_t>(i)]);
    csv += "\n";
  }
  atomic_write_file(out_csv, csv);
  std::cout << "wrote " << m.rows() << " coordinates to " << out_csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mbnsep: bootstrap-network speech separation toolkit"};
  app.require_subcommand(1);

  CommonOpts common;

  // mix
  auto* mix_cmd = app.add_subcommand("mix", "render a mixture manifest");
  std::string manifest_path, out_dir;
  add_common(mix_cmd, common);
  mix_cmd->add_option("--manifest", manifest_path, "manifest CSV")->required();
  mix_cmd->add_option("--out-dir", out_dir, "output directory")->required();

  // features
  auto* feat_cmd = app.add_subcommand("features", "extract the per-unit feature tensor");
  std::string in_wav, out_path;
  add_common(feat_cmd, common);
  feat_cmd->add_option("--in", in_wav, "2-channel mixture WAV")->required();
  feat_cmd->add_option("--out", out_path, "output tensor (.mbnt)")->required();

  // embed
  auto* embed_cmd = app.add_subcommand("embed", "produce embeddings for a feature tensor");
  std::string features_path, emb_out, embeddings_in;
  std::vector<std::string> refs;
  bool oracle = false;
  double sigma = 0.0;
  bool sigma_set = false;
  add_common(embed_cmd, common);
  embed_cmd->add_option("--features", features_path, "feature tensor")->required();
  embed_cmd->add_option("--out", emb_out, "output embeddings (.mbnt)")->required();
  embed_cmd->add_flag("--oracle", oracle, "use the oracle embedder");
  embed_cmd->add_option("--refs", refs, "per-source reference WAVs (oracle)")->delimiter(',');
  embed_cmd->add_option("--sigma", sigma, "oracle noise level")
      ->each([&sigma_set](const std::string&) { sigma_set = true; });
  embed_cmd->add_option("--embeddings", embeddings_in, "precomputed embeddings tensor");

  // separate
  auto* sep_cmd = app.add_subcommand("separate", "mask estimation and resynthesis");
  std::string sep_wav, sep_emb, sep_out;
  bool no_mbn = false, no_vad = false;
  int speakers_override = 0;
  add_common(sep_cmd, common);
  sep_cmd->add_option("--in", sep_wav, "2-channel mixture WAV")->required();
  sep_cmd->add_option("--embeddings", sep_emb, "embeddings tensor")->required();
  sep_cmd->add_option("--out-dir", sep_out, "output directory")->required();
  sep_cmd->add_flag("--no-mbn", no_mbn, "cluster raw embeddings (ablation)");
  sep_cmd->add_flag("--no-vad", no_vad, "keep near-silent units in the fit");
  sep_cmd->add_option("--speakers", speakers_override, "speaker count override");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "permutation-invariant SI-SDR report");
  std::string eval_mix, masks_path, eval_csv, row_id = "mix";
  std::vector<std::string> est_paths, ref_paths;
  add_common(eval_cmd, common);
  eval_cmd->add_option("--mixture", eval_mix, "mixture WAV")->required();
  eval_cmd->add_option("--est", est_paths, "estimated WAVs")->delimiter(',')->required();
  eval_cmd->add_option("--ref", ref_paths, "reference WAVs")->delimiter(',')->required();
  eval_cmd->add_option("--masks", masks_path, "predicted mask tensor (adds mask metrics)");
  eval_cmd->add_option("--out", eval_csv, "report CSV path");
  eval_cmd->add_option("--id", row_id, "row id for the report");

  // mbn fit|transform
  auto* mbn_cmd = app.add_subcommand("mbn", "generic fit/transform on tensor files");
  mbn_cmd->require_subcommand(1);
  auto* fit_cmd = mbn_cmd->add_subcommand("fit", "train a model on a rank-2 tensor");
  std::string fit_in, fit_model;
  add_common(fit_cmd, common);
  fit_cmd->add_option("--in", fit_in, "input tensor (n x d)")->required();
  fit_cmd->add_option("--model", fit_model, "output model (.mbnm)")->required();
  auto* tr_cmd = mbn_cmd->add_subcommand("transform", "apply a trained model");
  std::string tr_model, tr_in, tr_out;
  tr_cmd->add_option("--model", tr_model, "model file (.mbnm)")->required();
  tr_cmd->add_option("--in", tr_in, "input tensor (n x d)")->required();
  tr_cmd->add_option("--out", tr_out, "output tensor (n x output_dim)")->required();

  // viz
  auto* viz_cmd = app.add_subcommand("viz", "2-D m-vector coordinates as CSV");
  std::string viz_mv, viz_labels, viz_out;
  viz_cmd->add_option("--mvectors", viz_mv, "m-vector tensor")->required();
  viz_cmd->add_option("--labels", viz_labels, "label tensor (optional)");
  viz_cmd->add_option("--out", viz_out, "output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (mix_cmd->parsed()) return run_mix(common, manifest_path, out_dir);
    if (feat_cmd->parsed()) return run_features(common, in_wav, out_path);
    if (embed_cmd->parsed())
      return run_embed(common, features_path, emb_out, oracle, refs, sigma, sigma_set,
                       embeddings_in);
    if (sep_cmd->parsed())
      return run_separate(common, sep_wav, sep_emb, sep_out, no_mbn, no_vad,
                          speakers_override);
    if (eval_cmd->parsed())
      return run_eval(common, eval_mix, est_paths, ref_paths, masks_path, eval_csv, row_id);
    if (mbn_cmd->parsed()) {
      if (fit_cmd->parsed()) return run_mbn_fit(common, fit_in, fit_model);
      return run_mbn_transform(tr_model, tr_in, tr_out);
    }
    if (viz_cmd->parsed()) return run_viz(viz_mv, viz_labels, viz_out);
  } catch (const std::exception& e) {
    std::cerr << "mbnsep: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
