#include "smsat/cli.hpp"

#include "smsat/config.hpp"
#include "smsat/parallel.hpp"
#include "smsat/plots.hpp"
#include "smsat/stats.hpp"
#include "smsat/text.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <functional>

namespace smsat::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Files written by one command, listed in <dir>/artifacts.json.
class Artifacts {
 public:
  Artifacts(fs::path dir, std::string command) : dir_(std::move(dir)), command_(std::move(command)) {
    fs::create_directories(dir_);
  }

  const fs::path& dir() const { return dir_; }
  fs::path path(const std::string& rel) const { return dir_ / rel; }

  void text(const std::string& rel, std::string_view content) {
    text::write_text(path(rel), content);
    add(rel);
  }
  void json_file(const std::string& rel, const json& j) {
    text::write_json(path(rel), j);
    add(rel);
  }
  void add(const std::string& rel) { files_.push_back(rel); }

  void finish() {
    std::sort(files_.begin(), files_.end());
    files_.erase(std::unique(files_.begin(), files_.end()), files_.end());
    text::write_json(dir_ / "artifacts.json", {{"command", command_}, {"files", files_}});
  }

 private:
  fs::path dir_;
  std::string command_;
  std::vector<std::string> files_;
};

json effective_config(const RunConfig& c) {
  json j = config_to_json(c);
  j.erase("out");
  return j;
}

struct Context {
  RunConfig cfg;
  std::ostream& out;
  std::ostream& log;

  void info(const std::string& msg) const { log << "[smsat] " << msg << "\n"; }
  Artifacts artifacts(const std::string& command) const {
    Artifacts a(cfg.out / command, command);
    a.json_file("config.json", effective_config(cfg));
    return a;
  }
};

io::CorpusManifest open_corpus(const Context& ctx, const fs::path& input) {
  if (fs::is_directory(input)) {
    std::vector<std::string> warnings;
    auto m = io::build_manifest(input, ctx.cfg.class_dirs, &warnings);
    for (const auto& w : warnings) ctx.info("warning: " + w);
    return m;
  }
  if (!fs::exists(input)) throw Error("input does not exist: " + input.string());
  return io::load_manifest(input);
}

std::vector<io::AudioClip> load_clips(const Context& ctx, const io::CorpusManifest& m) {
  return parallel_map<io::AudioClip>(m.entries.size(), ctx.cfg.jobs, [&](std::size_t i) {
    try {
      return io::load_entry(m, m.entries[i]);
    } catch (const Error& e) {
      throw Error("clip " + m.entries[i].path + ": " + e.what());
    }
  });
}

// Runs fn per clip and tags failures with the clip id.
template <typename T, typename Fn>
std::vector<T> per_clip(const Context& ctx, const std::vector<io::AudioClip>& clips, Fn fn) {
  return parallel_map<T>(clips.size(), ctx.cfg.jobs, [&](std::size_t i) {
    try {
      return fn(clips[i]);
    } catch (const Error& e) {
      throw Error("clip " + clips[i].id + ": " + e.what());
    }
  });
}

void cmd_synth(const Context& ctx, int n, double snr_db, double noise_sigma) {
  io::SynthConfig sc = ctx.cfg.synth;
  if (n > 0) sc.n_per_class = n;
  if (!std::isnan(snr_db)) sc.snr_db = snr_db;
  if (!std::isnan(noise_sigma)) sc.noise_sigma = noise_sigma;
  Artifacts a = ctx.artifacts("synth");
  const auto m = io::synth_corpus(sc, ctx.cfg.stage_seed("synth"), a.path("corpus"), ctx.cfg.class_dirs);
  for (const auto& e : m.entries) a.add("corpus/" + e.path);
  io::save_manifest(m, a.path("manifest.json"));
  a.add("manifest.json");
  a.finish();
  ctx.info("synth: " + std::to_string(m.entries.size()) + " clips under " + a.path("corpus").string());
}

void cmd_validate(const Context& ctx, const fs::path& input, bool phase_search) {
  const auto clips = load_clips(ctx, open_corpus(ctx, input));
  validation::ValidateOptions opt = ctx.cfg.validation;
  opt.jobs = ctx.cfg.jobs;
  opt.phase_search = opt.phase_search || phase_search;
  const auto report = validation::validate_clips(clips, opt);
  Artifacts a = ctx.artifacts("validate");
  a.json_file("validation.json", validation::report_to_json(report));
  a.text("validation.csv", validation::report_to_csv(report));
  for (auto l : kAllLabels) {
    const auto it = std::find_if(clips.begin(), clips.end(), [&](const auto& c) { return c.label == l; });
    if (it == clips.end()) continue;
    a.text("overlay_" + std::string(label_code(l)) + ".svg", validation::overlay_svg(*it, opt.models[label_index(l)]));
  }
  a.finish();
  for (auto l : kAllLabels)
    if (const auto& s = report.per_class[label_index(l)])
      ctx.info("validate: " + std::string(label_code(l)) + " mean RMSE " + text::fmt_fixed(s->rmse_mean, 5) + " over " +
               std::to_string(s->n) + " clips");
  for (const auto& w : report.warnings) ctx.info("warning: " + w);
}

void cmd_augment(const Context& ctx, const fs::path& input) {
  const auto clips = load_clips(ctx, open_corpus(ctx, input));
  augment::AugmentConfig cfg = ctx.cfg.augment;
  cfg.seed = ctx.cfg.stage_seed("augment");
  const auto variants = per_clip<std::vector<io::AudioClip>>(
      ctx, clips, [&](const io::AudioClip& c) { return augment::augment_pipeline(c, cfg); });
  Artifacts a = ctx.artifacts("augment");
  io::CorpusManifest m;
  m.base = a.path("corpus");
  auto write = [&](const io::AudioClip& c) {
    // ids look like "<class dir>/<stem>[.aug<k>]"
    const std::string rel = ctx.cfg.class_dirs[label_index(c.label)] + "/" + fs::path(c.id).filename().string() + ".wav";
    io::save_wav(c, m.base / rel);
    m.entries.push_back({rel, c.label, c.duration_s(), c.rate});
    a.add("corpus/" + rel);
  };
  for (std::size_t i = 0; i < clips.size(); ++i) {
    write(clips[i]);
    for (const auto& v : variants[i]) write(v);
  }
  std::sort(m.entries.begin(), m.entries.end(), [](const auto& x, const auto& y) { return x.path < y.path; });
  m.recount();
  io::save_manifest(m, a.path("manifest.json"));
  a.add("manifest.json");
  a.finish();
  ctx.info("augment: " + std::to_string(clips.size()) + " originals + " +
           std::to_string(clips.size() * static_cast<std::size_t>(cfg.variants_per_clip)) + " variants");
}

void cmd_features(const Context& ctx, const fs::path& input) {
  const auto clips = load_clips(ctx, open_corpus(ctx, input));
  const auto opt = ctx.cfg.features;
  const auto rows = per_clip<features::FeatureRow>(ctx, clips, [&](const io::AudioClip& c) {
    return features::FeatureRow{c.id, c.label, features::extract_features(c, opt)};
  });
  Artifacts a = ctx.artifacts("features");
  a.text("features.csv", features::features_to_csv(rows));
  a.finish();
  ctx.info("features: " + std::to_string(rows.size()) + " rows x " + std::to_string(features::kFeatureDim) + " features");
}

void cmd_train_encoder(const Context& ctx, const fs::path& input, int epochs) {
  const auto clips = load_clips(ctx, open_corpus(ctx, input));
  encoder::EncoderTrainConfig cfg = ctx.cfg.encoder;
  if (epochs >= 0) cfg.epochs = epochs;
  cfg.seed = ctx.cfg.stage_seed("encoder");
  cfg.jobs = ctx.cfg.jobs;
  auto run = encoder::train_encoder(clips, cfg);
  for (const auto& w : run.warnings) ctx.info("warning: " + w);
  Artifacts a = ctx.artifacts("train-encoder");
  encoder::save_encoder(a.path("encoder.ckpt"), run.model, cfg.mel, cfg.seed);
  a.add("encoder.ckpt");
  const std::string hist = encoder::history_to_csv(run.history);
  a.text("history.csv", hist);
  if (!run.history.empty()) a.text("history.svg", plots::history_svg(text::read_csv(a.path("history.csv")), "encoder"));
  json summary = {{"parameters", encoder::count_parameters(run.model)},
                  {"flops", encoder::count_flops(cfg.model)},
                  {"flops_convention", "2 x multiply-accumulates of convolutions and the projection, one input of n_mels x frames"},
                  {"held_out_ids", run.held_out_ids},
                  {"warnings", run.warnings},
                  {"config", effective_config(ctx.cfg)["encoder"]}};
  if (!run.history.empty()) {
    const auto& last = run.history.back();
    summary["final"] = {{"train_loss", last.train_loss}, {"val_loss", last.val_loss},
                        {"train_cossim", last.train_cossim}, {"val_cossim", last.val_cossim}};
    ctx.info("train-encoder: epoch " + std::to_string(last.epoch) + " held-out cosine " + text::fmt_fixed(last.val_cossim, 4));
  }
  a.json_file("summary.json", summary);
  a.finish();
}

void cmd_embed(const Context& ctx, const fs::path& input, fs::path checkpoint) {
  if (checkpoint.empty()) checkpoint = ctx.cfg.out / "train-encoder" / "encoder.ckpt";
  auto loaded = encoder::load_encoder(checkpoint);
  if (loaded.mel.n_mels != ctx.cfg.features.mel.n_mels || loaded.mel.hop != ctx.cfg.features.mel.hop ||
      loaded.mel.win != ctx.cfg.features.mel.win || loaded.mel.n_fft != ctx.cfg.features.mel.n_fft)
    throw Error("embed: checkpoint mel parameters differ from the configured feature parameters");
  const auto clips = load_clips(ctx, open_corpus(ctx, input));
  const auto emb = encoder::embed_corpus(loaded.model, loaded.mel, clips, ctx.cfg.jobs);
  Artifacts a = ctx.artifacts("embed");
  a.text("embeddings.csv", encoder::embeddings_to_csv(emb));
  a.finish();
  ctx.info("embed: " + std::to_string(emb.size()) + " embeddings of length " + std::to_string(loaded.model.config().proj_dim));
}

void cmd_eval_embeddings(const Context& ctx, const fs::path& input, bool skip_tsne) {
  const auto emb = encoder::read_embeddings_csv(input);
  const auto geo = embed::class_geometry(emb);
  Artifacts a = ctx.artifacts("eval-embeddings");
  a.json_file("geometry.json", embed::geometry_to_json(geo));
  if (!skip_tsne) {
    embed::TsneConfig tc = ctx.cfg.tsne;
    tc.seed = ctx.cfg.stage_seed("tsne");
    const auto r = embed::tsne(embed::stack_rows(emb), tc);
    a.text("tsne.csv", embed::tsne_to_csv(emb, r.y));
    a.text("tsne.svg", embed::tsne_svg(emb, r.y));
    a.text("tsne_kl.svg", embed::kl_svg(r.kl));
    ctx.info("eval-embeddings: t-SNE KL " + text::fmt_fixed(r.kl.front(), 4) + " -> " + text::fmt_fixed(r.kl.back(), 4));
  }
  a.finish();
  ctx.info("eval-embeddings: SM-M separability " +
           text::fmt_fixed(geo.separability(label_index(ClassLabel::SpiritualMeditation), label_index(ClassLabel::Music)), 4));
}

void cmd_train_cam(const Context& ctx, const fs::path& input, int epochs) {
  const auto rows = features::read_features_csv(input);
  cam::CamConfig cfg = ctx.cfg.cam;
  if (epochs >= 0) cfg.epochs = epochs;
  cfg.seed = ctx.cfg.stage_seed("cam");
  auto run = cam::train_cam(rows, cfg, ctx.cfg.jobs);
  Artifacts a = ctx.artifacts("train-cam");
  cam::save_cam(a.path("cam.ckpt"), run.model);
  a.add("cam.ckpt");
  a.text("history.csv", cam::history_to_csv(run.history));
  if (!run.history.empty()) a.text("history.svg", plots::history_svg(text::read_csv(a.path("history.csv")), "cam"));
  a.json_file("report.json", {{"train", cam::report_to_json(run.train_report)},
                              {"test", cam::report_to_json(run.test_report)},
                              {"test_ids", run.test_ids},
                              {"parameters", run.model.parameter_count()},
                              {"config", cam::config_to_json(cfg)}});
  a.text("confusion.csv", cam::confusion_to_csv(run.test_report));
  a.finish();
  ctx.info("train-cam: held-out accuracy " + text::fmt_fixed(run.test_report.accuracy, 4) + " (" +
           std::to_string(run.test_ids.size()) + " examples)");
}

void cmd_evaluate(const Context& ctx, const fs::path& input, fs::path checkpoint) {
  if (checkpoint.empty()) checkpoint = ctx.cfg.out / "train-cam" / "cam.ckpt";
  const auto model = cam::load_cam(checkpoint);
  const auto rows = features::read_features_csv(input);
  const auto r = cam::evaluate(model, rows, ctx.cfg.jobs);
  Artifacts a = ctx.artifacts("evaluate");
  a.json_file("report.json", cam::report_to_json(r));
  a.text("confusion.csv", cam::confusion_to_csv(r));
  a.finish();
  ctx.info("evaluate: accuracy " + text::fmt_fixed(r.accuracy, 4) + " on " + std::to_string(rows.size()) + " examples");
}

void cmd_calmness(const Context& ctx, const fs::path& input) {
  const auto rows = features::read_features_csv(input);
  const auto r = stats::calmness_report(rows, ctx.cfg.jobs);
  Artifacts a = ctx.artifacts("calmness");
  a.json_file("calmness.json", stats::report_to_json(r));
  a.text("calmness.csv", stats::report_to_csv(r));
  a.finish();
  ctx.info("calmness: vote SM " + std::to_string(r.vote.tally[0]) + ", M " + std::to_string(r.vote.tally[1]) + ", NS " +
           std::to_string(r.vote.tally[2]) + " -> " + std::string(label_code(r.vote.winner)) + (r.vote.tie ? " (tie)" : ""));
}

void cmd_report(const Context& ctx, bool print_default, const std::vector<std::string>& plot_files) {
  if (print_default) {
    ctx.out << config_to_json(RunConfig{}).dump(2) << "\n";
    return;
  }
  Artifacts a = ctx.artifacts("report");
  auto emit = [&](const fs::path& src, const std::string& name) {
    const auto t = text::read_csv(src);
    const bool scatter = t.column("x") >= 0 && t.column("y") >= 0;
    const std::string title = src.parent_path().filename().string();
    a.text(name, scatter ? plots::scatter_table_svg(t, title) : plots::history_svg(t, title));
  };
  json summary = json::object();
  if (!plot_files.empty()) {
    for (const auto& f : plot_files) emit(f, fs::path(f).stem().string() + ".svg");
  } else {
    const fs::path out = ctx.cfg.out;
    if (fs::exists(out / "train-encoder/history.csv")) emit(out / "train-encoder/history.csv", "encoder_history.svg");
    if (fs::exists(out / "train-cam/history.csv")) emit(out / "train-cam/history.csv", "cam_history.svg");
    if (fs::exists(out / "eval-embeddings/tsne.csv")) emit(out / "eval-embeddings/tsne.csv", "tsne.svg");
    auto pick = [&](const fs::path& f, const std::string& key, const std::function<json(const json&)>& sel) {
      if (fs::exists(out / f)) summary[key] = sel(text::read_json(out / f));
    };
    pick("validate/validation.json", "validation", [](const json& j) { return j.value("per_class", json()); });
    pick("train-encoder/summary.json", "encoder", [](const json& j) { return j.value("final", json()); });
    pick("eval-embeddings/geometry.json", "embedding_geometry", [](const json& j) { return j.value("separability", json()); });
    pick("train-cam/report.json", "cam_test_accuracy", [](const json& j) { return j.at("test").at("accuracy"); });
    pick("evaluate/report.json", "evaluate_accuracy", [](const json& j) { return j.at("accuracy"); });
    pick("calmness/calmness.json", "calmness_vote", [](const json& j) { return j.at("vote"); });
    a.json_file("summary.json", summary);
  }
  a.finish();
  ctx.info("report: wrote " + a.dir().string());
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& log) {
  CLI::App app{"Acoustic time-series toolkit: synthesis, validation, augmentation, features, encoder, classifier and statistics."};
  app.name(args.empty() ? "smsat" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  int jobs = 1;
  auto* seed_opt = app.add_option("--seed", seed, "Global seed; every stage seed derives from it");
  auto* jobs_opt = app.add_option("--jobs", jobs, "Worker threads for per-clip work (1 = reference mode)")->check(CLI::PositiveNumber);
  app.add_option("--config", config_path, "JSON config overlaid on the defaults")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "Output directory (falls back to $SMSAT_OUT, then the config)");

  std::string input, checkpoint;
  int n = 0, epochs = -1;
  double snr = std::numeric_limits<double>::quiet_NaN(), noise = std::numeric_limits<double>::quiet_NaN();
  bool phase_search = false, skip_tsne = false, print_default = false;
  std::vector<std::string> plot_files;

  auto* synth = app.add_subcommand("synth", "Write a synthetic three-class corpus");
  synth->add_option("--n", n, "Clips per class")->check(CLI::PositiveNumber);
  synth->add_option("--snr", snr, "Signal-to-noise ratio in dB");
  synth->add_option("--noise-sigma", noise, "Absolute noise standard deviation");

  auto* validate = app.add_subcommand("validate", "Compare clips with their class tone model");
  validate->add_option("input", input, "Corpus root or manifest")->required();
  validate->add_flag("--phase-search", phase_search, "Fit the carrier phase per clip");

  auto* augment = app.add_subcommand("augment", "Write augmented variants of every clip");
  augment->add_option("input", input, "Corpus root or manifest")->required();

  auto* feats = app.add_subcommand("features", "Extract the 25-dimensional feature table");
  feats->add_option("input", input, "Corpus root or manifest")->required();

  auto* train_enc = app.add_subcommand("train-encoder", "Contrastive training of the spectrogram encoder");
  train_enc->add_option("input", input, "Corpus root or manifest")->required();
  train_enc->add_option("--epochs", epochs, "Override the configured epoch count")->check(CLI::NonNegativeNumber);

  auto* emb = app.add_subcommand("embed", "Embed every clip with a trained encoder");
  emb->add_option("input", input, "Corpus root or manifest")->required();
  emb->add_option("--checkpoint", checkpoint, "Encoder checkpoint (default <out>/train-encoder/encoder.ckpt)");

  auto* eval_emb = app.add_subcommand("eval-embeddings", "Class geometry and t-SNE of an embeddings table");
  eval_emb->add_option("input", input, "embeddings.csv")->required()->check(CLI::ExistingFile);
  eval_emb->add_flag("--no-tsne", skip_tsne, "Only compute the class geometry");

  auto* train_cam = app.add_subcommand("train-cam", "Train the BiLSTM classifier on a feature table");
  train_cam->add_option("input", input, "features.csv")->required()->check(CLI::ExistingFile);
  train_cam->add_option("--epochs", epochs, "Override the configured epoch count")->check(CLI::NonNegativeNumber);

  auto* evaluate = app.add_subcommand("evaluate", "Score a classifier checkpoint on a feature table");
  evaluate->add_option("input", input, "features.csv")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--checkpoint", checkpoint, "Classifier checkpoint (default <out>/train-cam/cam.ckpt)");

  auto* calm = app.add_subcommand("calmness", "ANOVA, pairwise tests and the calmest-class vote");
  calm->add_option("input", input, "features.csv")->required()->check(CLI::ExistingFile);

  auto* report = app.add_subcommand("report", "Plots and a summary of everything under the output directory");
  report->add_flag("--print-default-config", print_default, "Print the complete default config and exit");
  report->add_option("--plot", plot_files, "Plot these history or scatter CSV files instead")->check(CLI::ExistingFile);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    log << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (seed_opt->count()) cfg.seed = seed;
    if (jobs_opt->count()) cfg.jobs = jobs;
    if (!out_dir.empty()) {
      cfg.out = out_dir;
    } else if (const char* env = std::getenv("SMSAT_OUT"); env && *env) {
      cfg.out = env;
    }
    const Context ctx{cfg, out, log};

    if (*synth) cmd_synth(ctx, n, snr, noise);
    else if (*validate) cmd_validate(ctx, input, phase_search);
    else if (*augment) cmd_augment(ctx, input);
    else if (*feats) cmd_features(ctx, input);
    else if (*train_enc) cmd_train_encoder(ctx, input, epochs);
    else if (*emb) cmd_embed(ctx, input, checkpoint);
    else if (*eval_emb) cmd_eval_embeddings(ctx, input, skip_tsne);
    else if (*train_cam) cmd_train_cam(ctx, input, epochs);
    else if (*evaluate) cmd_evaluate(ctx, input, checkpoint);
    else if (*calm) cmd_calmness(ctx, input);
    else if (*report) cmd_report(ctx, print_default, plot_files);
    return 0;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace smsat::cli
