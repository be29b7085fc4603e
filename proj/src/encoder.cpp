#include "smsat/encoder.hpp"

#include "smsat/parallel.hpp"
#include "smsat/split.hpp"
#include "smsat/text.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace smsat::encoder {

using nn::Index;
using nn::Tensor;

std::vector<Index> EncoderConfig::scaled_widths() const {
  std::vector<Index> w;
  for (auto c : widths) w.push_back(std::max<Index>(1, static_cast<Index>(std::llround(static_cast<double>(c) * width_scale))));
  return w;
}

void EncoderConfig::validate() const {
  if (widths.empty() || widths.size() != blocks.size())
    throw Error("encoder config: widths and blocks must be non-empty and of equal length");
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] < 1 || blocks[i] < 1) throw Error("encoder config: widths and block counts must be positive");
    if (i && widths[i] < widths[i - 1]) throw Error("encoder config: widths must be non-decreasing");
  }
  if (proj_dim < 2) throw Error("encoder config: projection dim must be >= 2");
  if (!(width_scale > 0.0)) throw Error("encoder config: width_scale must be positive");
  if (n_mels < 1 || frames < 1) throw Error("encoder config: input size must be positive");
}

nlohmann::json config_to_json(const EncoderConfig& c) {
  return {{"widths", c.widths}, {"blocks", c.blocks}, {"proj_dim", c.proj_dim},
          {"n_mels", c.n_mels}, {"frames", c.frames}, {"width_scale", c.width_scale}};
}

EncoderConfig config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.widths = j.value("widths", c.widths);
  c.blocks = j.value("blocks", c.blocks);
  c.proj_dim = j.value("proj_dim", c.proj_dim);
  c.n_mels = j.value("n_mels", c.n_mels);
  c.frames = j.value("frames", c.frames);
  c.width_scale = j.value("width_scale", c.width_scale);
  c.validate();
  return c;
}

Tensor ConvBn::forward(const Tensor& x, bool train) {
  return nn::batchnorm2d(nn::conv2d(x, w, spec), gamma, beta, bn, train);
}

namespace {

ConvBn make_conv_bn(Index in, Index out, Index k, Index stride, Index pad, const CounterRng& rng, const std::string& name) {
  ConvBn c;
  CounterRng r = rng.derive(name);
  c.w = nn::kaiming_uniform({out, in, k, k}, in * k * k, r);
  c.gamma = Tensor::full({out}, 1.0, true);
  c.beta = Tensor::zeros({out}, true);
  c.bn.running_mean = nn::Array::Zero(out);
  c.bn.running_var = nn::Array::Ones(out);
  c.spec = {stride, pad};
  return c;
}

void add_conv_bn(std::vector<nn::ParamRef>& out, const std::string& prefix, const ConvBn& c) {
  out.push_back({prefix + ".w", c.w});
  out.push_back({prefix + ".bn.gamma", c.gamma});
  out.push_back({prefix + ".bn.beta", c.beta});
}

void add_bn_buffers(std::vector<nn::BufferRef>& out, const std::string& prefix, ConvBn& c) {
  out.push_back({prefix + ".bn.running_mean", &c.bn.running_mean});
  out.push_back({prefix + ".bn.running_var", &c.bn.running_var});
}

std::string block_name(std::size_t stage, int block) {
  return "layer" + std::to_string(stage + 1) + "." + std::to_string(block);
}

}  // namespace

Encoder::Encoder(const EncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const CounterRng rng(seed);
  const auto widths = cfg_.scaled_widths();
  stem_ = make_conv_bn(1, widths[0], 7, 2, 3, rng, "stem");
  Index in = widths[0];
  for (std::size_t s = 0; s < widths.size(); ++s) {
    const Index out = widths[s];
    for (int b = 0; b < cfg_.blocks[s]; ++b) {
      const Index stride = (b == 0 && s > 0) ? 2 : 1;
      const std::string name = block_name(s, b);
      BasicBlock blk;
      blk.conv1 = make_conv_bn(in, out, 3, stride, 1, rng, name + ".conv1");
      blk.conv2 = make_conv_bn(out, out, 3, 1, 1, rng, name + ".conv2");
      blk.has_down = stride != 1 || in != out;
      if (blk.has_down) blk.down = make_conv_bn(in, out, 1, stride, 0, rng, name + ".down");
      blocks_.push_back(std::move(blk));
      in = out;
    }
  }
  CounterRng r = rng.derive("proj");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  proj_w_ = nn::uniform_init({cfg_.proj_dim, in}, bound, r);
  proj_b_ = nn::uniform_init({cfg_.proj_dim}, bound, r);
}

Tensor Encoder::forward(const Tensor& x, bool train) {
  if (x.ndim() != 4 || x.dim(1) != 1)
    throw ShapeError("encoder: expected input [N, 1, H, W], got " + nn::shape_str(x.shape()));
  Tensor h = nn::relu(stem_.forward(x, train));
  h = nn::max_pool2d(h, 3, 2, 1);
  for (auto& blk : blocks_) {
    Tensor y = nn::relu(blk.conv1.forward(h, train));
    y = blk.conv2.forward(y, train);
    const Tensor skip = blk.has_down ? blk.down.forward(h, train) : h;
    h = nn::relu(nn::add(y, skip));
  }
  return nn::linear(nn::global_avg_pool(h), proj_w_, proj_b_);
}

std::vector<nn::ParamRef> Encoder::parameters() const {
  std::vector<nn::ParamRef> out;
  add_conv_bn(out, "stem", stem_);
  std::size_t i = 0;
  for (std::size_t s = 0; s < cfg_.blocks.size(); ++s)
    for (int b = 0; b < cfg_.blocks[s]; ++b, ++i) {
      const auto& blk = blocks_[i];
      const std::string name = block_name(s, b);
      add_conv_bn(out, name + ".conv1", blk.conv1);
      add_conv_bn(out, name + ".conv2", blk.conv2);
      if (blk.has_down) add_conv_bn(out, name + ".down", blk.down);
    }
  out.push_back({"proj.w", proj_w_});
  out.push_back({"proj.b", proj_b_});
  return out;
}

std::vector<nn::BufferRef> Encoder::buffers() {
  std::vector<nn::BufferRef> out;
  add_bn_buffers(out, "stem", stem_);
  std::size_t i = 0;
  for (std::size_t s = 0; s < cfg_.blocks.size(); ++s)
    for (int b = 0; b < cfg_.blocks[s]; ++b, ++i) {
      auto& blk = blocks_[i];
      const std::string name = block_name(s, b);
      add_bn_buffers(out, name + ".conv1", blk.conv1);
      add_bn_buffers(out, name + ".conv2", blk.conv2);
      if (blk.has_down) add_bn_buffers(out, name + ".down", blk.down);
    }
  return out;
}

Encoder build_encoder(const EncoderConfig& cfg, std::uint64_t seed) { return Encoder(cfg, seed); }

Index count_parameters(const Encoder& m) { return m.parameter_count(); }

std::int64_t count_flops(const EncoderConfig& cfg) {
  cfg.validate();
  const auto widths = cfg.scaled_widths();
  std::int64_t flops = 0;
  Index h = cfg.n_mels, w = cfg.frames;
  auto conv = [&](Index in, Index out, Index k, Index stride, Index pad) {
    h = nn::conv_out_size(h, k, stride, pad);
    w = nn::conv_out_size(w, k, stride, pad);
    if (h < 1 || w < 1) throw ShapeError("count_flops: input too small for the configured network");
    flops += 2 * in * k * k * out * h * w;
  };
  conv(1, widths[0], 7, 2, 3);
  h = nn::conv_out_size(h, 3, 2, 1);
  w = nn::conv_out_size(w, 3, 2, 1);
  Index in = widths[0];
  for (std::size_t s = 0; s < widths.size(); ++s)
    for (int b = 0; b < cfg.blocks[s]; ++b) {
      const Index out = widths[s];
      const Index stride = (b == 0 && s > 0) ? 2 : 1;
      const Index h0 = h, w0 = w;
      conv(in, out, 3, stride, 1);
      const Index h1 = h, w1 = w;
      conv(out, out, 3, 1, 1);
      if (stride != 1 || in != out) {
        h = h0;
        w = w0;
        conv(in, out, 1, stride, 0);
        h = h1;
        w = w1;
      }
      in = out;
    }
  flops += 2 * in * cfg.proj_dim;
  return flops;
}

Tensor contrastive_loss(const Tensor& p1, const Tensor& p2) {
  if (p1.shape() != p2.shape() || p1.ndim() != 2)
    throw ShapeError("contrastive_loss: shape mismatch " + nn::shape_str(p1.shape()) + " vs " + nn::shape_str(p2.shape()));
  const Tensor d = nn::sub(p1, p2);
  return nn::scale(nn::sum(nn::mul(d, d)), 1.0 / static_cast<double>(p1.dim(0)));
}

Tensor uniformity_loss(const Tensor& p) {
  const Index n = p.dim(0);
  if (n < 2) return Tensor::scalar(0.0);
  Tensor acc;
  const Tensor eps = Tensor::scalar(1e-12);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const Tensor d = nn::sub(nn::slice_rows(p, i, 1), nn::slice_rows(p, j, 1));
      const Tensor term = nn::log(nn::add(nn::sum(nn::mul(d, d)), eps));
      acc = acc.defined() ? nn::add(acc, term) : term;
    }
  // log ||d|| = 0.5 log ||d||^2
  return nn::scale(acc, -0.5 / static_cast<double>(n * (n - 1) / 2));
}

double mean_cosine(const Tensor& p1, const Tensor& p2) {
  if (p1.shape() != p2.shape()) throw ShapeError("mean_cosine: shape mismatch");
  const auto a = p1.mat(), b = p2.mat();
  double acc = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    const double den = a.row(i).norm() * b.row(i).norm();
    acc += den > 0.0 ? a.row(i).dot(b.row(i)) / den : 0.0;
  }
  return acc / static_cast<double>(std::max<Index>(1, a.rows()));
}

Matrix fit_frames(const Matrix& grid, Index frames) {
  if (grid.size() == 0) throw Error("fit_frames: empty grid");
  Matrix out = Matrix::Constant(grid.rows(), frames, grid.minCoeff());
  if (grid.cols() >= frames) {
    out = grid.middleCols((grid.cols() - frames) / 2, frames);
  } else {
    out.middleCols((frames - grid.cols()) / 2, grid.cols()) = grid;
  }
  return out;
}

Tensor to_batch(const std::vector<Matrix>& grids) {
  if (grids.empty()) throw Error("to_batch: no inputs");
  const Index h = grids[0].rows(), w = grids[0].cols();
  nn::Array v(static_cast<Index>(grids.size()) * h * w);
  for (std::size_t n = 0; n < grids.size(); ++n) {
    if (grids[n].rows() != h || grids[n].cols() != w) throw ShapeError("to_batch: inconsistent grid sizes");
    Eigen::Map<RowMatrix>(v.data() + static_cast<Index>(n) * h * w, h, w) = grids[n];
  }
  return Tensor::from({static_cast<Index>(grids.size()), 1, h, w}, std::move(v));
}

namespace {

struct ViewMaker {
  const EncoderTrainConfig& cfg;
  dsp::MelFilterbank fb;

  Matrix operator()(const io::AudioClip& clip, std::uint64_t key) const {
    const io::AudioClip v = augment::random_variant(clip, cfg.aug, key);
    auto g = features::mel_spectrogram(v, cfg.mel, fb);
    g = augment::spec_mask(g, std::min<int>(cfg.aug.freq_mask_max, static_cast<int>(g.bins())),
                           std::min<int>(cfg.aug.time_mask_max, static_cast<int>(g.frames())),
                           CounterRng(key).derive("mask").key());
    return fit_frames(g.values, cfg.model.frames);
  }
};

double embedding_variance(const Tensor& p) {
  const auto m = p.mat();
  if (m.rows() < 2) return 0.0;
  const Eigen::RowVectorXd mu = m.colwise().mean();
  return (m.rowwise() - mu).array().square().colwise().sum().mean() / static_cast<double>(m.rows());
}

}  // namespace

EncoderRun train_encoder(const std::vector<io::AudioClip>& clips, const EncoderTrainConfig& cfg) {
  if (clips.size() < 2) throw Error("train_encoder: need at least 2 clips, got " + std::to_string(clips.size()));
  if (cfg.epochs < 0 || cfg.batch < 1) throw Error("train_encoder: epochs must be >= 0 and batch >= 1");
  if (cfg.model.n_mels != cfg.mel.n_mels)
    throw Error("train_encoder: model expects " + std::to_string(cfg.model.n_mels) + " mel bins, mel params give " +
                std::to_string(cfg.mel.n_mels));
  cfg.aug.validate();
  const int rate = clips[0].rate;
  for (const auto& c : clips)
    if (c.rate != rate) throw Error("train_encoder: clip " + c.id + " has rate " + std::to_string(c.rate) + ", expected " + std::to_string(rate));

  EncoderRun run;
  run.model = build_encoder(cfg.model, cfg.seed);
  const CounterRng root(cfg.seed);
  ViewMaker make_view{cfg, dsp::build_mel_filterbank(cfg.mel.n_mels, cfg.mel.n_fft, rate, cfg.mel.f_lo,
                                                     std::min(cfg.mel.f_hi, rate / 2.0))};

  std::vector<ClassLabel> labels;
  for (const auto& c : clips) labels.push_back(c.label);
  Split split = stratified_split(labels, cfg.held_out, root.derive("split").key());
  if (split.held_out.empty()) {
    run.warnings.push_back("held-out split is empty; validation metrics use the training clips");
    split.held_out = split.train;
  }
  for (auto i : split.held_out) run.held_out_ids.push_back(clips[i].id);

  // Held-out views are fixed for the whole run so epochs are comparable.
  const std::size_t n_val = split.held_out.size();
  const auto val_views = parallel_map<Matrix>(2 * n_val, cfg.jobs, [&](std::size_t i) {
    const auto& clip = clips[split.held_out[i % n_val]];
    return make_view(clip, root.derive({CounterRng::hash_string("val"), CounterRng::hash_string(clip.id), i / n_val}).key());
  });

  nn::Adam adam(run.model.parameters(), {cfg.lr});
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = split.train;
    CounterRng erng = root.derive({CounterRng::hash_string("epoch"), static_cast<std::uint64_t>(epoch)});
    shuffle(order, erng);
    EncoderEpoch rec;
    rec.epoch = epoch;
    double seen = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), order.size() - start);
      const auto views = parallel_map<Matrix>(2 * b, cfg.jobs, [&](std::size_t i) {
        const auto& clip = clips[order[start + i % b]];
        return make_view(clip, erng.derive({CounterRng::hash_string(clip.id), i / b}).key());
      });
      const Tensor p = run.model.forward(to_batch(views), true);
      const Index bi = static_cast<Index>(b);
      const Tensor p1 = nn::slice_rows(p, 0, bi), p2 = nn::slice_rows(p, bi, bi);
      Tensor loss = contrastive_loss(p1, p2);
      const double pair_loss = loss.item();
      if (cfg.uniformity) loss = nn::add(loss, nn::scale(uniformity_loss(p), cfg.uniformity_weight));
      loss.backward();
      adam.step();
      rec.train_loss += pair_loss * static_cast<double>(b);
      rec.train_cossim += mean_cosine(p1, p2) * static_cast<double>(b);
      rec.embed_var = embedding_variance(p);
      seen += static_cast<double>(b);
    }
    if (seen > 0.0) {
      rec.train_loss /= seen;
      rec.train_cossim /= seen;
    }
    for (std::size_t start = 0; start < n_val; start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), n_val - start);
      std::vector<Matrix> g1(val_views.begin() + static_cast<std::ptrdiff_t>(start),
                             val_views.begin() + static_cast<std::ptrdiff_t>(start + b));
      std::vector<Matrix> g2(val_views.begin() + static_cast<std::ptrdiff_t>(n_val + start),
                             val_views.begin() + static_cast<std::ptrdiff_t>(n_val + start + b));
      const Tensor q1 = run.model.forward(to_batch(g1), false).detach();
      const Tensor q2 = run.model.forward(to_batch(g2), false).detach();
      rec.val_loss += contrastive_loss(q1, q2).item() * static_cast<double>(b);
      rec.val_cossim += mean_cosine(q1, q2) * static_cast<double>(b);
    }
    rec.val_loss /= static_cast<double>(n_val);
    rec.val_cossim /= static_cast<double>(n_val);
    if (rec.embed_var < 1e-6)
      run.warnings.push_back("epoch " + std::to_string(epoch) + ": embedding variance " + text::fmt(rec.embed_var) +
                             " below 1e-6, representation may be collapsing");
    run.history.push_back(rec);
  }
  return run;
}

std::string history_to_csv(const std::vector<EncoderEpoch>& h) {
  text::CsvWriter csv({"epoch", "train_loss", "val_loss", "train_cossim", "val_cossim", "embed_var"});
  for (const auto& e : h)
    csv.row({std::to_string(e.epoch), text::fmt(e.train_loss), text::fmt(e.val_loss), text::fmt(e.train_cossim),
             text::fmt(e.val_cossim), text::fmt(e.embed_var)});
  return csv.str();
}

void save_encoder(const std::filesystem::path& file, Encoder& m, const features::MelParams& mel, std::uint64_t seed) {
  nlohmann::json header = {{"kind", "smsat-encoder"},
                           {"config", config_to_json(m.config())},
                           {"mel", features::mel_params_to_json(mel)},
                           {"seed", seed}};
  nn::save_checkpoint(file, nn::snapshot(m, std::move(header)));
}

LoadedEncoder load_encoder(const std::filesystem::path& file) {
  const nn::Checkpoint ck = nn::load_checkpoint(file);
  if (ck.header.value("kind", "") != "smsat-encoder") throw Error(file.string() + ": not an encoder checkpoint");
  LoadedEncoder out{Encoder(config_from_json(ck.header.at("config")), 0),
                    features::mel_params_from_json(ck.header.at("mel"))};
  nn::restore(out.model, ck);
  return out;
}

std::vector<Embedding> embed_corpus(Encoder& m, const features::MelParams& mel, const std::vector<io::AudioClip>& clips,
                                    int jobs) {
  if (mel.n_mels != m.config().n_mels)
    throw Error("embed_corpus: checkpoint expects " + std::to_string(m.config().n_mels) + " mel bins, features give " +
                std::to_string(mel.n_mels));
  return parallel_map<Embedding>(clips.size(), jobs, [&](std::size_t i) {
    const auto& clip = clips[i];
    const auto g = features::mel_spectrogram(clip, mel);
    const Tensor p = m.forward(to_batch({fit_frames(g.values, m.config().frames)}), false);
    return Embedding{clip.id, clip.label, Eigen::Map<const Vector>(p.value().data(), p.numel())};
  });
}

std::string embeddings_to_csv(const std::vector<Embedding>& e) {
  std::vector<std::string> header = {"id", "label"};
  const Index d = e.empty() ? 0 : e[0].v.size();
  for (Index k = 0; k < d; ++k) header.push_back("e" + std::to_string(k));
  text::CsvWriter csv(header);
  for (const auto& x : e) {
    if (x.v.size() != d) throw ShapeError("embeddings_to_csv: inconsistent embedding lengths");
    std::vector<std::string> cells = {x.id, std::string(label_name(x.label))};
    for (Index k = 0; k < d; ++k) cells.push_back(text::fmt(x.v(k)));
    csv.row(cells);
  }
  return csv.str();
}

std::vector<Embedding> read_embeddings_csv(const std::filesystem::path& file) {
  const auto t = text::read_csv(file);
  const int id_col = t.column("id"), label_col = t.column("label");
  if (id_col < 0 || label_col < 0) throw Error(file.string() + ": missing id/label columns");
  std::vector<int> cols;
  for (int k = 0;; ++k) {
    const int c = t.column("e" + std::to_string(k));
    if (c < 0) break;
    cols.push_back(c);
  }
  if (cols.empty()) throw Error(file.string() + ": no embedding columns");
  std::vector<Embedding> out;
  for (const auto& r : t.rows) {
    Embedding e;
    e.id = r[id_col];
    auto label = parse_label(r[label_col]);
    if (!label) throw Error(file.string() + ": unknown label '" + r[label_col] + "'");
    e.label = *label;
    e.v.resize(static_cast<Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const std::string& cell = r[cols[k]];
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), e.v(static_cast<Index>(k)));
      if (res.ec != std::errc()) throw Error(file.string() + ": bad number '" + cell + "' for " + e.id);
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace smsat::encoder
