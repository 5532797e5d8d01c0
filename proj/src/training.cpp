#include "sparsepose/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "sparsepose/diff_geometry.hpp"
#include "sparsepose/errors.hpp"

namespace sparsepose {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("train config: " + what); };
  if (batch == 0) fail("batch must be positive");
  if (window == 0) fail("window must be positive");
  if (sample_stride == 0) fail("sample_stride must be positive");
  if (!(lr > 0) || !std::isfinite(lr)) fail("lr must be positive");
  if (!(decay_factor > 0) || decay_factor > 1) fail("decay_factor must lie in (0, 1]");
  if (decay_every == 0) fail("decay_every must be positive");
  if (weights.ori < 0 || weights.rot < 0 || weights.fk < 0) fail("loss weights must be non-negative");
}

KeyValues TrainConfig::to_kv() const {
  KeyValues kv;
  const auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  kv.set("train.batch", std::to_string(batch));
  kv.set("train.window", std::to_string(window));
  kv.set("train.lr", num(lr));
  kv.set("train.decay_factor", num(decay_factor));
  kv.set("train.decay_every", std::to_string(decay_every));
  kv.set("train.max_iters", std::to_string(max_iters));
  kv.set("train.seed", std::to_string(seed));
  kv.set("train.checkpoint_every", std::to_string(checkpoint_every));
  kv.set("train.sample_stride", std::to_string(sample_stride));
  kv.set("train.lambda_ori", num(weights.ori));
  kv.set("train.lambda_rot", num(weights.rot));
  kv.set("train.lambda_fk", num(weights.fk));
  kv.set("train.no_stabilizer", flags.no_stabilizer ? "1" : "0");
  kv.set("train.predict_pelvis", flags.predict_pelvis ? "1" : "0");
  kv.set("train.no_fk_loss", flags.no_fk_loss ? "1" : "0");
  return kv;
}

TrainConfig TrainConfig::from_kv(const KeyValues& kv) {
  TrainConfig c;
  auto count = [&](const char* key, std::uint64_t fallback) {
    const long long v = kv.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError(std::string("train config: negative ") + key);
    return static_cast<std::uint64_t>(v);
  };
  c.batch = count("train.batch", c.batch);
  c.window = count("train.window", c.window);
  c.lr = kv.get_double("train.lr", c.lr);
  c.decay_factor = kv.get_double("train.decay_factor", c.decay_factor);
  c.decay_every = count("train.decay_every", c.decay_every);
  c.max_iters = count("train.max_iters", c.max_iters);
  c.seed = count("train.seed", c.seed);
  c.checkpoint_every = count("train.checkpoint_every", c.checkpoint_every);
  c.sample_stride = count("train.sample_stride", c.sample_stride);
  c.weights.ori = kv.get_double("train.lambda_ori", c.weights.ori);
  c.weights.rot = kv.get_double("train.lambda_rot", c.weights.rot);
  c.weights.fk = kv.get_double("train.lambda_fk", c.weights.fk);
  c.flags.no_stabilizer = kv.get_bool("train.no_stabilizer", c.flags.no_stabilizer);
  c.flags.predict_pelvis = kv.get_bool("train.predict_pelvis", c.flags.predict_pelvis);
  c.flags.no_fk_loss = kv.get_bool("train.no_fk_loss", c.flags.no_fk_loss);
  c.validate();
  return c;
}

double learning_rate(const TrainConfig& cfg, std::uint64_t iteration) {
  return cfg.lr * std::pow(cfg.decay_factor, static_cast<double>(iteration / cfg.decay_every));
}

TrainingSet::TrainingSet(const std::vector<MotionClip>& clips, const Skeleton& s,
                         std::size_t window, std::size_t stride)
    : window_(window) {
  if (window == 0 || stride == 0) throw InvalidArgument("TrainingSet: window and stride must be positive");
  for (const auto& clip : clips) {
    if (clip.size() < window + 1) continue;
    ClipData d;
    const TrackerStream stream = extract_trackers(clip, s);
    d.features = encode_stream(stream);
    const std::size_t n = clip.size();
    d.global6d.resize(n);
    d.local6d.resize(n);
    d.head_orient.resize(n);
    d.rel_pos.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
      const PoseOutput pose = to_pose(clip.frames[t]);
      const Rotation6D g = matrix_to_6d(pose.global_orient);
      for (std::size_t k = 0; k < 6; ++k) d.global6d[t][k] = static_cast<Real>(g.r[k]);
      for (std::size_t j = 0; j < kNumLocal; ++j) {
        const Rotation6D l = matrix_to_6d(pose.local_rot[j]);
        for (std::size_t k = 0; k < 6; ++k) d.local6d[t][6 * j + k] = static_cast<Real>(l.r[k]);
      }
      const TrackerFrame& head = stream.frames[t][0];
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
          d.head_orient[t][static_cast<std::size_t>(3 * r + c)] = static_cast<Real>(head.orient.m(r, c));
      const JointState st = forward_kinematics(s, pose);
      for (std::size_t j = 0; j < kNumJoints; ++j)
        for (int k = 0; k < 3; ++k)
          d.rel_pos[t][3 * j + static_cast<std::size_t>(k)] = static_cast<Real>(st.pos[j][k] - head.pos[k]);
    }
    const std::size_t idx = clips_.size();
    clips_.push_back(std::move(d));
    for (std::size_t t = window; t < n; t += stride) samples_.push_back({idx, t});
  }
}

Batch TrainingSet::gather(std::span<const std::size_t> indices) const {
  const std::size_t b = indices.size();
  std::vector<Real> input(b * window_ * width_), g(b * 6), l(b * kNumLocal * 6), h(b * 9),
      p(b * kNumJoints * 3);
  for (std::size_t i = 0; i < b; ++i) {
    const Sample& smp = samples_.at(indices[i]);
    const ClipData& d = clips_[smp.clip];
    // Feature row t - 1 describes frame t.
    const std::size_t first = smp.target - window_;
    for (std::size_t r = 0; r < window_; ++r) {
      const auto row = d.features.row(first + r);
      std::copy(row.begin(), row.end(), input.begin() + static_cast<std::ptrdiff_t>((i * window_ + r) * width_));
    }
    std::copy(d.global6d[smp.target].begin(), d.global6d[smp.target].end(), g.begin() + static_cast<std::ptrdiff_t>(i * 6));
    std::copy(d.local6d[smp.target].begin(), d.local6d[smp.target].end(),
              l.begin() + static_cast<std::ptrdiff_t>(i * kNumLocal * 6));
    std::copy(d.head_orient[smp.target].begin(), d.head_orient[smp.target].end(),
              h.begin() + static_cast<std::ptrdiff_t>(i * 9));
    std::copy(d.rel_pos[smp.target].begin(), d.rel_pos[smp.target].end(),
              p.begin() + static_cast<std::ptrdiff_t>(i * kNumJoints * 3));
  }
  Batch batch;
  batch.input = ad::Tensor::from({b, window_, width_}, std::move(input));
  batch.global6d = ad::Tensor::from({b, 6}, std::move(g));
  batch.local6d = ad::Tensor::from({b, kNumLocal * 6}, std::move(l));
  batch.head_orient = ad::Tensor::from({b, 3, 3}, std::move(h));
  batch.rel_pos = ad::Tensor::from({b, kNumJoints, 3}, std::move(p));
  return batch;
}

LossTerms composite_loss(const ModelOutput& out, const Batch& target, const Skeleton& s,
                         const LossWeights& w, const AblationFlags& flags) {
  using namespace ad;
  const std::size_t b = out.global6d.dim(0);
  if (target.size() != b) throw ShapeError("composite_loss: batch size mismatch");
  const Tensor local_rot = recover_6d(reshape(out.local6d, {b, kNumLocal, 6}));
  Tensor global_rot, global6d;
  if (flags.no_stabilizer) {
    global_rot = global_from_head(s, target.head_orient, local_rot);
    global6d = matrix_to_6d(global_rot);
  } else {
    global_rot = recover_6d(out.global6d);
    global6d = out.global6d;
  }

  LossTerms t;
  t.ori = l1_loss(global6d, target.global6d);
  t.rot = l1_loss(out.local6d, target.local6d);
  const bool use_fk = !flags.no_fk_loss && w.fk != 0.0;
  if (use_fk) {
    const FkResult fk = forward_kinematics(s, global_rot, local_rot);
    Tensor pred;
    if (flags.predict_pelvis) {
      if (!out.root.defined()) throw ConfigError("predict_pelvis needs a model with a pelvis head");
      pred = fk.positions + reshape(out.root, {b, 1, 3});
    } else {
      const auto h = static_cast<std::size_t>(s.head_index);
      pred = fk.positions - slice(fk.positions, 1, h, h + 1);
    }
    t.fk = l1_loss(pred, target.rel_pos);
  } else {
    t.fk = Tensor::scalar(0);
  }
  t.total = scale(t.ori, static_cast<Real>(w.ori)) + scale(t.rot, static_cast<Real>(w.rot));
  if (use_fk) t.total = t.total + scale(t.fk, static_cast<Real>(w.fk));
  return t;
}

LossRecord dataset_loss(const PoseModel& model, const TrainingSet& data, const Skeleton& s,
                        const TrainConfig& cfg, std::size_t chunk) {
  ad::NoGradScope no_grad;
  LossRecord r;
  if (data.size() == 0) return r;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
    const std::size_t end = std::min(data.size(), begin + chunk);
    idx.clear();
    for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
    const Batch batch = data.gather(idx);
    const LossTerms t = composite_loss(model.forward(batch.input), batch, s, cfg.weights, cfg.flags);
    const double n = static_cast<double>(end - begin);
    r.total += t.total.item() * n;
    r.ori += t.ori.item() * n;
    r.rot += t.rot.item() * n;
    r.fk += t.fk.item() * n;
  }
  const double n = static_cast<double>(data.size());
  r.total /= n;
  r.ori /= n;
  r.rot /= n;
  r.fk /= n;
  return r;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<LossRecord> train(PoseModel& model, const TrainingSet& data, const Skeleton& s,
                              const TrainConfig& cfg, TrainState& state, const TrainIo& io) {
  cfg.validate();
  if (data.size() == 0) throw ConfigError("train: no training windows (empty or too-short clips)");
  if (data.window() != model.config().window)
    throw ConfigError("train: dataset window " + std::to_string(data.window()) +
                      " differs from model window " + std::to_string(model.config().window));
  if (cfg.flags.predict_pelvis != model.config().predict_pelvis)
    throw ConfigError("train: predict_pelvis flag differs from the model config");
  const auto& params = model.parameters();
  if (state.adam.empty()) state.adam.resize(params.size());
  if (state.adam.size() != params.size()) throw ConfigError("train: optimizer state does not match model");

#if defined(__GLIBC__)
  // Per-iteration buffers are large enough to hit mmap by default; keep
  // them on the heap so they are reused instead of faulted in each time.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  std::vector<LossRecord> history;
  std::vector<std::size_t> idx(cfg.batch);
  for (std::uint64_t it = state.iteration; it < cfg.max_iters; ++it) {
    // Batches depend only on (seed, iteration), so a resumed run draws
    // the same samples as an uninterrupted one.
    std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(it)));
    for (auto& i : idx) i = static_cast<std::size_t>(rng() % data.size());
    const Batch batch = data.gather(idx);

    model.zero_grad();
    LossRecord rec;
    rec.iteration = it;
    {
      ad::Tape tape;
      ad::TapeScope scope(tape);
      const LossTerms t = composite_loss(model.forward(batch.input), batch, s, cfg.weights, cfg.flags);
      rec.total = t.total.item();
      rec.ori = t.ori.item();
      rec.rot = t.rot.item();
      rec.fk = t.fk.item();
      tape.backward(t.total);
    }
    AdamConfig ac;
    ac.lr = learning_rate(cfg, it);
    for (std::size_t p = 0; p < params.size(); ++p) {
      ad::Tensor w = params[p].tensor;
      adam_step(w.data(), w.grad(), state.adam[p], ac);
    }
    state.iteration = it + 1;
    history.push_back(rec);
    if (io.on_step) io.on_step(rec);
    if (io.checkpoint && cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0 &&
        state.iteration < cfg.max_iters)
      save_checkpoint(*io.checkpoint, model, state.iteration, state.adam);
  }
  if (io.checkpoint) save_checkpoint(*io.checkpoint, model, state.iteration, state.adam);
  if (io.history) write_history(*io.history, history, state.iteration > history.size());
  return history;
}

void write_history(const std::filesystem::path& path, std::span<const LossRecord> rows, bool append) {
  std::ofstream os(path, append ? std::ios::app : std::ios::trunc);
  if (!os) throw IoError("cannot write loss history " + path.string());
  if (!append) os << "# iteration total l_ori l_rot l_fk\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%llu %.9g %.9g %.9g %.9g\n",
                  static_cast<unsigned long long>(r.iteration), r.total, r.ori, r.rot, r.fk);
    os << line;
  }
}

}  // namespace sparsepose
