// sparsepose: synthesize clips, train, evaluate, infer and benchmark.
//
// Exit codes: 0 success, 1 internal failure, 2 bad command line,
// 3 configuration error, 4 I/O error, 5 invalid input data.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "sparsepose/errors.hpp"
#include "sparsepose/kernels.hpp"
#include "sparsepose/pipeline.hpp"
#include "sparsepose/synth.hpp"

namespace sp = sparsepose;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kInternal = 1, kUsage = 2, kConfig = 3, kIo = 4, kInput = 5 };

struct Common {
  std::string simd = "auto";
  std::string skeleton;

  sp::Skeleton load_skeleton() const {
    return skeleton.empty() ? sp::Skeleton::standard() : sp::Skeleton::load(skeleton);
  }
};

unsigned threads_or_env(unsigned flag_value, bool flag_given) {
  if (flag_given) return flag_value;
  if (const char* env = std::getenv("THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

std::vector<sp::MotionClip> load_clips(const std::vector<std::string>& paths) {
  std::vector<sp::MotionClip> clips;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      auto more = sp::load_clip_dir(p);
      for (auto& c : more) clips.push_back(std::move(c));
    } else {
      clips.push_back(sp::read_clip(p));
    }
  }
  return clips;
}

void check_skeleton(const std::vector<sp::MotionClip>& clips, const sp::Skeleton& s) {
  const std::uint64_t h = s.hash();
  for (const auto& c : clips)
    if (c.skeleton_hash != 0 && c.skeleton_hash != h)
      throw sp::ConfigError("clip was recorded for a different skeleton (hash " +
                            std::to_string(c.skeleton_hash) + ", expected " + std::to_string(h) + ")");
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string kind = "walk-cycle";
  double duration = 10.0;
  double fps = 60.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  const auto kind = sp::parse_motion_kind(a.kind);
  if (!kind) throw sp::InvalidArgument("unknown motion kind '" + a.kind + "'");
  const sp::MotionClip clip = sp::synth_motion(*kind, a.duration, a.seed, a.fps);
  sp::write_clip(a.out, clip);
  std::printf("wrote %s: %zu frames at %g fps\n", a.out.c_str(), clip.size(), clip.fps);
  return kOk;
}

// ---- dataset --------------------------------------------------------------

struct DatasetArgs {
  std::size_t clips = 20;
  double duration = 10.0;
  std::uint64_t seed = 0;
  double train_ratio = 0.9;
  std::string out;
};

int cmd_dataset(const DatasetArgs& a) {
  static constexpr sp::MotionKind kinds[] = {sp::MotionKind::kWalkCycle, sp::MotionKind::kArmWave,
                                             sp::MotionKind::kSquat, sp::MotionKind::kHeadTurn,
                                             sp::MotionKind::kComposite};
  std::vector<sp::MotionClip> clips;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < a.clips; ++i) {
    const auto kind = kinds[i % std::size(kinds)];
    clips.push_back(sp::synth_motion(kind, a.duration, a.seed * 1000003ULL + i));
  }
  const sp::DatasetSplit split = sp::split_dataset(std::move(clips), a.train_ratio, a.seed);
  for (const char* sub : {"train", "test"}) fs::create_directories(fs::path(a.out) / sub);
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04zu.clip", i);
    sp::write_clip(fs::path(a.out) / "train" / name, split.train[i]);
  }
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04zu.clip", i);
    sp::write_clip(fs::path(a.out) / "test" / name, split.test[i]);
  }
  std::printf("wrote %zu train and %zu test clips to %s\n", split.train.size(), split.test.size(),
              a.out.c_str());
  return kOk;
}

// ---- trackers -------------------------------------------------------------

struct TrackerArgs {
  std::string clip, out;
};

int cmd_trackers(const TrackerArgs& a, const Common& c) {
  const sp::Skeleton s = c.load_skeleton();
  const sp::MotionClip clip = sp::read_clip(a.clip);
  check_skeleton({clip}, s);
  sp::write_stream(a.out, sp::extract_trackers(clip, s), s.hash());
  std::printf("wrote %s: %zu frames\n", a.out.c_str(), clip.size());
  return kOk;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::vector<std::string> data;
  std::string config;
  std::string out;
  std::string history;
  std::string resume;
  std::uint64_t iters = 0;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, const Common& c) {
  const sp::Skeleton s = c.load_skeleton();
  sp::KeyValues kv;
  if (!a.config.empty()) kv = sp::KeyValues::load(a.config);
  sp::TrainConfig tc = sp::TrainConfig::from_kv(kv);
  sp::ModelConfig mc = sp::ModelConfig::from_kv(kv);
  if (!kv.has("model.window")) mc.window = tc.window;
  if (a.iters) tc.max_iters = a.iters;
  mc.predict_pelvis = mc.predict_pelvis || tc.flags.predict_pelvis;
  tc.flags.predict_pelvis = mc.predict_pelvis;
  if (mc.window != tc.window) throw sp::ConfigError("model.window and train.window differ");

  const auto clips = load_clips(a.data);
  check_skeleton(clips, s);
  const sp::TrainingSet data(clips, s, tc.window, tc.sample_stride);
  if (data.size() == 0) throw sp::ConfigError("no training windows in the given data");

  sp::TrainState state;
  std::optional<sp::PoseModel> model;
  if (!a.resume.empty()) {
    const sp::Checkpoint ck = sp::read_checkpoint(a.resume);
    model.emplace(sp::model_from_checkpoint(ck, mc));
    state.iteration = ck.iteration;
    state.adam = ck.adam;
  } else {
    model.emplace(mc, tc.seed);
  }

  sp::TrainIo io;
  io.checkpoint = fs::path(a.out);
  io.history = fs::path(a.history.empty() ? a.out + ".loss.txt" : a.history);
  const std::uint64_t every = std::max<std::uint64_t>(1, tc.max_iters / 20);
  if (!a.quiet)
    io.on_step = [every](const sp::LossRecord& r) {
      if (r.iteration % every == 0)
        std::printf("iter %6llu  loss %.6f  ori %.6f  rot %.6f  fk %.6f\n",
                    static_cast<unsigned long long>(r.iteration), r.total, r.ori, r.rot, r.fk);
    };
  std::printf("training on %zu windows from %zu clips, %zu parameters, iterations %llu..%llu\n",
              data.size(), clips.size(), model->parameter_count(),
              static_cast<unsigned long long>(state.iteration),
              static_cast<unsigned long long>(tc.max_iters));
  const auto hist = sp::train(*model, data, s, tc, state, io);
  if (!hist.empty())
    std::printf("final mini-batch loss %.6f after %llu iterations\n", hist.back().total,
                static_cast<unsigned long long>(state.iteration));
  std::printf("checkpoint %s, history %s\n", a.out.c_str(), io.history->string().c_str());
  return kOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::vector<std::string> clips;
  std::string report;
  std::string kv;
  bool no_ik = false;
  bool no_stabilizer = false;
  bool oracle = false;
  std::size_t ik_iters = 5;
  double ik_lr = 1e-3;
  std::string ik_optimizer = "adam";
  unsigned threads = 1;
  bool threads_given = false;
};

sp::IkConfig make_ik(std::size_t iters, double lr, const std::string& opt) {
  sp::IkConfig ik;
  ik.iters = iters;
  ik.lr = lr;
  if (opt == "adam")
    ik.optimizer = sp::IkOptimizer::kAdam;
  else if (opt == "gd")
    ik.optimizer = sp::IkOptimizer::kGradientDescent;
  else
    throw sp::ConfigError("unknown IK optimizer '" + opt + "' (adam or gd)");
  return ik;
}

int cmd_eval(const EvalArgs& a, const Common& c) {
  const sp::Skeleton s = c.load_skeleton();
  const auto clips = load_clips(a.clips);
  check_skeleton(clips, s);
  sp::EvalReport report;
  if (a.oracle) {
    std::vector<sp::EvalReport> parts;
    for (const auto& clip : clips) {
      const auto poses = sp::to_poses(clip);
      parts.push_back(sp::evaluate(poses, poses, s, clip.fps));
    }
    report = sp::combine_reports(parts, s);
  } else {
    if (a.checkpoint.empty()) throw sp::ConfigError("eval needs --checkpoint (or --oracle)");
    const sp::PoseModel model = sp::model_from_checkpoint(sp::read_checkpoint(a.checkpoint));
    sp::InferenceOptions opt;
    opt.no_stabilizer = a.no_stabilizer;
    opt.use_ik = !a.no_ik;
    opt.ik = make_ik(a.ik_iters, a.ik_lr, a.ik_optimizer);
    opt.threads = threads_or_env(a.threads, a.threads_given);
    report = sp::evaluate_clips(model, clips, s, opt);
  }
  const std::string table = report.to_table(s);
  std::fputs(table.c_str(), stdout);
  if (!a.report.empty()) sp::write_file(a.report, table);
  if (!a.kv.empty()) sp::write_file(a.kv, report.to_kv(s).to_text());
  return kOk;
}

// ---- infer ----------------------------------------------------------------

struct InferArgs {
  std::string checkpoint, stream, out;
  bool no_ik = false;
  bool no_stabilizer = false;
  std::size_t ik_iters = 5;
  double ik_lr = 1e-3;
  std::string ik_optimizer = "adam";
  unsigned threads = 1;
  bool threads_given = false;
};

int cmd_infer(const InferArgs& a, const Common& c) {
  const sp::Skeleton s = c.load_skeleton();
  const sp::PoseModel model = sp::model_from_checkpoint(sp::read_checkpoint(a.checkpoint));
  const sp::TrackerStream stream = sp::read_stream(a.stream);
  sp::InferenceOptions opt;
  opt.no_stabilizer = a.no_stabilizer;
  opt.use_ik = !a.no_ik;
  opt.ik = make_ik(a.ik_iters, a.ik_lr, a.ik_optimizer);
  opt.threads = threads_or_env(a.threads, a.threads_given);
  const auto poses = sp::infer_stream(model, stream, s, opt);
  sp::MotionClip clip;
  clip.fps = stream.fps;
  clip.skeleton_hash = s.hash();
  for (const auto& p : poses) clip.frames.push_back(sp::from_pose(p));
  sp::write_clip(a.out, clip);
  std::printf("wrote %s: %zu frames (input %zu, window %zu)\n", a.out.c_str(), clip.size(),
              stream.size(), model.config().window);
  return kOk;
}

// ---- bench ----------------------------------------------------------------

struct BenchArgs {
  std::string checkpoint, out;
  std::size_t frames = 1000;
  std::size_t ik_iters = 5;
  double ik_lr = 1e-3;
  std::uint64_t seed = 7;
};

int cmd_bench(const BenchArgs& a, const Common& c) {
  const sp::Skeleton s = c.load_skeleton();
  const sp::PoseModel model = sp::model_from_checkpoint(sp::read_checkpoint(a.checkpoint));
  if (a.frames == 0 || a.ik_iters == 0) throw sp::InvalidArgument("bench needs frames and IK iterations");
  const sp::BenchReport r = sp::bench(model, s, a.frames, make_ik(a.ik_iters, a.ik_lr, "adam"), a.seed);
  std::string text = "simd backend        " +
                     std::string(sp::kernels::backend_name(sp::kernels::active_backend())) + "\n" +
                     r.to_text();
  std::fputs(text.c_str(), stdout);
  if (!a.out.empty()) sp::write_file(a.out, text);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Full-body pose from head and hand trackers"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--simd", common.simd, "Kernel backend: auto, scalar, avx2, neon")
      ->capture_default_str();
  app.add_option("--skeleton", common.skeleton, "Skeleton definition file (default: built-in)");

  SynthArgs synth;
  auto* s_cmd = app.add_subcommand("synth", "Generate one synthetic motion clip");
  s_cmd->add_option("--kind", synth.kind)
      ->check(CLI::IsMember({"walk-cycle", "arm-wave", "squat", "head-turn", "composite"}))
      ->capture_default_str();
  s_cmd->add_option("--duration", synth.duration, "Seconds")->capture_default_str();
  s_cmd->add_option("--fps", synth.fps, "Frame rate")->capture_default_str();
  s_cmd->add_option("--seed", synth.seed)->capture_default_str();
  s_cmd->add_option("--out", synth.out, "Output clip (.txt selects the text format)")->required();

  DatasetArgs ds;
  auto* d_cmd = app.add_subcommand("dataset", "Generate a split synthetic dataset (out/train, out/test)");
  d_cmd->add_option("--clips", ds.clips)->capture_default_str();
  d_cmd->add_option("--duration", ds.duration)->capture_default_str();
  d_cmd->add_option("--seed", ds.seed)->capture_default_str();
  d_cmd->add_option("--train-ratio", ds.train_ratio)->capture_default_str();
  d_cmd->add_option("--out", ds.out)->required();

  TrackerArgs tr;
  auto* t_cmd = app.add_subcommand("trackers", "Extract the head/hand tracker stream of a clip");
  t_cmd->add_option("--clip", tr.clip)->required()->check(CLI::ExistingFile);
  t_cmd->add_option("--out", tr.out)->required();

  TrainArgs ta;
  auto* tr_cmd = app.add_subcommand("train", "Train a model on clips");
  tr_cmd->add_option("--data", ta.data, "Clip files or directories")->required();
  tr_cmd->add_option("--config", ta.config, "key=value config (model.* and train.* keys)");
  tr_cmd->add_option("--out", ta.out, "Checkpoint path")->required();
  tr_cmd->add_option("--history", ta.history, "Loss history (default: <out>.loss.txt)");
  tr_cmd->add_option("--resume", ta.resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  tr_cmd->add_option("--iters", ta.iters, "Override train.max_iters");
  tr_cmd->add_flag("--quiet", ta.quiet);

  EvalArgs ea;
  auto* e_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on clips");
  e_cmd->add_option("--checkpoint", ea.checkpoint);
  e_cmd->add_option("--clips", ea.clips, "Clip files or directories")->required();
  e_cmd->add_option("--report", ea.report, "Write the text table here");
  e_cmd->add_option("--kv", ea.kv, "Write key=value metrics here");
  e_cmd->add_flag("--no-ik", ea.no_ik);
  e_cmd->add_flag("--no-stabilizer", ea.no_stabilizer);
  e_cmd->add_flag("--oracle", ea.oracle, "Score the clips against themselves");
  e_cmd->add_option("--ik-iters", ea.ik_iters)->capture_default_str();
  e_cmd->add_option("--ik-lr", ea.ik_lr)->capture_default_str();
  e_cmd->add_option("--ik-optimizer", ea.ik_optimizer, "adam or gd")->capture_default_str();
  auto* e_threads = e_cmd->add_option("--threads", ea.threads);

  InferArgs ia;
  auto* i_cmd = app.add_subcommand("infer", "Predict poses for a tracker stream");
  i_cmd->add_option("--checkpoint", ia.checkpoint)->required()->check(CLI::ExistingFile);
  i_cmd->add_option("--stream", ia.stream)->required()->check(CLI::ExistingFile);
  i_cmd->add_option("--out", ia.out)->required();
  i_cmd->add_flag("--no-ik", ia.no_ik);
  i_cmd->add_flag("--no-stabilizer", ia.no_stabilizer);
  i_cmd->add_option("--ik-iters", ia.ik_iters)->capture_default_str();
  i_cmd->add_option("--ik-lr", ia.ik_lr)->capture_default_str();
  i_cmd->add_option("--ik-optimizer", ia.ik_optimizer)->capture_default_str();
  auto* i_threads = i_cmd->add_option("--threads", ia.threads);

  BenchArgs ba;
  auto* b_cmd = app.add_subcommand("bench", "Time network inference and IK per frame");
  b_cmd->add_option("--checkpoint", ba.checkpoint)->required()->check(CLI::ExistingFile);
  b_cmd->add_option("--frames", ba.frames)->capture_default_str();
  b_cmd->add_option("--ik-iters", ba.ik_iters)->capture_default_str();
  b_cmd->add_option("--ik-lr", ba.ik_lr)->capture_default_str();
  b_cmd->add_option("--seed", ba.seed)->capture_default_str();
  b_cmd->add_option("--out", ba.out, "Also write the report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    sp::kernels::set_backend(sp::kernels::parse_backend(common.simd));
    if (*s_cmd) return cmd_synth(synth);
    if (*d_cmd) return cmd_dataset(ds);
    if (*t_cmd) return cmd_trackers(tr, common);
    if (*tr_cmd) return cmd_train(ta, common);
    if (*e_cmd) {
      ea.threads_given = e_threads->count() > 0;
      return cmd_eval(ea, common);
    }
    if (*i_cmd) {
      ia.threads_given = i_threads->count() > 0;
      return cmd_infer(ia, common);
    }
    if (*b_cmd) return cmd_bench(ba, common);
  } catch (const sp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const sp::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kInput;
  } catch (const std::domain_error& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
