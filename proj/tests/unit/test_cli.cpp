#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sparsepose/clip.hpp"
#include "sparsepose/config.hpp"
#include "sparsepose/synth.hpp"

using namespace sparsepose;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(SPARSEPOSE_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("sparsepose_test_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

const char* kTinyConfig =
    "model.embed_dim = 8\n"
    "model.num_layers = 1\n"
    "model.num_heads = 2\n"
    "model.ff_dim = 8\n"
    "model.mlp_hidden = 8\n"
    "train.window = 6\n"
    "train.batch = 4\n"
    "train.lr = 1e-3\n";

}  // namespace

TEST_CASE("synth is deterministic and tagged with the skeleton") {
  TempDir d;
  REQUIRE(run("synth --kind walk-cycle --duration 2 --seed 5 --out " + (d / "a.clip")).code == 0);
  REQUIRE(run("synth --kind walk-cycle --duration 2 --seed 5 --out " + (d / "b.clip")).code == 0);
  CHECK(read_file(d / "a.clip") == read_file(d / "b.clip"));
  const MotionClip c = read_clip(d / "a.clip");
  CHECK(c.size() == 120);
  CHECK(c.skeleton_hash == Skeleton::standard().hash());
  CHECK(encode_clip(c) == encode_clip(synth_motion(MotionKind::kWalkCycle, 2, 5)));
  REQUIRE(run("synth --kind squat --duration 1 --out " + (d / "c.txt")).code == 0);
  CHECK(read_file(d / "c.txt").rfind("#", 0) == 0);
}

TEST_CASE("oracle evaluation scores zero on every joint") {
  TempDir d;
  REQUIRE(run("synth --kind composite --duration 1 --out " + (d / "a.clip")).code == 0);
  const Run r = run("eval --oracle --clips " + (d / "a.clip") + " --kv " + (d / "m.txt"));
  REQUIRE(r.code == 0);
  std::size_t joint_rows = 0;
  for (const auto& name : Skeleton::standard().names)
    if (r.out.find(name) != std::string::npos) ++joint_rows;
  CHECK(joint_rows == 22);
  const KeyValues kv = KeyValues::load(d / "m.txt");
  CHECK(kv.get_double("mpjpe_cm", -1) == 0.0);
  CHECK(kv.get_double("mpjre_deg", -1) == 0.0);
  CHECK(kv.get_double("mpjve_cm_s", -1) == 0.0);
  CHECK(kv.get_int("frames", -1) == 60);
}

TEST_CASE("train, infer, eval and bench end to end") {
  TempDir d;
  write_file(d / "tiny.cfg", kTinyConfig);
  REQUIRE(run("dataset --clips 4 --duration 0.5 --seed 2 --train-ratio 0.75 --out " + (d / "data")).code == 0);
  CHECK(load_clip_dir(d / "data/train").size() == 3);
  CHECK(load_clip_dir(d / "data/test").size() == 1);

  const Run t = run("train --data " + (d / "data/train") + " --config " + (d / "tiny.cfg") + " --iters 5 --out " +
                    (d / "m.ckpt"));
  REQUIRE_MESSAGE(t.code == 0, t.out);
  std::ifstream hist(d / "m.ckpt.loss.txt");
  std::string line;
  std::getline(hist, line);
  CHECK(line.rfind("#", 0) == 0);
  std::size_t rows = 0;
  while (std::getline(hist, line)) {
    std::istringstream ls(line);
    double v;
    std::size_t cols = 0;
    while (ls >> v) ++cols;
    CHECK(cols == 5);
    ++rows;
  }
  CHECK(rows == 5);

  const Run resumed = run("train --data " + (d / "data/train") + " --config " + (d / "tiny.cfg") +
                          " --iters 8 --resume " + (d / "m.ckpt") + " --out " + (d / "m2.ckpt") + " --history " +
                          (d / "m.ckpt.loss.txt"));
  REQUIRE_MESSAGE(resumed.code == 0, resumed.out);
  CHECK(resumed.out.find("iterations 5..8") != std::string::npos);

  REQUIRE(run("synth --kind arm-wave --duration 0.5 --out " + (d / "w.clip")).code == 0);
  REQUIRE(run("trackers --clip " + (d / "w.clip") + " --out " + (d / "w.stream")).code == 0);
  const Run inf = run("infer --checkpoint " + (d / "m.ckpt") + " --stream " + (d / "w.stream") + " --out " +
                      (d / "pred.clip"));
  REQUIRE_MESSAGE(inf.code == 0, inf.out);
  CHECK(read_clip(d / "pred.clip").size() == 30 - 6);

  const Run ev = run("eval --checkpoint " + (d / "m.ckpt") + " --clips " + (d / "data/test") + " --threads 2");
  REQUIRE_MESSAGE(ev.code == 0, ev.out);
  CHECK(ev.out.find("right_wrist") != std::string::npos);

  const Run b = run("bench --checkpoint " + (d / "m.ckpt") + " --frames 20 --ik-iters 2");
  REQUIRE_MESSAGE(b.code == 0, b.out);
  CHECK(b.out.find("network per frame") != std::string::npos);
  CHECK(b.out.find("ik per iteration") != std::string::npos);
}

TEST_CASE("errors map to distinct exit codes") {
  TempDir d;
  CHECK(run("").code == 2);
  CHECK(run("synth --kind nope --out " + (d / "x.clip")).code == 2);
  CHECK(run("eval --clips " + (d / "missing.clip")).code == 4);
  write_file(d / "bad.cfg", "model.num_heads = 7\n");
  REQUIRE(run("synth --kind squat --duration 1 --out " + (d / "a.clip")).code == 0);
  CHECK(run("train --data " + (d / "a.clip") + " --config " + (d / "bad.cfg") + " --out " + (d / "m.ckpt")).code ==
        3);
  CHECK(run("--simd sse9 synth --kind squat --out " + (d / "y.clip")).code == 5);
  CHECK(run("synth --kind squat --duration -1 --out " + (d / "y.clip")).code == 5);
  // A clip tagged with a foreign skeleton.
  MotionClip c = read_clip(d / "a.clip");
  c.skeleton_hash ^= 1;
  write_clip(d / "foreign.clip", c);
  CHECK(run("eval --oracle --clips " + (d / "foreign.clip")).code == 3);
}
