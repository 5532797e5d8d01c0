#include "sparsepose/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "sparsepose/errors.hpp"

namespace sparsepose {

static_assert(std::endian::native == std::endian::little,
              "checkpoint and clip I/O assume a little-endian host");

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
  if (input_dim == 0 || input_dim % kFeaturesPerDevice != 0)
    fail("input_dim must be a positive multiple of " + std::to_string(kFeaturesPerDevice));
  if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0)
    fail("embed_dim must be divisible by num_heads");
  if (ff_dim == 0 || mlp_hidden == 0 || window == 0) fail("sizes must be positive");
  if (output_global != 6 || output_local != kNumLocal * 6)
    fail("outputs must be 6 global + " + std::to_string(kNumLocal * 6) + " local values");
}

KeyValues ModelConfig::to_kv() const {
  KeyValues kv;
  kv.set("model.input_dim", std::to_string(input_dim));
  kv.set("model.embed_dim", std::to_string(embed_dim));
  kv.set("model.num_layers", std::to_string(num_layers));
  kv.set("model.num_heads", std::to_string(num_heads));
  kv.set("model.ff_dim", std::to_string(ff_dim));
  kv.set("model.mlp_hidden", std::to_string(mlp_hidden));
  kv.set("model.window", std::to_string(window));
  kv.set("model.output_local", std::to_string(output_local));
  kv.set("model.output_global", std::to_string(output_global));
  kv.set("model.predict_pelvis", predict_pelvis ? "1" : "0");
  return kv;
}

ModelConfig ModelConfig::from_kv(const KeyValues& kv) {
  ModelConfig c;
  auto get = [&](const char* key, std::size_t fallback) {
    const long long v = kv.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError(std::string("model config: negative ") + key);
    return static_cast<std::size_t>(v);
  };
  c.input_dim = get("model.input_dim", c.input_dim);
  c.embed_dim = get("model.embed_dim", c.embed_dim);
  c.num_layers = get("model.num_layers", c.num_layers);
  c.num_heads = get("model.num_heads", c.num_heads);
  c.ff_dim = get("model.ff_dim", c.ff_dim);
  c.mlp_hidden = get("model.mlp_hidden", c.mlp_hidden);
  c.window = get("model.window", c.window);
  c.output_local = get("model.output_local", c.output_local);
  c.output_global = get("model.output_global", c.output_global);
  c.predict_pelvis = kv.get_bool("model.predict_pelvis", c.predict_pelvis);
  return c;
}

ad::Tensor PoseModel::make_param(const std::string& name, ad::Shape shape,
                                 std::vector<Real> values) {
  ad::Tensor t = ad::Tensor::from(std::move(shape), std::move(values), true);
  params_.push_back({name, t});
  return t;
}

PoseModel::PoseModel(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  auto linear = [&](const std::string& name, std::size_t in, std::size_t out, double scale) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const double bound = scale / std::sqrt(static_cast<double>(in));
    std::vector<Real> w(in * out), b(out);
    for (auto& x : w) x = static_cast<Real>(bound * dist(rng));
    for (auto& x : b) x = static_cast<Real>(bound * dist(rng));
    Linear l;
    l.weight = make_param(name + ".weight", {in, out}, std::move(w));
    l.bias = make_param(name + ".bias", {out}, std::move(b));
    return l;
  };
  auto filled = [&](const std::string& name, std::size_t n, Real value) {
    return make_param(name, {n}, std::vector<Real>(n, value));
  };

  const std::size_t e = cfg_.embed_dim;
  embed_ = linear("embed", cfg_.input_dim, e, 1.0);
  for (std::size_t i = 0; i < cfg_.num_layers; ++i) {
    const std::string p = "encoder." + std::to_string(i) + ".";
    EncoderLayer l;
    l.q = linear(p + "attn.q", e, e, 1.0);
    l.k = linear(p + "attn.k", e, e, 1.0);
    l.v = linear(p + "attn.v", e, e, 1.0);
    l.o = linear(p + "attn.o", e, e, 1.0);
    l.norm1_gamma = filled(p + "norm1.gamma", e, Real(1));
    l.norm1_beta = filled(p + "norm1.beta", e, Real(0));
    l.ff1 = linear(p + "ff1", e, cfg_.ff_dim, 1.0);
    l.ff2 = linear(p + "ff2", cfg_.ff_dim, e, 1.0);
    l.norm2_gamma = filled(p + "norm2.gamma", e, Real(1));
    l.norm2_beta = filled(p + "norm2.beta", e, Real(0));
    layers_.push_back(std::move(l));
  }

  // Output layers start near zero with the identity 6D code as bias.
  constexpr double kOutputScale = 1e-2;
  const std::array<Real, 6> identity6d{1, 0, 0, 0, 1, 0};
  stab1_ = linear("stabilizer.0", e, cfg_.mlp_hidden, 1.0);
  stab2_ = linear("stabilizer.1", cfg_.mlp_hidden, cfg_.output_global, kOutputScale);
  for (std::size_t i = 0; i < cfg_.output_global; ++i) stab2_.bias.data()[i] = identity6d[i % 6];
  pose1_ = linear("pose.0", e, cfg_.mlp_hidden, 1.0);
  pose2_ = linear("pose.1", cfg_.mlp_hidden, cfg_.output_local, kOutputScale);
  for (std::size_t i = 0; i < cfg_.output_local; ++i) pose2_.bias.data()[i] = identity6d[i % 6];
  if (cfg_.predict_pelvis) {
    Linear p1 = linear("pelvis.0", e, cfg_.mlp_hidden, 1.0);
    Linear p2 = linear("pelvis.1", cfg_.mlp_hidden, 3, kOutputScale);
    for (auto& x : p2.bias.data()) x = 0;
    pelvis_.emplace(std::move(p1), std::move(p2));
  }

  // Sinusoidal positions over the window index.
  std::vector<Real> pe(cfg_.window * e);
  for (std::size_t t = 0; t < cfg_.window; ++t) {
    for (std::size_t i = 0; i < e; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(e));
      pe[t * e + i] = static_cast<Real>(std::sin(static_cast<double>(t) * freq));
      if (i + 1 < e) pe[t * e + i + 1] = static_cast<Real>(std::cos(static_cast<double>(t) * freq));
    }
  }
  positional_ = ad::Tensor::from({cfg_.window, e}, std::move(pe));
}

ad::Tensor PoseModel::apply(const Linear& l, const ad::Tensor& x) const {
  return ad::add(ad::matmul(x, l.weight), l.bias);
}

ad::Tensor PoseModel::encoder_layer(const EncoderLayer& l, const ad::Tensor& x) const {
  const std::size_t b = x.dim(0), n = x.dim(1), e = x.dim(2);
  const std::size_t h = cfg_.num_heads, d = e / h;
  auto heads = [&](const ad::Tensor& t) {  // [B, N, E] -> [B, H, N, D]
    return ad::transpose(ad::reshape(t, {b, n, h, d}), 1, 2);
  };
  const ad::Tensor q = heads(apply(l.q, x));
  const ad::Tensor k = heads(apply(l.k, x));
  const ad::Tensor v = heads(apply(l.v, x));
  const ad::Tensor scores =
      ad::scale(ad::matmul(q, ad::transpose(k, 2, 3)), Real(1) / std::sqrt(static_cast<Real>(d)));
  const ad::Tensor ctx = ad::matmul(ad::softmax(scores), v);  // [B, H, N, D]
  const ad::Tensor merged = ad::reshape(ad::transpose(ctx, 1, 2), {b, n, e});
  const ad::Tensor y = ad::layer_norm(ad::add(x, apply(l.o, merged)), l.norm1_gamma, l.norm1_beta);
  const ad::Tensor ff = apply(l.ff2, ad::gelu(apply(l.ff1, y)));
  return ad::layer_norm(ad::add(y, ff), l.norm2_gamma, l.norm2_beta);
}

ModelOutput PoseModel::forward(const ad::Tensor& input) const {
  if (input.ndim() != 3 || input.dim(1) != cfg_.window || input.dim(2) != cfg_.input_dim)
    throw ShapeError("model forward: expected [B, " + std::to_string(cfg_.window) + ", " +
                     std::to_string(cfg_.input_dim) + "], got " + ad::shape_str(input.shape()));
  const std::size_t b = input.dim(0);
  ad::Tensor x = ad::add(apply(embed_, input), positional_);
  for (const auto& l : layers_) x = encoder_layer(l, x);
  const ad::Tensor current =
      ad::reshape(ad::slice(x, 1, cfg_.window - 1, cfg_.window), {b, cfg_.embed_dim});
  ModelOutput out;
  out.global6d = apply(stab2_, ad::relu(apply(stab1_, current)));
  out.local6d = apply(pose2_, ad::relu(apply(pose1_, current)));
  if (pelvis_) out.root = apply(pelvis_->second, ad::relu(apply(pelvis_->first, current)));
  return out;
}

std::vector<NetworkPrediction> PoseModel::predict(const std::vector<const Window*>& windows) const {
  if (windows.empty()) return {};
  const std::size_t per = cfg_.window * cfg_.input_dim;
  std::vector<Real> buf;
  buf.reserve(windows.size() * per);
  for (const Window* w : windows) {
    if (w->length != cfg_.window || w->width != cfg_.input_dim)
      throw ShapeError("predict: window is " + std::to_string(w->length) + " x " +
                       std::to_string(w->width) + ", model expects " +
                       std::to_string(cfg_.window) + " x " + std::to_string(cfg_.input_dim));
    for (const double v : w->rows) buf.push_back(static_cast<Real>(v));
  }
  const ad::Tensor input =
      ad::Tensor::from({windows.size(), cfg_.window, cfg_.input_dim}, std::move(buf));
  ModelOutput out;
  {
    ad::NoGradScope no_grad;
    out = forward(input);
  }
  std::vector<NetworkPrediction> preds(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    auto& p = preds[i];
    for (std::size_t c = 0; c < 6; ++c) p.global.r[c] = out.global6d.data()[i * 6 + c];
    for (std::size_t j = 0; j < kNumLocal; ++j)
      for (std::size_t c = 0; c < 6; ++c)
        p.local[j].r[c] = out.local6d.data()[i * cfg_.output_local + j * 6 + c];
    if (out.root.defined())
      p.root = Vec3(out.root.data()[i * 3], out.root.data()[i * 3 + 1], out.root.data()[i * 3 + 2]);
  }
  return preds;
}

NetworkPrediction PoseModel::predict(const Window& window) const {
  return predict(std::vector<const Window*>{&window}).front();
}

std::size_t PoseModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void PoseModel::zero_grad() {
  for (auto& p : params_) {
    ad::Tensor t = p.tensor;
    t.zero_grad();
  }
}

PoseOutput decode(const Rotation6D& global6d, const std::array<Rotation6D, kNumLocal>& local6d,
                  const TrackerFrame& head, const Skeleton& s) {
  PoseOutput out;
  out.global_orient = recover_6d(global6d);
  for (std::size_t j = 0; j < kNumLocal; ++j) out.local_rot[j] = recover_6d(local6d[j]);
  out.root_pos = root_from_head(s, out.global_orient, out.local_rot, head.pos);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint container
//
//   char[8]  magic "SPCKPT\0\1"
//   u32      format version (1)
//   u32      bytes per scalar (4 or 8)
//   u64      header length, then key=value header text
//   u64      tensor count
//   per tensor: u32 name length, name, u32 rank, u64 dims[rank],
//               scalars (little-endian)
// Optimizer moments are stored as tensors named "adam.m:<param>" and
// "adam.v:<param>"; their step count is the header key "adam.step".

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'P', 'C', 'K', 'P', 'T', 0, 1};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("checkpoint: truncated while reading " + what);
  return v;
}

void put_tensor(std::ostream& os, const std::string& name, const ad::Shape& shape,
                std::span<const Real> data) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
  for (const auto d : shape) put<std::uint64_t>(os, d);
  os.write(reinterpret_cast<const char*>(data.data()),
           static_cast<std::streamsize>(data.size() * sizeof(Real)));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PoseModel& model,
                     std::uint64_t iteration, const std::vector<AdamState>& adam) {
  const auto& params = model.parameters();
  if (!adam.empty() && adam.size() != params.size())
    throw InvalidArgument("save_checkpoint: optimizer state does not match parameters");
  KeyValues header = model.config().to_kv();
  header.set("train.iteration", std::to_string(iteration));
  if (!adam.empty()) header.set("adam.step", std::to_string(adam.front().step));
  const std::string text = header.to_text();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, sizeof(Real));
  put<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));

  std::uint64_t count = params.size();
  for (const auto& st : adam)
    if (!st.m.empty()) count += 2;
  put<std::uint64_t>(os, count);
  for (const auto& p : params) put_tensor(os, p.name, p.tensor.shape(), p.tensor.data());
  for (std::size_t i = 0; i < adam.size(); ++i) {
    if (adam[i].m.empty()) continue;
    const ad::Shape& shape = params[i].tensor.shape();
    put_tensor(os, "adam.m:" + params[i].name, shape, adam[i].m);
    put_tensor(os, "adam.v:" + params[i].name, shape, adam[i].v);
  }
  if (!os) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw IoError("not a checkpoint file: " + path.string());
  if (get<std::uint32_t>(is, "version") != kCheckpointVersion)
    throw IoError("unsupported checkpoint version in " + path.string());
  const auto scalar_bytes = get<std::uint32_t>(is, "scalar width");
  if (scalar_bytes != 4 && scalar_bytes != 8)
    throw IoError("checkpoint: bad scalar width " + std::to_string(scalar_bytes));
  const auto header_len = get<std::uint64_t>(is, "header length");
  if (header_len > (1u << 20)) throw IoError("checkpoint: implausible header length");
  std::string text(header_len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw IoError("checkpoint: truncated header");
  const KeyValues header = KeyValues::parse(text);

  Checkpoint ck;
  ck.config = ModelConfig::from_kv(header);
  ck.config.validate();
  ck.iteration = static_cast<std::uint64_t>(header.get_int("train.iteration", 0));
  const auto adam_step = static_cast<std::uint64_t>(header.get_int("adam.step", 0));

  std::vector<StoredTensor> all;
  const auto count = get<std::uint64_t>(is, "tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    StoredTensor t;
    const auto name_len = get<std::uint32_t>(is, "name length");
    if (name_len > 4096) throw ConfigError("checkpoint: implausible tensor name length");
    t.name.resize(name_len);
    is.read(t.name.data(), name_len);
    const auto rank = get<std::uint32_t>(is, "rank");
    if (rank > 8) throw ConfigError("checkpoint: implausible tensor rank");
    for (std::uint32_t d = 0; d < rank; ++d) t.shape.push_back(get<std::uint64_t>(is, "dims"));
    const std::size_t n = ad::numel(t.shape);
    t.data.resize(n);
    if (scalar_bytes == sizeof(Real)) {
      is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(n * sizeof(Real)));
    } else if (scalar_bytes == 8) {
      std::vector<double> tmp(n);
      is.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(n * 8));
      for (std::size_t k = 0; k < n; ++k) t.data[k] = static_cast<Real>(tmp[k]);
    } else {
      std::vector<float> tmp(n);
      is.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(n * 4));
      for (std::size_t k = 0; k < n; ++k) t.data[k] = static_cast<Real>(tmp[k]);
    }
    if (!is) throw IoError("checkpoint: truncated tensor " + t.name);
    all.push_back(std::move(t));
  }

  std::vector<StoredTensor> moments;
  for (auto& t : all) {
    if (t.name.rfind("adam.", 0) == 0)
      moments.push_back(std::move(t));
    else
      ck.tensors.push_back(std::move(t));
  }
  if (!moments.empty()) {
    ck.adam.resize(ck.tensors.size());
    for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
      ck.adam[i].step = adam_step;
      for (auto& m : moments) {
        if (m.name == "adam.m:" + ck.tensors[i].name) ck.adam[i].m = std::move(m.data);
        if (m.name == "adam.v:" + ck.tensors[i].name) ck.adam[i].v = std::move(m.data);
      }
    }
  }
  return ck;
}

PoseModel model_from_checkpoint(const Checkpoint& ckpt, const std::optional<ModelConfig>& expected) {
  if (expected && !(*expected == ckpt.config))
    throw ConfigError("checkpoint config does not match the requested model config:\n" +
                      ckpt.config.to_kv().to_text() + "vs\n" + expected->to_kv().to_text());
  PoseModel model(ckpt.config, 0);
  const auto& params = model.parameters();
  if (params.size() != ckpt.tensors.size())
    throw ConfigError("checkpoint has " + std::to_string(ckpt.tensors.size()) +
                      " tensors, model expects " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& src = ckpt.tensors[i];
    ad::Tensor dst = params[i].tensor;
    if (src.name != params[i].name || src.shape != dst.shape())
      throw ConfigError("checkpoint tensor '" + src.name + "' " + ad::shape_str(src.shape) +
                        " does not match model parameter '" + params[i].name + "' " +
                        ad::shape_str(dst.shape()));
    std::copy(src.data.begin(), src.data.end(), dst.data().begin());
  }
  return model;
}

}  // namespace sparsepose
