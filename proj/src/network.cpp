#include "socnav/network.hpp"

#include <cmath>
#include <random>

#include "socnav/errors.hpp"

namespace socnav {

using ad::Graph;
using ad::Tensor;
using ad::Var;

std::string to_string(Modality m) {
  switch (m) {
    case Modality::rgb: return "rgb";
    case Modality::lidar: return "lidar";
    case Modality::multimodal: return "multimodal";
  }
  return "?";
}

Modality parse_modality(std::string_view s) {
  if (s == "rgb") return Modality::rgb;
  if (s == "lidar") return Modality::lidar;
  if (s == "multimodal") return Modality::multimodal;
  throw ValidationError("unknown modality '" + std::string(s) + "' (expected rgb, lidar or multimodal)");
}

std::string to_string(EncoderScale s) { return s == EncoderScale::desk ? "desk" : "paper"; }

EncoderScale parse_scale(std::string_view s) {
  if (s == "desk") return EncoderScale::desk;
  if (s == "paper") return EncoderScale::paper;
  throw ValidationError("unknown encoder scale '" + std::string(s) + "' (expected desk or paper)");
}

// ---------------------------------------------------------------------------
// Layout

namespace {

enum class Init { he, lecun, gru, zeros, ones, position };

struct Decl {
  std::string name;
  std::vector<int> shape;
  Init init;
  int fan_in = 1;
};

int conv_len(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

// Spatial size of the desk image feature map.
std::array<int, 2> desk_image_map(const ModelConfig& c) {
  int h = kImageHeight / c.img_patch;
  int w = kImageWidth / c.img_patch;
  for (std::size_t i = 1; i < c.img_channels.size(); ++i) {
    h = conv_len(h, 3, 2, 1);
    w = conv_len(w, 3, 2, 1);
  }
  return {h, w};
}

std::array<int, 3> voxel_map(const ModelConfig& c) {
  const auto d = c.grid.dims();
  std::array<int, 3> m{};
  for (int a = 0; a < 3; ++a) m[a] = conv_len(d[a], c.vox_patch[a], c.vox_patch[a], 0);
  for (std::size_t i = 1; i < c.vox_channels.size(); ++i)
    for (int a = 0; a < 3; ++a) m[a] = conv_len(m[a], 3, 2, 1);
  return m;
}

constexpr int kResNetWidths[4] = {64, 128, 256, 512};

struct LayoutBuilder {
  std::vector<Decl> decls;

  void dense(const std::string& prefix, int out, int in, Init init) {
    decls.push_back({prefix + ".w", {out, in}, init, in});
    decls.push_back({prefix + ".b", {out}, Init::zeros, in});
  }
  void conv2(const std::string& prefix, int out, int in, int k) {
    decls.push_back({prefix + ".w", {out, in, k, k}, Init::he, in * k * k});
    decls.push_back({prefix + ".b", {out}, Init::zeros, 1});
  }
  void conv3(const std::string& prefix, int out, int in, std::array<int, 3> k) {
    decls.push_back({prefix + ".w", {out, in, k[0], k[1], k[2]}, Init::he, in * k[0] * k[1] * k[2]});
    decls.push_back({prefix + ".b", {out}, Init::zeros, 1});
  }
  void norm(const std::string& prefix, int d) {
    decls.push_back({prefix + ".g", {d}, Init::ones, 1});
    decls.push_back({prefix + ".b", {d}, Init::zeros, 1});
  }
};

void image_layout(LayoutBuilder& L, const ModelConfig& c) {
  const std::string p = "theta.img.encoder.";
  if (c.scale == EncoderScale::paper) {
    L.conv2(p + "conv1", 64, 3, 7);
    int in = 64;
    for (int layer = 0; layer < 4; ++layer) {
      const int w = kResNetWidths[layer];
      for (int block = 0; block < 2; ++block) {
        const std::string b = p + "layer" + std::to_string(layer + 1) + "." + std::to_string(block) + ".";
        L.conv2(b + "conv1", w, in, 3);
        L.conv2(b + "conv2", w, w, 3);
        if (block == 0 && in != w) L.conv2(b + "downsample", w, in, 1);
        in = w;
      }
    }
    L.dense(p + "proj", c.embed_dim, 512, Init::lecun);
    return;
  }
  int in = 3;
  for (std::size_t i = 0; i < c.img_channels.size(); ++i) {
    const int out = c.img_channels[i];
    const std::string s = p + "s" + std::to_string(i) + ".";
    L.conv2(s + "conv", out, in, i == 0 ? c.img_patch : 3);
    L.conv2(s + "res", out, out, 3);
    in = out;
  }
  const auto map = desk_image_map(c);
  L.dense(p + "proj", c.embed_dim, in * map[0] * map[1], Init::lecun);
}

void voxel_layout(LayoutBuilder& L, const ModelConfig& c) {
  const std::string p = "theta.pc.encoder.";
  int in = 1;
  for (std::size_t i = 0; i < c.vox_channels.size(); ++i) {
    const int out = c.vox_channels[i];
    L.conv3(p + "s" + std::to_string(i) + ".conv", out, in, i == 0 ? c.vox_patch : std::array<int, 3>{3, 3, 3});
    in = out;
  }
  const auto m = voxel_map(c);
  L.dense(p + "proj", c.embed_dim, in * m[0] * m[1] * m[2], Init::lecun);
}

void rnn_layout(LayoutBuilder& L, const std::string& branch, const ModelConfig& c) {
  const int H = c.rnn_hidden;
  const std::string p = "theta." + branch + ".rnn.";
  L.decls.push_back({p + "w_ih", {3 * H, c.embed_dim + 2}, Init::gru, H});
  L.decls.push_back({p + "b_ih", {3 * H}, Init::gru, H});
  L.decls.push_back({p + "w_hh", {3 * H, H}, Init::gru, H});
  L.decls.push_back({p + "b_hh", {3 * H}, Init::gru, H});
}

std::vector<Decl> layout(const ModelConfig& c) {
  LayoutBuilder L;
  const int H = c.rnn_hidden;
  const int d = c.embed_dim;
  const int out = 2 * c.plan_length;
  if (c.uses_image()) {
    image_layout(L, c);
    rnn_layout(L, "img", c);
  }
  if (c.uses_voxels()) {
    voxel_layout(L, c);
    rnn_layout(L, "pc", c);
  }
  if (c.modality == Modality::multimodal) L.dense("theta.fuse_global", H, 2 * H, Init::he);
  L.dense("theta.global_head.l0", H, H, Init::he);
  L.dense("theta.global_head.l1", out, H, Init::lecun);

  if (c.modality == Modality::multimodal) L.dense("phi.fuse_local", H, 2 * H, Init::he);
  L.dense("phi.wp_embed.l0", d, out, Init::he);
  L.dense("phi.wp_embed.l1", d, d, Init::lecun);
  L.dense("phi.hidden_proj", d, H, Init::lecun);
  L.decls.push_back({"phi.pos", {2, d}, Init::position, 1});
  for (int l = 0; l < c.tf_layers; ++l) {
    const std::string p = "phi.tf." + std::to_string(l) + ".";
    L.norm(p + "ln1", d);
    for (const char* m : {"wq", "wk", "wv", "wo"}) L.dense(p + "attn." + m, d, d, Init::lecun);
    L.norm(p + "ln2", d);
    L.dense(p + "ff1", 2 * d, d, Init::he);
    L.dense(p + "ff2", d, 2 * d, Init::lecun);
  }
  L.norm("phi.tf_norm", d);
  L.dense("phi.action_head.l0", d, 2 * d, Init::he);
  L.dense("phi.action_head.l1", 2, d, Init::lecun);
  return std::move(L.decls);
}

}  // namespace

void ModelConfig::validate() const {
  if (plan_length != kPlanLength) throw ValidationError("plan_length must be 5");
  if (embed_dim < 1 || rnn_hidden < 1 || tf_heads < 1 || tf_layers < 0)
    throw ValidationError("network sizes must be positive");
  if (embed_dim % tf_heads != 0) throw ValidationError("embed_dim must be divisible by tf_heads");
  if (img_channels.empty() || vox_channels.empty()) throw ValidationError("channel lists must be non-empty");
  for (int ch : img_channels)
    if (ch < 1) throw ValidationError("image channels must be positive");
  for (int ch : vox_channels)
    if (ch < 1) throw ValidationError("voxel channels must be positive");
  if (img_patch < 1 || kImageHeight % img_patch != 0 || kImageWidth % img_patch != 0)
    throw ValidationError("img_patch must divide 224");
  const auto dims = grid.dims();
  for (int a = 0; a < 3; ++a)
    if (vox_patch[a] < 1 || vox_patch[a] > dims[a]) throw ValidationError("vox_patch must fit inside the grid");
}

ModelConfig tiny_config(Modality m) {
  ModelConfig c;
  c.modality = m;
  c.img_channels = {2};
  c.vox_channels = {2};
  c.img_patch = 32;
  c.vox_patch = {20, 20, 10};
  c.embed_dim = 8;
  c.rnn_hidden = 8;
  c.tf_layers = 1;
  c.tf_heads = 2;
  return c;
}

// ---------------------------------------------------------------------------
// Parameters

void ModelParams::add(std::string name, ad::Tensor value) {
  if (index_.count(name)) throw ValidationError("duplicate parameter " + name);
  if (name.rfind("theta.", 0) != 0 && name.rfind("phi.", 0) != 0)
    throw ValidationError("parameter " + name + " is neither in theta nor phi");
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(value)});
}

bool ModelParams::contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

std::size_t ModelParams::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw InputError("missing parameter " + std::string(name));
  return it->second;
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

bool ModelParams::all_finite() const {
  for (const auto& e : entries_)
    for (double v : e.value.data)
      if (!std::isfinite(v)) return false;
  return true;
}

std::vector<std::size_t> ModelParams::theta() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name.rfind("theta.", 0) == 0) out.push_back(i);
  return out;
}

std::vector<std::size_t> ModelParams::phi() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name.rfind("phi.", 0) == 0) out.push_back(i);
  return out;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i)
    if (a.entries_[i].name != b.entries_[i].name || !(a.entries_[i].value == b.entries_[i].value)) return false;
  return true;
}

Gradients::Gradients(const ModelParams& params) {
  tensors.reserve(params.size());
  for (const auto& e : params.entries()) tensors.emplace_back(e.value.shape);
}

void Gradients::zero() {
  for (auto& t : tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
}

double Gradients::global_norm() const {
  double s = 0.0;
  for (const auto& t : tensors)
    for (double v : t.data) s += v * v;
  return std::sqrt(s);
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams params;
  for (auto& d : layout(config)) {
    Tensor t(d.shape);
    switch (d.init) {
      case Init::he:
      case Init::lecun: {
        const double gain = d.init == Init::he ? 2.0 : 1.0;
        std::normal_distribution<double> dist(0.0, std::sqrt(gain / d.fan_in));
        for (double& v : t.data) v = dist(rng);
        break;
      }
      case Init::gru: {
        const double k = 1.0 / std::sqrt(static_cast<double>(d.fan_in));
        std::uniform_real_distribution<double> dist(-k, k);
        for (double& v : t.data) v = dist(rng);
        break;
      }
      case Init::position: {
        std::normal_distribution<double> dist(0.0, 0.02);
        for (double& v : t.data) v = dist(rng);
        break;
      }
      case Init::ones: std::fill(t.data.begin(), t.data.end(), 1.0); break;
      case Init::zeros: break;
    }
    params.add(std::move(d.name), std::move(t));
  }
  return params;
}

// ---------------------------------------------------------------------------
// Graph construction

namespace {

class Net {
 public:
  Net(Graph& g, const ModelConfig& config, const ModelParams& params, Gradients* grads)
      : g_(g), c_(config), params_(params), grads_(grads), bound_(params.size()) {}

  Var param(const std::string& name) {
    const std::size_t i = params_.index_of(name);
    if (!bound_[i].valid())
      bound_[i] = g_.parameter(params_.entries()[i].value, grads_ ? &grads_->tensors[i] : nullptr);
    return bound_[i];
  }

  Var dense(Var x, const std::string& prefix) { return ad::linear(g_, x, param(prefix + ".w"), param(prefix + ".b")); }

  Var image_encoder(const Image& image) {
    if (!image.has_frame_shape()) throw InputError("image must be 224x224x3");
    Tensor x({3, kImageHeight, kImageWidth});
    const std::size_t plane = static_cast<std::size_t>(kImageHeight) * kImageWidth;
    static const std::array<double, 256> scaled = [] {
      std::array<double, 256> t{};
      for (int v = 0; v < 256; ++v) t[v] = v / 255.0;
      return t;
    }();
    for (int ch = 0; ch < 3; ++ch) {
      double* dst = x.data.data() + ch * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = scaled[image.pixels[i * 3 + ch]];
    }
    Var h = g_.constant(std::move(x));
    const std::string p = "theta.img.encoder.";
    if (c_.scale == EncoderScale::paper) return resnet18(h, p);
    for (std::size_t i = 0; i < c_.img_channels.size(); ++i) {
      const std::string s = p + "s" + std::to_string(i) + ".";
      const int k = i == 0 ? c_.img_patch : 3;
      h = ad::relu(g_, conv(h, s + "conv", i == 0 ? k : 2, i == 0 ? 0 : 1));
      h = ad::relu(g_, ad::add(g_, h, conv(h, s + "res", 1, 1)));
    }
    h = ad::reshape(g_, h, {static_cast<int>(g_.value(h).size())});
    return dense(h, p + "proj");
  }

  Var voxel_encoder(const VoxelGrid& grid) {
    if (grid.dims() != c_.grid.dims()) throw InputError("voxel grid shape does not match the model grid");
    const std::string p = "theta.pc.encoder.";
    ad::ConvGeometry stem{c_.vox_patch, c_.vox_patch, {0, 0, 0}};
    Var h = ad::relu(g_, ad::voxel_conv(g_, grid, param(p + "s0.conv.w"), param(p + "s0.conv.b"), stem));
    const ad::ConvGeometry down{{3, 3, 3}, {2, 2, 2}, {1, 1, 1}};
    for (std::size_t i = 1; i < c_.vox_channels.size(); ++i) {
      const std::string s = p + "s" + std::to_string(i) + ".conv";
      h = ad::relu(g_, ad::conv3d(g_, h, param(s + ".w"), param(s + ".b"), down));
    }
    h = ad::reshape(g_, h, {static_cast<int>(g_.value(h).size())});
    return dense(h, p + "proj");
  }

  // Gated recurrent cell (gate order r, z, n).
  Var gru(Var embedding, Vec2 goal, Var state, const std::string& branch) {
    const int H = c_.rnn_hidden;
    const std::string p = "theta." + branch + ".rnn.";
    Var goal_v = g_.constant(Tensor({2}, {goal.x, goal.y}));
    Var x = ad::concat(g_, std::array{embedding, goal_v});
    Var gi = ad::linear(g_, x, param(p + "w_ih"), param(p + "b_ih"));
    Var gh = ad::linear(g_, state, param(p + "w_hh"), param(p + "b_hh"));
    auto part = [&](Var v, int k) { return ad::slice(g_, v, k * H, H); };
    Var r = ad::sigmoid(g_, ad::add(g_, part(gi, 0), part(gh, 0)));
    Var z = ad::sigmoid(g_, ad::add(g_, part(gi, 1), part(gh, 1)));
    Var n = ad::tanh(g_, ad::add(g_, part(gi, 2), ad::mul(g_, r, part(gh, 2))));
    return ad::add(g_, n, ad::mul(g_, z, ad::sub(g_, state, n)));
  }

  Var zero_state() { return g_.constant(Tensor({c_.rnn_hidden})); }

  Var fusion(Var hidden_pc, Var hidden_img, const std::string& prefix) {
    return ad::relu(g_, dense(ad::concat(g_, std::array{hidden_pc, hidden_img}), prefix));
  }

  Var global_head(Var hidden) {
    return dense(ad::relu(g_, dense(hidden, "theta.global_head.l0")), "theta.global_head.l1");
  }

  Var local_head(Var hidden, Var waypoints) {
    const int d = c_.embed_dim;
    Var wp = dense(ad::relu(g_, dense(waypoints, "phi.wp_embed.l0")), "phi.wp_embed.l1");
    Var hp = dense(hidden, "phi.hidden_proj");
    Var x = ad::add(g_, ad::reshape(g_, ad::concat(g_, std::array{wp, hp}), {2, d}), param("phi.pos"));
    for (int l = 0; l < c_.tf_layers; ++l) x = encoder_layer(x, "phi.tf." + std::to_string(l) + ".");
    x = norm(x, "phi.tf_norm");
    Var flat = ad::reshape(g_, x, {2 * d});
    return dense(ad::relu(g_, dense(flat, "phi.action_head.l0")), "phi.action_head.l1");
  }

  ForwardVars forward(const NavigationInput& input) {
    if (input.history_len != 1)
      throw InputError("history_len " + std::to_string(input.history_len) + " needs a frame history; only 1 is supported");
    Var hidden_img, hidden_pc;
    if (c_.uses_image()) hidden_img = gru(image_encoder(input.image), input.goal, zero_state(), "img");
    if (c_.uses_voxels()) hidden_pc = gru(voxel_encoder(input.voxels), input.goal, zero_state(), "pc");

    Var global_in, local_in;
    switch (c_.modality) {
      case Modality::rgb: global_in = local_in = hidden_img; break;
      case Modality::lidar: global_in = local_in = hidden_pc; break;
      case Modality::multimodal:
        global_in = fusion(hidden_pc, hidden_img, "theta.fuse_global");
        local_in = fusion(hidden_pc, hidden_img, "phi.fuse_local");
        break;
    }
    ForwardVars out;
    out.waypoints = global_head(global_in);
    out.action = local_head(local_in, out.waypoints);
    return out;
  }

 private:
  Var conv(Var x, const std::string& prefix, int stride, int pad) {
    return ad::conv2d(g_, x, param(prefix + ".w"), param(prefix + ".b"), stride, pad);
  }

  Var resnet18(Var x, const std::string& p) {
    Var h = ad::relu(g_, conv(x, p + "conv1", 2, 3));
    h = ad::max_pool2d(g_, h, 3, 2, 1);
    int in = 64;
    for (int layer = 0; layer < 4; ++layer) {
      const int w = kResNetWidths[layer];
      for (int block = 0; block < 2; ++block) {
        const std::string b = p + "layer" + std::to_string(layer + 1) + "." + std::to_string(block) + ".";
        const int stride = (block == 0 && layer > 0) ? 2 : 1;
        Var y = ad::relu(g_, conv(h, b + "conv1", stride, 1));
        y = conv(y, b + "conv2", 1, 1);
        Var skip = (block == 0 && in != w) ? conv(h, b + "downsample", stride, 0) : h;
        h = ad::relu(g_, ad::add(g_, y, skip));
        in = w;
      }
    }
    return dense(ad::global_avg_pool(g_, h), p + "proj");
  }

  Var norm(Var x, const std::string& prefix) {
    return ad::layer_norm_rows(g_, x, param(prefix + ".g"), param(prefix + ".b"));
  }

  Var rows(Var x, const std::string& prefix) {
    return ad::linear_rows(g_, x, param(prefix + ".w"), param(prefix + ".b"));
  }

  // Pre-norm transformer encoder layer over the token matrix x [T, d].
  Var encoder_layer(Var x, const std::string& p) {
    const int d = c_.embed_dim;
    const int heads = c_.tf_heads;
    const int dh = d / heads;
    Var a = norm(x, p + "ln1");
    Var q = rows(a, p + "attn.wq");
    Var k = rows(a, p + "attn.wk");
    Var v = rows(a, p + "attn.wv");
    std::vector<Var> outs;
    for (int h = 0; h < heads; ++h) {
      Var qh = ad::slice_cols(g_, q, h * dh, dh);
      Var kh = ad::slice_cols(g_, k, h * dh, dh);
      Var vh = ad::slice_cols(g_, v, h * dh, dh);
      Var scores = ad::scale(g_, ad::matmul(g_, qh, ad::transpose(g_, kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
      outs.push_back(ad::matmul(g_, ad::softmax_rows(g_, scores), vh));
    }
    x = ad::add(g_, x, rows(ad::concat_cols(g_, outs), p + "attn.wo"));
    Var f = rows(ad::relu(g_, rows(norm(x, p + "ln2"), p + "ff1")), p + "ff2");
    return ad::add(g_, x, f);
  }

  Graph& g_;
  const ModelConfig& c_;
  const ModelParams& params_;
  Gradients* grads_;
  std::vector<Var> bound_;
};

std::vector<double> values(const Graph& g, Var v) { return g.value(v).data; }

NetworkOutput to_output(const Graph& g, const ForwardVars& f) {
  NetworkOutput out;
  const auto& wp = g.value(f.waypoints).data;
  for (int i = 0; i < kPlanLength; ++i) out.waypoints[i] = {wp[2 * i], wp[2 * i + 1]};
  const auto& a = g.value(f.action).data;
  out.action = {a[0], a[1]};
  return out;
}

void require_branch(const ModelParams& params, const std::string& name) {
  if (!params.contains(name)) throw InputError("parameters have no " + name + " (wrong modality?)");
}

}  // namespace

ForwardVars build_forward(Graph& g, const NavigationInput& input, const ModelConfig& config,
                          const ModelParams& params, Gradients* grads) {
  Net net(g, config, params, grads);
  return net.forward(input);
}

NetworkOutput forward(const NavigationInput& input, const ModelConfig& config, const ModelParams& params) {
  Graph g(false);
  return to_output(g, build_forward(g, input, config, params, nullptr));
}

Embedding encode_image(const Image& image, const ModelParams& params, const ModelConfig& config) {
  require_branch(params, "theta.img.encoder.proj.w");
  Graph g(false);
  Net net(g, config, params, nullptr);
  return values(g, net.image_encoder(image));
}

Embedding encode_pointcloud(const VoxelGrid& grid, const ModelParams& params, const ModelConfig& config) {
  require_branch(params, "theta.pc.encoder.proj.w");
  Graph g(false);
  Net net(g, config, params, nullptr);
  return values(g, net.voxel_encoder(grid));
}

TemporalStep temporal_encode(const Embedding& embedding, Vec2 goal, const std::vector<double>& state,
                             Modality branch, const ModelParams& params, const ModelConfig& config) {
  if (branch == Modality::multimodal) throw InputError("temporal_encode needs a single branch (rgb or lidar)");
  if (static_cast<int>(embedding.size()) != config.embed_dim) throw InputError("embedding length must equal embed_dim");
  if (!state.empty() && static_cast<int>(state.size()) != config.rnn_hidden)
    throw InputError("state length must equal rnn_hidden");
  const std::string name = branch == Modality::rgb ? "img" : "pc";
  require_branch(params, "theta." + name + ".rnn.w_ih");
  Graph g(false);
  Net net(g, config, params, nullptr);
  Var e = g.constant(Tensor({config.embed_dim}, embedding));
  Var s = state.empty() ? net.zero_state() : g.constant(Tensor({config.rnn_hidden}, state));
  Var h = net.gru(e, goal, s, name);
  return {values(g, h), values(g, h)};
}

std::vector<double> fuse(const std::vector<double>& hidden_pc, const std::vector<double>& hidden_img,
                         FusionSite site, const ModelParams& params, const ModelConfig& config) {
  const int H = config.rnn_hidden;
  if (static_cast<int>(hidden_pc.size()) != H || static_cast<int>(hidden_img.size()) != H)
    throw InputError("fusion inputs must have length rnn_hidden");
  const std::string prefix = site == FusionSite::global ? "theta.fuse_global" : "phi.fuse_local";
  require_branch(params, prefix + ".w");
  Graph g(false);
  Net net(g, config, params, nullptr);
  return values(g, net.fusion(g.constant(Tensor({H}, hidden_pc)), g.constant(Tensor({H}, hidden_img)), prefix));
}

std::array<Vec2, kPlanLength> global_head(const std::vector<double>& hidden, const ModelParams& params,
                                          const ModelConfig& config) {
  if (static_cast<int>(hidden.size()) != config.rnn_hidden) throw InputError("hidden length must equal rnn_hidden");
  Graph g(false);
  Net net(g, config, params, nullptr);
  const auto wp = values(g, net.global_head(g.constant(Tensor({config.rnn_hidden}, hidden))));
  std::array<Vec2, kPlanLength> out;
  for (int i = 0; i < kPlanLength; ++i) out[i] = {wp[2 * i], wp[2 * i + 1]};
  return out;
}

VelocityCommand local_head(const std::vector<double>& hidden, const std::array<Vec2, kPlanLength>& waypoints,
                           const ModelParams& params, const ModelConfig& config) {
  if (static_cast<int>(hidden.size()) != config.rnn_hidden) throw InputError("hidden length must equal rnn_hidden");
  Graph g(false);
  Net net(g, config, params, nullptr);
  std::vector<double> flat;
  for (const auto& w : waypoints) {
    flat.push_back(w.x);
    flat.push_back(w.y);
  }
  const auto a = values(g, net.local_head(g.constant(Tensor({config.rnn_hidden}, hidden)),
                                          g.constant(Tensor({2 * kPlanLength}, std::move(flat)))));
  return {a[0], a[1]};
}

}  // namespace socnav
