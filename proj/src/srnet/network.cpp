#include "hyperleaf/srnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "hyperleaf/config.hpp"

namespace fs = std::filesystem;

namespace hyperleaf::srnet {

int NetArch::upsample_stages() const {
  int s = scale, n = 0;
  while (s > 1) {
    s /= 2;
    ++n;
  }
  return n;
}

void NetArch::validate() const {
  if (in_channels < 1 || g0 < 1 || d_blocks < 1 || c_layers < 1 || growth < 1) {
    fail("config_error", "net arch counts must be >= 1");
  }
  if (scale != 2 && scale != 4 && scale != 8) {
    fail("config_error", "net.scale must be one of 2, 4, 8");
  }
}

std::vector<LayerSpec> layer_layout(const NetArch& arch) {
  arch.validate();
  std::vector<LayerSpec> layout;
  layout.push_back({"sfe1", arch.g0, arch.in_channels, 3, 3});
  layout.push_back({"sfe2", arch.g0, arch.g0, 3, 3});
  for (int d = 0; d < arch.d_blocks; ++d) {
    const std::string block = "rdb" + std::to_string(d);
    for (int j = 0; j < arch.c_layers; ++j) {
      layout.push_back(
          {block + ".conv" + std::to_string(j), arch.growth, arch.g0 + j * arch.growth, 3, 3});
    }
    layout.push_back({block + ".lff", arch.g0, arch.g0 + arch.c_layers * arch.growth, 1, 1});
  }
  layout.push_back({"gff1", arch.g0, arch.d_blocks * arch.g0, 1, 1});
  layout.push_back({"gff2", arch.g0, arch.g0, 3, 3});
  for (int s = 0; s < arch.upsample_stages(); ++s) {
    layout.push_back({"up" + std::to_string(s), 4 * arch.g0, arch.g0, 3, 3});
  }
  layout.push_back({"head", arch.in_channels, arch.g0, 3, 3});
  return layout;
}

NetworkParams NetworkParams::zeros_like(const NetworkParams& other) {
  NetworkParams out;
  out.entries.reserve(other.entries.size());
  for (const Entry& e : other.entries) {
    Entry z;
    z.name = e.name;
    z.kernel = ConvKernel(e.kernel.out_c, e.kernel.in_c, e.kernel.kh, e.kernel.kw);
    z.bias.assign(e.bias.size(), 0.0);
    out.entries.push_back(std::move(z));
  }
  return out;
}

void NetworkParams::fill(double v) {
  for (Entry& e : entries) {
    std::fill(e.kernel.w.begin(), e.kernel.w.end(), v);
    std::fill(e.bias.begin(), e.bias.end(), v);
  }
}

size_t NetworkParams::scalar_count() const {
  size_t n = 0;
  for (const Entry& e : entries) n += e.kernel.w.size() + e.bias.size();
  return n;
}

bool NetworkParams::all_finite() const {
  for (const Entry& e : entries) {
    for (double v : e.kernel.w) {
      if (!std::isfinite(v)) return false;
    }
    for (double v : e.bias) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

NetworkParams init_params(const NetArch& arch, uint64_t seed) {
  Rng rng(derive_seed(seed, "init"));
  NetworkParams params;
  for (const LayerSpec& spec : layer_layout(arch)) {
    NetworkParams::Entry e;
    e.name = spec.name;
    e.kernel = ConvKernel(spec.out_c, spec.in_c, spec.kh, spec.kw);
    const double limit = std::sqrt(1.0 / (static_cast<double>(spec.in_c) * spec.kh * spec.kw));
    for (double& w : e.kernel.w) w = rng.uniform(-limit, limit);
    e.bias.assign(spec.out_c, 0.0);
    params.entries.push_back(std::move(e));
  }
  return params;
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::input(Tensor3 v) {
  Node n;
  n.op = Op::input;
  n.val = std::move(v);
  return push(std::move(n));
}

int Tape::conv(int x, int param_index) {
  const NetworkParams::Entry& e = params_->entries.at(param_index);
  Node n;
  n.op = Op::conv;
  n.ins = {x};
  n.param = param_index;
  n.val = conv2d_forward(nodes_[x].val, e.kernel, e.bias);
  return push(std::move(n));
}

int Tape::relu(int x) {
  Node n;
  n.op = Op::relu;
  n.ins = {x};
  n.val = relu_forward(nodes_[x].val);
  return push(std::move(n));
}

int Tape::concat(const std::vector<int>& xs) {
  Node n;
  n.op = Op::concat;
  n.ins = xs;
  std::vector<const Tensor3*> parts;
  parts.reserve(xs.size());
  for (int id : xs) parts.push_back(&nodes_[id].val);
  n.val = concat_channels(parts);
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  const Tensor3& ta = nodes_[a].val;
  const Tensor3& tb = nodes_[b].val;
  if (!ta.same_shape(tb)) fail("dimension_error", "residual add shape mismatch");
  Node n;
  n.op = Op::add;
  n.ins = {a, b};
  n.val = ta;
  for (size_t p = 0; p < n.val.data.size(); ++p) n.val.data[p] += tb.data[p];
  return push(std::move(n));
}

int Tape::pixel_shuffle2(int x) {
  Node n;
  n.op = Op::pixel_shuffle2;
  n.ins = {x};
  n.val = pixel_shuffle_x2(nodes_[x].val);
  return push(std::move(n));
}

int Tape::softmax(int x) {
  Node n;
  n.op = Op::softmax;
  n.ins = {x};
  n.val = softmax_channels(nodes_[x].val);
  return push(std::move(n));
}

void Tape::accumulate(int id, const Tensor3& g) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
    return;
  }
  for (size_t p = 0; p < n.grad.data.size(); ++p) n.grad.data[p] += g.data[p];
}

const Tensor3& Tape::grad(int id) const {
  if (!nodes_[id].has_grad) fail("training_error", "node has no gradient; run backward first");
  return nodes_[id].grad;
}

void Tape::backward(int out_id, const Tensor3& seed, NetworkParams* pg) {
  accumulate(out_id, seed);
  for (int id = out_id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.has_grad) continue;
    switch (n.op) {
      case Op::input:
        break;
      case Op::conv: {
        const NetworkParams::Entry& e = params_->entries[n.param];
        Tensor3 gx;
        ConvKernel* gk = nullptr;
        std::vector<double>* gb = nullptr;
        if (pg) {
          gk = &pg->entries[n.param].kernel;
          gb = &pg->entries[n.param].bias;
        }
        conv2d_backward(nodes_[n.ins[0]].val, e.kernel, n.grad, &gx, gk, gb);
        accumulate(n.ins[0], gx);
        break;
      }
      case Op::relu:
        accumulate(n.ins[0], relu_backward(nodes_[n.ins[0]].val, n.grad));
        break;
      case Op::concat: {
        size_t off = 0;
        for (int src : n.ins) {
          const Tensor3& sv = nodes_[src].val;
          Tensor3 g(sv.channels, sv.height, sv.width);
          std::copy(n.grad.data.begin() + off, n.grad.data.begin() + off + g.data.size(),
                    g.data.begin());
          off += g.data.size();
          accumulate(src, g);
        }
        break;
      }
      case Op::add:
        accumulate(n.ins[0], n.grad);
        accumulate(n.ins[1], n.grad);
        break;
      case Op::pixel_shuffle2:
        accumulate(n.ins[0], shuffle_down_x2(n.grad));
        break;
      case Op::softmax:
        accumulate(n.ins[0], softmax_backward(n.val, n.grad));
        break;
    }
  }
}

// ---------------------------------------------------------------------------
// Forward graph
// ---------------------------------------------------------------------------

int build_forward(Tape& tape, const NetArch& arch, Tensor3 input) {
  int next_param = 0;
  auto conv = [&](int x) { return tape.conv(x, next_param++); };

  const int x = tape.input(std::move(input));
  const int f_shallow = conv(x);       // sfe1
  const int f0 = conv(f_shallow);      // sfe2

  std::vector<int> block_outs;
  int block_in = f0;
  for (int d = 0; d < arch.d_blocks; ++d) {
    std::vector<int> feats = {block_in};
    for (int j = 0; j < arch.c_layers; ++j) {
      const int cat = feats.size() == 1 ? feats[0] : tape.concat(feats);
      feats.push_back(tape.relu(conv(cat)));
    }
    const int all = tape.concat(feats);
    const int fused = conv(all);                    // 1x1 local fusion
    block_in = tape.add(fused, block_in);           // local residual
    block_outs.push_back(block_in);
  }

  const int gcat = block_outs.size() == 1 ? block_outs[0] : tape.concat(block_outs);
  const int g1 = conv(gcat);                        // gff1 (1x1)
  const int g2 = conv(g1);                          // gff2 (3x3)
  int u = tape.add(g2, f_shallow);                  // global residual

  for (int s = 0; s < arch.upsample_stages(); ++s) {
    u = tape.pixel_shuffle2(conv(u));
  }
  const int head = conv(u);
  return tape.softmax(head);
}

AbundanceMap forward(const NetworkParams& params, const NetArch& arch, const AbundanceMap& a_lr) {
  arch.validate();
  if (a_lr.materials() != arch.in_channels) {
    fail("dimension_error", "input channels " + std::to_string(a_lr.materials()) +
                                " != arch.in_channels " + std::to_string(arch.in_channels));
  }
  if (params.entries.size() != layer_layout(arch).size()) {
    fail("dimension_error", "params do not match arch layout");
  }
  Tape tape(&params);
  const int out = build_forward(tape, arch, a_lr.inner);
  return AbundanceMap(tape.value(out), true);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

std::string shape_str(const ConvKernel& k) {
  return std::to_string(k.out_c) + "x" + std::to_string(k.in_c) + "x" + std::to_string(k.kh) +
         "x" + std::to_string(k.kw);
}

Tensor3 kernel_to_tensor(const ConvKernel& k) {
  Tensor3 t(k.out_c, k.in_c, k.kh * k.kw);
  t.data = k.w;
  return t;
}

Tensor3 bias_to_tensor(const std::vector<double>& b) {
  Tensor3 t(1, 1, static_cast<int>(b.size()));
  t.data = b;
  return t;
}

void save_param_set(const std::string& dir, const std::string& prefix,
                    const NetworkParams& params) {
  for (const NetworkParams::Entry& e : params.entries) {
    save_tensor_f64(kernel_to_tensor(e.kernel), (fs::path(dir) / (prefix + e.name + ".kernel.htf")).string());
    save_tensor_f64(bias_to_tensor(e.bias), (fs::path(dir) / (prefix + e.name + ".bias.htf")).string());
  }
}

void load_param_set(const std::string& dir, const std::string& prefix, NetworkParams& params) {
  for (NetworkParams::Entry& e : params.entries) {
    const std::string kpath = (fs::path(dir) / (prefix + e.name + ".kernel.htf")).string();
    const Tensor3 kt = load_tensor(kpath);
    if (kt.data.size() != e.kernel.w.size()) {
      fail("format_error", kpath + ": kernel size mismatch for " + e.name);
    }
    e.kernel.w = kt.data;
    const std::string bpath = (fs::path(dir) / (prefix + e.name + ".bias.htf")).string();
    const Tensor3 bt = load_tensor(bpath);
    if (bt.data.size() != e.bias.size()) {
      fail("format_error", bpath + ": bias size mismatch for " + e.name);
    }
    e.bias = bt.data;
  }
}

}  // namespace

void save_checkpoint(const std::string& dir, const NetworkParams& params,
                     const CheckpointMeta& meta, const NetworkParams* adam_m,
                     const NetworkParams* adam_v) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail("io_error", "cannot create " + dir + ": " + ec.message());

  std::ofstream index((fs::path(dir) / "index.txt").string(), std::ios::trunc);
  if (!index) fail("io_error", "cannot write checkpoint index in " + dir);

  const NetArch& a = meta.arch;
  index << "arch.in_channels=" << a.in_channels << "\n";
  index << "arch.g0=" << a.g0 << "\n";
  index << "arch.d_blocks=" << a.d_blocks << "\n";
  index << "arch.c_layers=" << a.c_layers << "\n";
  index << "arch.growth=" << a.growth << "\n";
  index << "arch.scale=" << a.scale << "\n";
  index << "init.law=" << meta.init_law << "\n";
  index << "init.seed=" << format_u64(meta.init_seed) << "\n";
  index << "train.step=" << meta.step << "\n";
  index << "train.epoch=" << meta.epoch << "\n";
  index << "train.has_optimizer=" << (adam_m && adam_v ? 1 : 0) << "\n";
  index << "train.rng_state=" << format_u64(meta.rng_state[0]) << ":"
        << format_u64(meta.rng_state[1]) << ":" << format_u64(meta.rng_state[2]) << ":"
        << format_u64(meta.rng_state[3]) << "\n";
  for (const NetworkParams::Entry& e : params.entries) {
    index << e.name << ".kernel, " << shape_str(e.kernel) << ", " << e.name << ".kernel.htf\n";
    index << e.name << ".bias, " << e.kernel.out_c << ", " << e.name << ".bias.htf\n";
  }
  if (!index) fail("io_error", "write failed for checkpoint index in " + dir);
  index.close();

  save_param_set(dir, "", params);
  if (adam_m && adam_v) {
    save_param_set(dir, "adam_m.", *adam_m);
    save_param_set(dir, "adam_v.", *adam_v);
  }
}

NetworkParams load_checkpoint(const std::string& dir, CheckpointMeta* meta, NetworkParams* adam_m,
                              NetworkParams* adam_v) {
  const std::string index_path = (fs::path(dir) / "index.txt").string();
  std::ifstream in(index_path);
  if (!in) fail("io_error", "cannot open checkpoint index " + index_path);

  KeyValueConfig kv;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line.find('=') == std::string::npos) continue;
    const size_t eq = line.find('=');
    kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }

  CheckpointMeta m;
  m.arch.in_channels = static_cast<int>(kv.get_i64("arch.in_channels", 6));
  m.arch.g0 = static_cast<int>(kv.get_i64("arch.g0", 32));
  m.arch.d_blocks = static_cast<int>(kv.get_i64("arch.d_blocks", 4));
  m.arch.c_layers = static_cast<int>(kv.get_i64("arch.c_layers", 4));
  m.arch.growth = static_cast<int>(kv.get_i64("arch.growth", 16));
  m.arch.scale = static_cast<int>(kv.get_i64("arch.scale", 4));
  m.init_law = kv.get_string("init.law", "uniform-fan-in");
  m.init_seed = kv.get_u64("init.seed", 0);
  m.step = kv.get_i64("train.step", 0);
  m.epoch = static_cast<int>(kv.get_i64("train.epoch", 0));
  m.has_optimizer = kv.get_i64("train.has_optimizer", 0) != 0;
  const auto rng_parts = split(kv.get_string("train.rng_state", "0:0:0:0"), ':');
  if (rng_parts.size() == 4) {
    for (int k = 0; k < 4; ++k) m.rng_state[k] = parse_u64(rng_parts[k]);
  }

  NetworkParams params = init_params(m.arch, 0);
  load_param_set(dir, "", params);
  if (m.has_optimizer && adam_m && adam_v) {
    *adam_m = NetworkParams::zeros_like(params);
    *adam_v = NetworkParams::zeros_like(params);
    load_param_set(dir, "adam_m.", *adam_m);
    load_param_set(dir, "adam_v.", *adam_v);
  }
  if (meta) *meta = m;
  return params;
}

}  // namespace hyperleaf::srnet
