#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hyperleaf/rng.hpp"
#include "hyperleaf/srnet/ops.hpp"
#include "hyperleaf/tensor.hpp"

namespace hyperleaf::srnet {

// Compact RDN-style abundance super-resolution network:
//   two 3x3 shallow feature convs
//   -> d_blocks residual dense blocks (c_layers 3x3 convs with growth-wide
//      outputs and dense concatenation, 1x1 local fusion, local residual)
//   -> concat of block outputs -> 1x1 + 3x3 global fusion
//   -> global residual with the first shallow feature
//   -> log2(scale) stages of [3x3 conv to 4*g0, pixel shuffle x2]
//   -> 3x3 conv to N channels -> channel softmax (ASC layer).
struct NetArch {
  int in_channels = 6;  // N
  int g0 = 32;          // base feature width
  int d_blocks = 4;
  int c_layers = 4;
  int growth = 16;
  int scale = 4;  // power of two in {2, 4, 8}

  int upsample_stages() const;
  void validate() const;
};

struct LayerSpec {
  std::string name;
  int out_c = 0;
  int in_c = 0;
  int kh = 0;
  int kw = 0;
};

// Fixed parameter order shared by init, forward, Adam, and checkpoints.
std::vector<LayerSpec> layer_layout(const NetArch& arch);

struct NetworkParams {
  struct Entry {
    std::string name;
    ConvKernel kernel;
    std::vector<double> bias;
  };
  std::vector<Entry> entries;

  static NetworkParams zeros_like(const NetworkParams& other);
  void fill(double v);
  size_t scalar_count() const;
  bool all_finite() const;
};

// Kernel weights Uniform(-limit, limit) with limit = sqrt(1 / fan_in),
// biases zero. Draw order follows layer_layout, so a seed pins every weight.
NetworkParams init_params(const NetArch& arch, uint64_t seed);

// -----------------------------------------------------------------------
// Reverse-mode tape over the primitive ops. Forward records nodes; backward
// walks them in reverse, accumulating into a NetworkParams-shaped gradient.
// -----------------------------------------------------------------------
class Tape {
 public:
  explicit Tape(const NetworkParams* params) : params_(params) {}

  int input(Tensor3 v);
  int conv(int x, int param_index);
  int relu(int x);
  int concat(const std::vector<int>& xs);
  int add(int a, int b);
  int pixel_shuffle2(int x);
  int softmax(int x);

  const Tensor3& value(int id) const { return nodes_[id].val; }

  // Seeds d(loss)/d(node out_id) and propagates. Parameter gradients are
  // accumulated into `pg` (same layout as the params); input gradients are
  // afterwards available via grad().
  void backward(int out_id, const Tensor3& seed, NetworkParams* pg);

  const Tensor3& grad(int id) const;

 private:
  enum class Op { input, conv, relu, concat, add, pixel_shuffle2, softmax };
  struct Node {
    Op op;
    std::vector<int> ins;
    int param = -1;
    Tensor3 val;
    Tensor3 grad;
    bool has_grad = false;
  };

  int push(Node n);
  void accumulate(int id, const Tensor3& g);

  const NetworkParams* params_;
  std::vector<Node> nodes_;
};

// Runs the whole network on one LR abundance stack; returns the tape node id
// of the softmax output. Exposed so training can attach the loss gradient.
int build_forward(Tape& tape, const NetArch& arch, Tensor3 input);

// Plain forward pass. Output is (N, scale*h, scale*w), ASC/ANC by
// construction.
AbundanceMap forward(const NetworkParams& params, const NetArch& arch, const AbundanceMap& a_lr);

// -----------------------------------------------------------------------
// Checkpoints: directory of one HTF (float64) tensor per parameter plus
// index.txt rows "name, shape, file". The index header carries the arch,
// the init law, and (for training resume) optimizer step, RNG state, and
// epoch. Kernels are stored as (out_c, in_c, kh*kw) tensors.
// -----------------------------------------------------------------------
struct CheckpointMeta {
  NetArch arch;
  uint64_t init_seed = 0;
  std::string init_law = "uniform-fan-in";
  long step = 0;
  int epoch = 0;
  bool has_optimizer = false;
  std::array<uint64_t, 4> rng_state{};
};

void save_checkpoint(const std::string& dir, const NetworkParams& params,
                     const CheckpointMeta& meta, const NetworkParams* adam_m = nullptr,
                     const NetworkParams* adam_v = nullptr);

NetworkParams load_checkpoint(const std::string& dir, CheckpointMeta* meta = nullptr,
                              NetworkParams* adam_m = nullptr, NetworkParams* adam_v = nullptr);

}  // namespace hyperleaf::srnet
