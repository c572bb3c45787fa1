#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "funginet/layers.hpp"
#include "funginet/rng.hpp"
#include "funginet/tensor.hpp"

namespace funginet {

enum class LayerKind {
  input,
  conv,
  batchnorm,
  relu,
  maxpool,
  avgpool,
  global_avgpool,
  dropout,
  flatten,
  linear,
  add_join,
  concat_join,
};

struct ParamEntry {
  std::string name;  // dotted path, e.g. "layer1.0.conv2.weight"
  Tensor tensor;
  bool trainable;  // false for batchnorm running statistics
};

struct ParamCounts {
  std::size_t trainable = 0;
  std::size_t total = 0;
};

// An architecture as an ordered, acyclic graph of named layers. Nodes are
// appended in forward-evaluation order; join nodes (residual add, channel
// concat) reference earlier nodes. Parameter names are unique dotted paths;
// the same names appear in checkpoints.
class ModelGraph {
 public:
  struct Node {
    LayerKind kind;
    std::string name;  // parameter scope; empty for parameterless layers
    std::vector<int> inputs;
    int kernel_h = 0, kernel_w = 0;
    int stride_h = 1, stride_w = 1;
    int pad_h = 0, pad_w = 0;
    double rate = 0.0;  // dropout
    double bn_momentum = 0.1, bn_eps = 1e-5;
    Tensor weight, bias;                   // conv/linear; batchnorm gamma/beta
    Tensor running_mean, running_var;      // batchnorm only
    std::vector<std::size_t> out_shape;    // per-sample output shape
  };

  int add_input(std::size_t channels, std::size_t height, std::size_t width);
  int add_conv(const std::string& name, int input, std::size_t out_channels, int kernel,
               int stride, int pad, bool with_bias, Rng& rng);
  int add_batchnorm(const std::string& name, int input);
  int add_relu(int input);
  int add_maxpool(int input, int kernel, int stride, int pad);
  int add_avgpool(int input, int kernel, int stride, int pad);
  int add_global_avgpool(int input);
  int add_dropout(int input, double rate);
  int add_flatten(int input);
  int add_linear(const std::string& name, int input, std::size_t out_features, Rng& rng);
  int add_residual(int a, int b);
  int add_concat(const std::vector<int>& inputs);

  // Declares which node produces the logits; defaults to the last node.
  void set_output(int node);
  // Parameter-name prefix of the classifier head (for freeze_backbone).
  void set_head_prefix(std::string prefix) { head_prefix_ = std::move(prefix); }

  Tensor forward(const Tensor& batch, Mode mode, Rng* rng = nullptr);

  ParamCounts count_params() const;
  // Replaces parameter values in place. In strict mode every model parameter
  // must be provided; unknown names and shape mismatches always error.
  void apply_weights(const std::vector<std::pair<std::string, Tensor>>& named,
                     bool strict = true);

  const std::vector<ParamEntry>& parameters() const { return params_; }
  std::vector<Tensor> trainable_tensors() const;
  const Tensor* find_param(const std::string& name) const;
  void freeze_backbone();

  std::vector<Tensor> snapshot_parameters() const;
  void restore_parameters(const std::vector<Tensor>& snapshot);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<std::size_t>& node_shape(int id) const { return nodes_.at(id).out_shape; }
  std::vector<std::size_t> input_signature() const;  // (C,H,W)
  std::size_t output_dim() const;

  // Provenance carried into checkpoints.
  std::string architecture = "custom";
  int declared_classes = 0;
  std::uint64_t creation_seed = 0;

 private:
  std::vector<Node> nodes_;
  std::vector<ParamEntry> params_;
  std::unordered_map<std::string, std::size_t> param_index_;
  int input_node_ = -1;
  int output_node_ = -1;
  std::string head_prefix_;

  int append(Node node);
  void register_param(const std::string& name, const Tensor& t, bool trainable);
  const Node& checked_node(int id) const;
};

// Fan-in Kaiming-uniform draw: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
void kaiming_uniform_fill(Tensor& t, std::size_t fan_in, Rng& rng);

}  // namespace funginet
