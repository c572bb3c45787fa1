#include "funginet/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "funginet/tensor_ops.hpp"

namespace funginet {

void kaiming_uniform_fill(Tensor& t, std::size_t fan_in, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t.set_value_at(i, rng.uniform(-bound, bound));
}

int ModelGraph::append(Node node) {
  nodes_.push_back(std::move(node));
  output_node_ = static_cast<int>(nodes_.size()) - 1;
  return output_node_;
}

const ModelGraph::Node& ModelGraph::checked_node(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw std::invalid_argument("graph: node id " + std::to_string(id) + " out of range");
  return nodes_[static_cast<std::size_t>(id)];
}

void ModelGraph::register_param(const std::string& name, const Tensor& t, bool trainable) {
  if (param_index_.count(name)) {
    throw std::invalid_argument("graph: duplicate parameter name '" + name + "'");
  }
  param_index_[name] = params_.size();
  params_.push_back({name, t, trainable});
}

int ModelGraph::add_input(std::size_t channels, std::size_t height, std::size_t width) {
  if (input_node_ != -1) throw std::logic_error("graph: input already declared");
  Node n;
  n.kind = LayerKind::input;
  n.out_shape = {channels, height, width};
  input_node_ = append(std::move(n));
  return input_node_;
}

int ModelGraph::add_conv(const std::string& name, int input, std::size_t out_channels, int kernel,
                         int stride, int pad, bool with_bias, Rng& rng) {
  const Node& src = checked_node(input);
  if (src.out_shape.size() != 3)
    throw std::invalid_argument("graph: conv input must be (C,H,W) at node '" + name + "'");
  std::size_t in_ch = src.out_shape[0];
  Node n;
  n.kind = LayerKind::conv;
  n.name = name;
  n.inputs = {input};
  n.kernel_h = n.kernel_w = kernel;
  n.stride_h = n.stride_w = stride;
  n.pad_h = n.pad_w = pad;
  n.weight = Tensor::zeros({out_channels, in_ch, static_cast<std::size_t>(kernel),
                            static_cast<std::size_t>(kernel)});
  kaiming_uniform_fill(n.weight, in_ch * static_cast<std::size_t>(kernel * kernel), rng);
  n.weight.set_requires_grad(true);
  register_param(name + ".weight", n.weight, true);
  if (with_bias) {
    n.bias = Tensor::zeros({out_channels});
    n.bias.set_requires_grad(true);
    register_param(name + ".bias", n.bias, true);
  }
  std::size_t oh = conv_out_extent(src.out_shape[1], static_cast<std::size_t>(kernel),
                                   static_cast<std::size_t>(stride), static_cast<std::size_t>(pad));
  std::size_t ow = conv_out_extent(src.out_shape[2], static_cast<std::size_t>(kernel),
                                   static_cast<std::size_t>(stride), static_cast<std::size_t>(pad));
  n.out_shape = {out_channels, oh, ow};
  return append(std::move(n));
}

int ModelGraph::add_batchnorm(const std::string& name, int input) {
  const Node& src = checked_node(input);
  if (src.out_shape.size() != 3)
    throw std::invalid_argument("graph: batchnorm input must be (C,H,W) at node '" + name + "'");
  std::size_t ch = src.out_shape[0];
  Node n;
  n.kind = LayerKind::batchnorm;
  n.name = name;
  n.inputs = {input};
  n.weight = Tensor::full({ch}, 1.0);
  n.bias = Tensor::zeros({ch});
  n.running_mean = Tensor::zeros({ch});
  n.running_var = Tensor::full({ch}, 1.0);
  n.weight.set_requires_grad(true);
  n.bias.set_requires_grad(true);
  register_param(name + ".weight", n.weight, true);
  register_param(name + ".bias", n.bias, true);
  register_param(name + ".running_mean", n.running_mean, false);
  register_param(name + ".running_var", n.running_var, false);
  n.out_shape = src.out_shape;
  return append(std::move(n));
}

int ModelGraph::add_relu(int input) {
  Node n;
  n.kind = LayerKind::relu;
  n.inputs = {input};
  n.out_shape = checked_node(input).out_shape;
  return append(std::move(n));
}

namespace {

std::vector<std::size_t> pooled_shape(const std::vector<std::size_t>& in, int kernel, int stride,
                                      int pad) {
  if (in.size() != 3) throw std::invalid_argument("graph: pool input must be (C,H,W)");
  std::size_t oh = conv_out_extent(in[1], static_cast<std::size_t>(kernel),
                                   static_cast<std::size_t>(stride), static_cast<std::size_t>(pad));
  std::size_t ow = conv_out_extent(in[2], static_cast<std::size_t>(kernel),
                                   static_cast<std::size_t>(stride), static_cast<std::size_t>(pad));
  return {in[0], oh, ow};
}

}  // namespace

int ModelGraph::add_maxpool(int input, int kernel, int stride, int pad) {
  Node n;
  n.kind = LayerKind::maxpool;
  n.inputs = {input};
  n.kernel_h = n.kernel_w = kernel;
  n.stride_h = n.stride_w = stride;
  n.pad_h = n.pad_w = pad;
  n.out_shape = pooled_shape(checked_node(input).out_shape, kernel, stride, pad);
  return append(std::move(n));
}

int ModelGraph::add_avgpool(int input, int kernel, int stride, int pad) {
  Node n;
  n.kind = LayerKind::avgpool;
  n.inputs = {input};
  n.kernel_h = n.kernel_w = kernel;
  n.stride_h = n.stride_w = stride;
  n.pad_h = n.pad_w = pad;
  n.out_shape = pooled_shape(checked_node(input).out_shape, kernel, stride, pad);
  return append(std::move(n));
}

int ModelGraph::add_global_avgpool(int input) {
  const Node& src = checked_node(input);
  if (src.out_shape.size() != 3)
    throw std::invalid_argument("graph: global average pool input must be (C,H,W)");
  Node n;
  n.kind = LayerKind::global_avgpool;
  n.inputs = {input};
  n.out_shape = {src.out_shape[0], 1, 1};
  return append(std::move(n));
}

int ModelGraph::add_dropout(int input, double rate) {
  Node n;
  n.kind = LayerKind::dropout;
  n.inputs = {input};
  n.rate = rate;
  n.out_shape = checked_node(input).out_shape;
  return append(std::move(n));
}

int ModelGraph::add_flatten(int input) {
  const Node& src = checked_node(input);
  Node n;
  n.kind = LayerKind::flatten;
  n.inputs = {input};
  n.out_shape = {shape_product(src.out_shape)};
  return append(std::move(n));
}

int ModelGraph::add_linear(const std::string& name, int input, std::size_t out_features,
                           Rng& rng) {
  const Node& src = checked_node(input);
  if (src.out_shape.size() != 1)
    throw std::invalid_argument("graph: linear input must be flattened at node '" + name + "'");
  std::size_t in_features = src.out_shape[0];
  Node n;
  n.kind = LayerKind::linear;
  n.name = name;
  n.inputs = {input};
  n.weight = Tensor::zeros({out_features, in_features});
  kaiming_uniform_fill(n.weight, in_features, rng);
  n.weight.set_requires_grad(true);
  n.bias = Tensor::zeros({out_features});
  n.bias.set_requires_grad(true);
  register_param(name + ".weight", n.weight, true);
  register_param(name + ".bias", n.bias, true);
  n.out_shape = {out_features};
  return append(std::move(n));
}

int ModelGraph::add_residual(int a, int b) {
  const Node& na = checked_node(a);
  const Node& nb = checked_node(b);
  if (na.out_shape != nb.out_shape) {
    throw std::invalid_argument("graph: residual join of mismatched shapes " +
                                shape_to_string(na.out_shape) + " and " +
                                shape_to_string(nb.out_shape));
  }
  Node n;
  n.kind = LayerKind::add_join;
  n.inputs = {a, b};
  n.out_shape = na.out_shape;
  return append(std::move(n));
}

int ModelGraph::add_concat(const std::vector<int>& inputs) {
  if (inputs.empty()) throw std::invalid_argument("graph: concat needs at least one input");
  std::vector<std::size_t> shape = checked_node(inputs[0]).out_shape;
  if (shape.size() != 3) throw std::invalid_argument("graph: concat inputs must be (C,H,W)");
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    const auto& s = checked_node(inputs[i]).out_shape;
    if (s.size() != 3 || s[1] != shape[1] || s[2] != shape[2]) {
      throw std::invalid_argument("graph: concat spatial mismatch " + shape_to_string(shape) +
                                  " vs " + shape_to_string(s));
    }
    shape[0] += s[0];
  }
  Node n;
  n.kind = LayerKind::concat_join;
  n.inputs = inputs;
  n.out_shape = shape;
  return append(std::move(n));
}

void ModelGraph::set_output(int node) {
  checked_node(node);
  output_node_ = node;
}

std::vector<std::size_t> ModelGraph::input_signature() const {
  if (input_node_ < 0) throw std::logic_error("graph: no input node");
  return nodes_[static_cast<std::size_t>(input_node_)].out_shape;
}

std::size_t ModelGraph::output_dim() const {
  if (output_node_ < 0) throw std::logic_error("graph: empty graph");
  const auto& s = nodes_[static_cast<std::size_t>(output_node_)].out_shape;
  if (s.size() != 1) throw std::logic_error("graph: output node is not a feature vector");
  return s[0];
}

Tensor ModelGraph::forward(const Tensor& batch, Mode mode, Rng* rng) {
  if (input_node_ < 0) throw std::logic_error("graph: no input node");
  const auto sig = input_signature();
  if (batch.rank() != 4 || batch.extent(1) != sig[0] || batch.extent(2) != sig[1] ||
      batch.extent(3) != sig[2]) {
    std::ostringstream os;
    os << "forward: expected input (N," << sig[0] << "," << sig[1] << "," << sig[2] << "), got "
       << shape_to_string(batch.shape());
    throw std::invalid_argument(os.str());
  }

  // Remaining-consumer counts let eval-mode forwards release activations early.
  std::vector<int> uses(nodes_.size(), 0);
  for (const Node& n : nodes_)
    for (int in : n.inputs) uses[static_cast<std::size_t>(in)]++;
  uses[static_cast<std::size_t>(output_node_)]++;

  std::vector<Tensor> values(nodes_.size());
  std::size_t batch_n = batch.extent(0);

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    auto in_val = [&](std::size_t k) -> Tensor& {
      return values[static_cast<std::size_t>(n.inputs[k])];
    };
    Tensor out;
    switch (n.kind) {
      case LayerKind::input:
        out = batch;
        break;
      case LayerKind::conv: {
        ConvParams p;
        p.weights = n.weight;
        p.bias = n.bias;
        p.stride_h = n.stride_h;
        p.stride_w = n.stride_w;
        p.pad_h = n.pad_h;
        p.pad_w = n.pad_w;
        out = conv2d(in_val(0), p);
        break;
      }
      case LayerKind::batchnorm: {
        BatchNormState s;
        s.gamma = n.weight;
        s.beta = n.bias;
        s.running_mean = n.running_mean;
        s.running_var = n.running_var;
        s.momentum = n.bn_momentum;
        s.epsilon = n.bn_eps;
        out = batchnorm2d(in_val(0), s, mode);
        break;
      }
      case LayerKind::relu:
        out = relu(in_val(0));
        break;
      case LayerKind::maxpool: {
        PoolSpec s{PoolKind::max, n.kernel_h, n.kernel_w, n.stride_h, n.stride_w, n.pad_h,
                   n.pad_w};
        out = pool2d(in_val(0), s);
        break;
      }
      case LayerKind::avgpool: {
        PoolSpec s{PoolKind::average, n.kernel_h, n.kernel_w, n.stride_h, n.stride_w, n.pad_h,
                   n.pad_w};
        out = pool2d(in_val(0), s);
        break;
      }
      case LayerKind::global_avgpool: {
        PoolSpec s;
        s.kind = PoolKind::global_average;
        out = pool2d(in_val(0), s);
        break;
      }
      case LayerKind::dropout: {
        if (mode == Mode::train && n.rate > 0.0 && rng == nullptr)
          throw std::invalid_argument("forward: train-mode dropout requires an rng");
        DropoutSpec s{n.rate};
        static Rng unused_rng(0);
        out = dropout(in_val(0), s, mode, rng ? *rng : unused_rng);
        break;
      }
      case LayerKind::flatten:
        out = reshape(in_val(0), {batch_n, n.out_shape[0]});
        break;
      case LayerKind::linear:
        out = linear(in_val(0), n.weight, n.bias);
        break;
      case LayerKind::add_join:
        out = add(in_val(0), in_val(1));
        break;
      case LayerKind::concat_join: {
        std::vector<Tensor> ins;
        ins.reserve(n.inputs.size());
        for (int id : n.inputs) ins.push_back(values[static_cast<std::size_t>(id)]);
        out = concat(ins, 1);
        break;
      }
    }
    values[i] = std::move(out);
    for (int id : n.inputs) {
      if (--uses[static_cast<std::size_t>(id)] == 0) values[static_cast<std::size_t>(id)] = Tensor();
    }
  }
  return values[static_cast<std::size_t>(output_node_)];
}

ParamCounts ModelGraph::count_params() const {
  ParamCounts c;
  for (const ParamEntry& p : params_) {
    c.total += p.tensor.size();
    if (p.trainable) c.trainable += p.tensor.size();
  }
  return c;
}

void ModelGraph::apply_weights(const std::vector<std::pair<std::string, Tensor>>& named,
                               bool strict) {
  std::vector<bool> seen(params_.size(), false);
  for (const auto& [name, tensor] : named) {
    auto it = param_index_.find(name);
    if (it == param_index_.end()) {
      throw std::invalid_argument("apply_weights: unknown parameter '" + name + "'");
    }
    ParamEntry& entry = params_[it->second];
    if (entry.tensor.shape() != tensor.shape()) {
      throw std::invalid_argument("apply_weights: shape mismatch for '" + name + "': model " +
                                  shape_to_string(entry.tensor.shape()) + ", provided " +
                                  shape_to_string(tensor.shape()));
    }
    if (tensor.dtype() == entry.tensor.dtype()) {
      entry.tensor.copy_data_from(tensor);
    } else {
      Tensor converted = tensor.to_dtype(entry.tensor.dtype());
      entry.tensor.copy_data_from(converted);
    }
    seen[it->second] = true;
  }
  if (strict) {
    std::string missing;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (!seen[i]) {
        if (!missing.empty()) missing += ", ";
        missing += params_[i].name;
      }
    }
    if (!missing.empty()) {
      throw std::invalid_argument("apply_weights: strict mode missing parameters: " + missing);
    }
  }
}

std::vector<Tensor> ModelGraph::trainable_tensors() const {
  std::vector<Tensor> out;
  for (const ParamEntry& p : params_) {
    if (p.trainable && p.tensor.requires_grad()) out.push_back(p.tensor);
  }
  return out;
}

const Tensor* ModelGraph::find_param(const std::string& name) const {
  auto it = param_index_.find(name);
  return it == param_index_.end() ? nullptr : &params_[it->second].tensor;
}

void ModelGraph::freeze_backbone() {
  if (head_prefix_.empty()) throw std::logic_error("freeze_backbone: no head prefix declared");
  for (ParamEntry& p : params_) {
    if (!p.trainable) continue;
    bool is_head = p.name.rfind(head_prefix_, 0) == 0;
    Tensor t = p.tensor;
    t.set_requires_grad(is_head);
  }
}

std::vector<Tensor> ModelGraph::snapshot_parameters() const {
  std::vector<Tensor> snap;
  snap.reserve(params_.size());
  for (const ParamEntry& p : params_) snap.push_back(p.tensor.clone());
  return snap;
}

void ModelGraph::restore_parameters(const std::vector<Tensor>& snapshot) {
  if (snapshot.size() != params_.size())
    throw std::invalid_argument("restore_parameters: snapshot size mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i)
    params_[i].tensor.copy_data_from(snapshot[i]);
}

}  // namespace funginet
