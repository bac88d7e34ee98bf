#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "crowdmap/binio.hpp"
#include "crowdmap/density_core.hpp"
#include "crowdmap/density_map.hpp"
#include "crowdmap/errors.hpp"
#include "crowdmap/image.hpp"
#include "crowdmap/parallel.hpp"
#include "crowdmap/tensor.hpp"
#include "crowdmap/tensor_nn.hpp"

namespace crowdmap {

// ---------------------------------------------------------------------------
// Network description

struct LayerDesc {
  enum class Kind { kConv, kPool2 };
  Kind kind = Kind::kConv;
  int kernel = 0;
  int out_channels = 0;

  static LayerDesc conv(int kernel, int out_channels) {
    return LayerDesc{Kind::kConv, kernel, out_channels};
  }
  static LayerDesc pool2() { return LayerDesc{Kind::kPool2, 0, 0}; }

  friend bool operator==(const LayerDesc&, const LayerDesc&) = default;
};

using StreamSpec = std::vector<LayerDesc>;

/// Parallel streams ending at the same 1/4 scale, merged by an implicit
/// 1x1 single-channel fusion convolution.
struct NetworkSpec {
  int in_channels = 1;
  std::vector<StreamSpec> streams;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

inline std::string layer_desc_to_string(const LayerDesc& d) {
  if (d.kind == LayerDesc::Kind::kPool2) return "pool2";
  return "conv(" + std::to_string(d.kernel) + "," +
         std::to_string(d.out_channels) + ")";
}

inline LayerDesc parse_layer_desc(const std::string& s) {
  if (s == "pool2") return LayerDesc::pool2();
  int kernel = 0, out = 0;
  if (std::sscanf(s.c_str(), "conv(%d,%d)", &kernel, &out) == 2) {
    return LayerDesc::conv(kernel, out);
  }
  throw ParseError("unknown layer descriptor '" + s +
                   "' (expected conv(k,c) or pool2)");
}

inline int final_conv_channels(const StreamSpec& stream) {
  for (auto it = stream.rbegin(); it != stream.rend(); ++it) {
    if (it->kind == LayerDesc::Kind::kConv) return it->out_channels;
  }
  throw ValidationError("stream has no convolution layers");
}

inline int fusion_input_channels(const NetworkSpec& spec) {
  int total = 0;
  for (const StreamSpec& s : spec.streams) total += final_conv_channels(s);
  return total;
}

inline void validate_network_spec(const NetworkSpec& spec) {
  if (spec.in_channels < 1) {
    throw ValidationError("network spec: in_channels must be positive");
  }
  if (spec.streams.empty() || spec.streams.size() > 4) {
    throw ValidationError("network spec: 1 to 4 streams supported");
  }
  for (std::size_t s = 0; s < spec.streams.size(); ++s) {
    int pools = 0, convs = 0;
    for (const LayerDesc& d : spec.streams[s]) {
      if (d.kind == LayerDesc::Kind::kPool2) {
        ++pools;
      } else {
        ++convs;
        if (d.kernel < 1 || d.kernel % 2 == 0 || d.out_channels < 1) {
          throw ValidationError("network spec: stream " + std::to_string(s) +
                                " has an invalid conv descriptor");
        }
      }
    }
    if (pools != 2) {
      throw ValidationError("network spec: stream " + std::to_string(s) +
                            " must contain exactly two pool2 layers");
    }
    if (convs == 0) {
      throw ValidationError("network spec: stream " + std::to_string(s) +
                            " has no convolutions");
    }
  }
}

/// The four standard architectures. Streams are ordered small to large
/// kernels; dropping the largest-kernel stream of preset(n) gives the
/// stream set of preset(n-1). The four-stream variant has no final
/// per-stream convolution; msnn4_final_conv appends one following the
/// smaller presets' pattern, for probing that omission.
inline NetworkSpec preset(int n_streams, bool msnn4_final_conv = false) {
  if (n_streams < 1 || n_streams > 4) {
    throw ValidationError("preset: stream count must be in 1..4");
  }
  using L = LayerDesc;
  const StreamSpec s1{L::conv(3, 24), L::conv(3, 48), L::pool2(),
                      L::conv(3, 24), L::pool2(),     L::conv(3, 12)};
  const StreamSpec s2{L::conv(7, 20), L::conv(5, 40), L::pool2(),
                      L::conv(5, 20), L::pool2(),     L::conv(5, 10)};
  const StreamSpec s3{L::conv(9, 20), L::conv(7, 32), L::pool2(),
                      L::conv(7, 16), L::pool2(),     L::conv(7, 8)};

  NetworkSpec spec;
  if (n_streams <= 3) {
    if (n_streams >= 1) spec.streams.push_back(s1);
    if (n_streams >= 2) spec.streams.push_back(s2);
    if (n_streams >= 3) spec.streams.push_back(s3);
    return spec;
  }

  // Four streams: each column stops at the second pool.
  spec.streams = {
      StreamSpec{L::conv(3, 24), L::conv(3, 48), L::pool2(), L::conv(3, 24),
                 L::pool2()},
      StreamSpec{L::conv(7, 20), L::conv(5, 40), L::pool2(), L::conv(5, 20),
                 L::pool2()},
      StreamSpec{L::conv(9, 20), L::conv(7, 32), L::pool2(), L::conv(7, 16),
                 L::pool2()},
      StreamSpec{L::conv(11, 12), L::conv(9, 24), L::pool2(), L::conv(9, 12),
                 L::pool2()},
  };
  if (msnn4_final_conv) {
    spec.streams[0].push_back(L::conv(3, 12));
    spec.streams[1].push_back(L::conv(5, 10));
    spec.streams[2].push_back(L::conv(7, 8));
    spec.streams[3].push_back(L::conv(9, 6));
  }
  return spec;
}

/// Divides every conv's output channels by `divisor` (floored, at least 1);
/// topology is unchanged. Used for desk-scale toy variants.
inline NetworkSpec shrink_channels(NetworkSpec spec, int divisor) {
  if (divisor < 1) throw ValidationError("shrink_channels: divisor must be >= 1");
  for (StreamSpec& stream : spec.streams) {
    for (LayerDesc& d : stream) {
      if (d.kind == LayerDesc::Kind::kConv) {
        d.out_channels = std::max(1, d.out_channels / divisor);
      }
    }
  }
  return spec;
}

inline nlohmann::json network_spec_to_json(const NetworkSpec& spec) {
  nlohmann::json streams = nlohmann::json::array();
  for (const StreamSpec& s : spec.streams) {
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerDesc& d : s) layers.push_back(layer_desc_to_string(d));
    streams.push_back(std::move(layers));
  }
  return {{"in_channels", spec.in_channels}, {"streams", std::move(streams)}};
}

inline NetworkSpec network_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("streams")) {
    throw ParseError("network spec: expected object with a streams field");
  }
  NetworkSpec spec;
  spec.in_channels = j.value("in_channels", 1);
  for (const auto& s : j.at("streams")) {
    StreamSpec stream;
    for (const auto& layer : s) {
      if (!layer.is_string()) {
        throw ParseError("network spec: layer descriptors must be strings");
      }
      stream.push_back(parse_layer_desc(layer.get<std::string>()));
    }
    spec.streams.push_back(std::move(stream));
  }
  validate_network_spec(spec);
  return spec;
}

inline NetworkSpec load_network_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return network_spec_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Network

/// Materialized parameters for a NetworkSpec. Parameter order is fixed:
/// streams in declaration order, convs in layer order, weights before bias,
/// fusion last. Checkpoints and the flat parameter vector follow it.
struct Network {
  NetworkSpec spec;
  std::vector<std::vector<ConvLayer>> stream_convs;
  ConvLayer fusion;

  Network() = default;

  explicit Network(NetworkSpec s) : spec(std::move(s)) {
    validate_network_spec(spec);
    for (const StreamSpec& stream : spec.streams) {
      std::vector<ConvLayer> convs;
      int channels = spec.in_channels;
      for (const LayerDesc& d : stream) {
        if (d.kind == LayerDesc::Kind::kConv) {
          convs.push_back(make_conv(d.kernel, channels, d.out_channels));
          channels = d.out_channels;
        }
      }
      stream_convs.push_back(std::move(convs));
    }
    fusion = make_conv(1, fusion_input_channels(spec), 1);
  }

  /// Zero-mean Gaussian weights, zero biases, reproducible from the seed.
  void init_weights(std::uint64_t seed, double stddev = 0.01) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, stddev);
    auto fill = [&](ConvLayer& layer) {
      for (double& w : layer.weights) w = dist(rng);
      std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    };
    for (auto& convs : stream_convs) {
      for (ConvLayer& layer : convs) fill(layer);
    }
    fill(fusion);
  }

  int largest_kernel() const {
    int k = 1;
    for (const auto& convs : stream_convs) {
      for (const ConvLayer& layer : convs) k = std::max(k, layer.kernel);
    }
    return k;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& convs : stream_convs) {
      for (const ConvLayer& layer : convs) n += layer.param_count();
    }
    return n + fusion.param_count();
  }

  struct ParamGroup {
    std::string name;
    std::size_t offset = 0;
    std::size_t count = 0;
  };

  /// Named, contiguous slices of the flat parameter vector.
  std::vector<ParamGroup> param_groups() const {
    std::vector<ParamGroup> groups;
    std::size_t offset = 0;
    auto add = [&](const std::string& name, std::size_t count) {
      groups.push_back(ParamGroup{name, offset, count});
      offset += count;
    };
    for (std::size_t s = 0; s < stream_convs.size(); ++s) {
      for (std::size_t c = 0; c < stream_convs[s].size(); ++c) {
        const std::string base =
            "stream" + std::to_string(s + 1) + ".conv" + std::to_string(c + 1);
        add(base + ".weights", stream_convs[s][c].weights.size());
        add(base + ".bias", stream_convs[s][c].bias.size());
      }
    }
    add("fusion.weights", fusion.weights.size());
    add("fusion.bias", fusion.bias.size());
    return groups;
  }

  void get_params(std::vector<double>& out) const {
    out.clear();
    out.reserve(param_count());
    for (const auto& convs : stream_convs) {
      for (const ConvLayer& layer : convs) {
        out.insert(out.end(), layer.weights.begin(), layer.weights.end());
        out.insert(out.end(), layer.bias.begin(), layer.bias.end());
      }
    }
    out.insert(out.end(), fusion.weights.begin(), fusion.weights.end());
    out.insert(out.end(), fusion.bias.begin(), fusion.bias.end());
  }

  void set_params(const std::vector<double>& flat) {
    if (flat.size() != param_count()) {
      throw ValidationError("set_params: parameter count mismatch");
    }
    std::size_t pos = 0;
    auto take = [&](std::vector<double>& dst) {
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                flat.begin() + static_cast<std::ptrdiff_t>(pos + dst.size()),
                dst.begin());
      pos += dst.size();
    };
    for (auto& convs : stream_convs) {
      for (ConvLayer& layer : convs) {
        take(layer.weights);
        take(layer.bias);
      }
    }
    take(fusion.weights);
    take(fusion.bias);
  }
};

// ---------------------------------------------------------------------------
// Forward / backward

namespace detail {

struct TraceEntry {
  Tensor conv_in;   // conv layers: input tensor
  Tensor conv_out;  // conv layers: pre-activation output
  bool relu = false;
  std::vector<std::int32_t> pool_argmax;  // pool layers
  std::vector<int> pool_in_shape;
};

struct StreamTrace {
  std::vector<TraceEntry> entries;
  Tensor out;
};

inline int last_conv_position(const StreamSpec& stream) {
  for (int i = static_cast<int>(stream.size()) - 1; i >= 0; --i) {
    if (stream[static_cast<std::size_t>(i)].kind == LayerDesc::Kind::kConv) {
      return i;
    }
  }
  return -1;
}

}  // namespace detail

struct ForwardTrace {
  Tensor padded_input;
  int orig_rows = 0;
  int orig_cols = 0;
  std::vector<detail::StreamTrace> streams;
  Tensor fusion_in;
  Tensor output;  // (1, rows/4, cols/4) of the padded input
};

/// Zero-pads bottom/right so both spatial dims divide by 4.
inline Tensor pad_input_to_multiple_of_4(const Tensor& image) {
  const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
  const int pr = pad_to_multiple(H, 4), pc = pad_to_multiple(W, 4);
  if (pr == 0 && pc == 0) return image;
  Tensor padded({C, H + pr, W + pc});
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < H; ++y) {
      const double* src = &image.values[image.index3(c, y, 0)];
      double* dst = &padded.values[padded.index3(c, y, 0)];
      std::copy(src, src + W, dst);
    }
  }
  return padded;
}

/// Full forward pass keeping everything backward needs. Rectifiers follow
/// every conv except each stream's final conv and the fusion, which stay
/// linear read-outs.
inline ForwardTrace forward_traced(const Network& net, const Tensor& image) {
  if (image.rank() != 3) {
    throw ValidationError("forward: rank-3 image tensor expected");
  }
  if (image.dim(0) != net.spec.in_channels) {
    throw ValidationError("forward: image has " + std::to_string(image.dim(0)) +
                          " channels, network wants " +
                          std::to_string(net.spec.in_channels));
  }
  const int k = net.largest_kernel();
  if (image.dim(1) < k || image.dim(2) < k) {
    throw ValidationError("forward: spatial dims smaller than the largest kernel (" +
                          std::to_string(k) + ")");
  }

  ForwardTrace trace;
  trace.orig_rows = image.dim(1);
  trace.orig_cols = image.dim(2);
  trace.padded_input = pad_input_to_multiple_of_4(image);

  const int out_rows = trace.padded_input.dim(1) / 4;
  const int out_cols = trace.padded_input.dim(2) / 4;

  trace.streams.resize(net.spec.streams.size());
  for (std::size_t s = 0; s < net.spec.streams.size(); ++s) {
    const StreamSpec& stream = net.spec.streams[s];
    detail::StreamTrace& st = trace.streams[s];
    st.entries.resize(stream.size());
    const int last_conv = detail::last_conv_position(stream);

    Tensor x = trace.padded_input;
    std::size_t conv_idx = 0;
    for (std::size_t pos = 0; pos < stream.size(); ++pos) {
      detail::TraceEntry& entry = st.entries[pos];
      if (stream[pos].kind == LayerDesc::Kind::kConv) {
        const ConvLayer& layer = net.stream_convs[s][conv_idx++];
        entry.conv_in = std::move(x);
        entry.conv_out = conv2d_forward(entry.conv_in, layer);
        entry.relu = static_cast<int>(pos) != last_conv;
        x = entry.relu ? relu_forward(entry.conv_out) : entry.conv_out;
      } else {
        entry.pool_in_shape = x.shape;
        PoolResult pooled = maxpool2_forward(x);
        entry.pool_argmax = std::move(pooled.argmax);
        x = std::move(pooled.out);
      }
    }
    st.out = std::move(x);
  }

  // Channel concatenation across streams.
  trace.fusion_in = Tensor({net.fusion.in_channels, out_rows, out_cols});
  std::size_t offset = 0;
  for (const auto& st : trace.streams) {
    std::copy(st.out.values.begin(), st.out.values.end(),
              trace.fusion_in.values.begin() +
                  static_cast<std::ptrdiff_t>(offset));
    offset += st.out.values.size();
  }

  trace.output = conv2d_forward(trace.fusion_in, net.fusion);
  return trace;
}

/// Raw single-channel prediction at quarter scale (ceil(input/4) per axis).
inline Tensor forward(const Network& net, const Tensor& image) {
  return forward_traced(net, image).output;
}

/// Accumulates dL/dparams into `grad_flat` (layout of get_params) given
/// dL/doutput. Returns nothing else; input gradients are discarded.
inline void backward_into(const Network& net, const ForwardTrace& trace,
                          const Tensor& grad_output,
                          std::vector<double>& grad_flat) {
  if (grad_flat.size() != net.param_count()) {
    throw ValidationError("backward: gradient buffer size mismatch");
  }

  // Flat offsets per conv, mirroring get_params.
  std::vector<std::vector<std::size_t>> conv_offsets(net.stream_convs.size());
  std::size_t pos = 0;
  for (std::size_t s = 0; s < net.stream_convs.size(); ++s) {
    for (const ConvLayer& layer : net.stream_convs[s]) {
      conv_offsets[s].push_back(pos);
      pos += layer.param_count();
    }
  }
  const std::size_t fusion_offset = pos;

  ConvGrads fusion_grads = conv2d_backward(trace.fusion_in, net.fusion,
                                           grad_output);
  for (std::size_t i = 0; i < fusion_grads.grad_weights.size(); ++i) {
    grad_flat[fusion_offset + i] += fusion_grads.grad_weights[i];
  }
  for (std::size_t i = 0; i < fusion_grads.grad_bias.size(); ++i) {
    grad_flat[fusion_offset + fusion_grads.grad_weights.size() + i] +=
        fusion_grads.grad_bias[i];
  }

  // Split the concatenated-channel gradient back into per-stream slices.
  std::size_t channel_offset = 0;
  for (std::size_t s = 0; s < net.spec.streams.size(); ++s) {
    const detail::StreamTrace& st = trace.streams[s];
    Tensor grad(st.out.shape);
    std::copy(fusion_grads.grad_x.values.begin() +
                  static_cast<std::ptrdiff_t>(channel_offset),
              fusion_grads.grad_x.values.begin() +
                  static_cast<std::ptrdiff_t>(channel_offset + grad.size()),
              grad.values.begin());
    channel_offset += grad.size();

    const StreamSpec& stream = net.spec.streams[s];
    std::size_t conv_idx = net.stream_convs[s].size();
    for (std::size_t rpos = stream.size(); rpos-- > 0;) {
      const detail::TraceEntry& entry = st.entries[rpos];
      if (stream[rpos].kind == LayerDesc::Kind::kConv) {
        --conv_idx;
        const ConvLayer& layer = net.stream_convs[s][conv_idx];
        if (entry.relu) grad = relu_backward(entry.conv_out, grad);
        ConvGrads g = conv2d_backward(entry.conv_in, layer, grad);
        const std::size_t off = conv_offsets[s][conv_idx];
        for (std::size_t i = 0; i < g.grad_weights.size(); ++i) {
          grad_flat[off + i] += g.grad_weights[i];
        }
        for (std::size_t i = 0; i < g.grad_bias.size(); ++i) {
          grad_flat[off + g.grad_weights.size() + i] += g.grad_bias[i];
        }
        grad = std::move(g.grad_x);
      } else {
        grad = maxpool2_backward(grad, entry.pool_argmax, entry.pool_in_shape);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Loss, prediction, training

inline Tensor tensor_from_image(const GrayImage& img) {
  Tensor t({1, img.rows, img.cols});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    t.values[i] = static_cast<double>(img.pixels[i]) / 255.0;
  }
  return t;
}

inline Tensor tensor_from_map(const DensityMap& map) {
  Tensor t({1, map.rows, map.cols});
  std::copy(map.values.begin(), map.values.end(), t.values.begin());
  return t;
}

inline DensityMap map_from_prediction(const Tensor& pred, bool clamp = true) {
  if (pred.rank() != 3 || pred.dim(0) != 1) {
    throw ValidationError("map_from_prediction: (1, rows, cols) tensor expected");
  }
  DensityMap map(pred.dim(1), pred.dim(2));
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    map.values[i] = clamp ? std::max(0.0, pred.values[i]) : pred.values[i];
  }
  return map;
}

/// L = (1/(2|T|)) sum_i ||pred_i - gt_i||^2 with |T| the batch size.
inline double loss(const std::vector<Tensor>& predictions,
                   const std::vector<Tensor>& ground_truths) {
  if (predictions.empty() || predictions.size() != ground_truths.size()) {
    throw ValidationError("loss: batch size mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (!same_shape(predictions[i], ground_truths[i])) {
      throw ValidationError("loss: prediction/ground-truth shape mismatch at " +
                            std::to_string(i));
    }
    for (std::size_t p = 0; p < predictions[i].size(); ++p) {
      const double r = predictions[i].values[p] - ground_truths[i].values[p];
      total += r * r;
    }
  }
  return total / (2.0 * static_cast<double>(predictions.size()));
}

inline double loss(const std::vector<Tensor>& predictions,
                   const std::vector<DensityMap>& ground_truths) {
  std::vector<Tensor> targets;
  targets.reserve(ground_truths.size());
  for (const DensityMap& m : ground_truths) targets.push_back(tensor_from_map(m));
  return loss(predictions, targets);
}

/// Integral of the zero-clamped prediction.
inline double predict_count(const Network& net, const Tensor& image) {
  const Tensor pred = forward(net, image);
  double total = 0.0;
  for (double v : pred.values) total += std::max(0.0, v);
  return total;
}

struct TrainConfig {
  double learning_rate = 1e-5;
  int batch_size = 32;
  int epochs = 1;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
};

struct EpochStats {
  double mean_loss = 0.0;
  double train_mae = 0.0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;
};

/// Prepares quarter-scale targets: full-resolution maps are sum-pooled by
/// 4 (count preserving); maps already at the network's output scale pass
/// through.
inline std::vector<Tensor> prepare_targets(const std::vector<Tensor>& images,
                                           const std::vector<DensityMap>& gts) {
  if (images.size() != gts.size()) {
    throw ValidationError("prepare_targets: image/ground-truth count mismatch");
  }
  std::vector<Tensor> targets;
  targets.reserve(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const int rows = images[i].dim(1), cols = images[i].dim(2);
    const int out_rows = (rows + pad_to_multiple(rows, 4)) / 4;
    const int out_cols = (cols + pad_to_multiple(cols, 4)) / 4;
    if (gts[i].rows == out_rows && gts[i].cols == out_cols) {
      targets.push_back(tensor_from_map(gts[i]));
    } else if (gts[i].rows == rows && gts[i].cols == cols) {
      targets.push_back(tensor_from_map(downscale_preserving_count(gts[i], 4)));
    } else {
      throw ValidationError(
          "prepare_targets: ground truth " + std::to_string(i) +
          " matches neither the image extent nor the output extent");
    }
  }
  return targets;
}

/// Joint end-to-end training: epochs of seed-shuffled batches, Adam after
/// each batch, deterministic for a fixed (seed, config, data). Per-sample
/// work parallelizes; gradients reduce in index order.
inline TrainLog train(Network& net, const std::vector<Tensor>& images,
                      const std::vector<DensityMap>& ground_truths,
                      const TrainConfig& cfg) {
  if (images.empty()) throw ValidationError("train: empty dataset");
  if (cfg.batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  if (cfg.epochs < 1) throw ValidationError("train: epochs must be >= 1");
  const std::vector<Tensor> targets = prepare_targets(images, ground_truths);

  const std::size_t n = images.size();
  const std::size_t params = net.param_count();
  AdamState adam(params);
  const AdamConfig adam_cfg{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                            cfg.adam_epsilon};

  std::vector<double> flat_params;
  net.get_params(flat_params);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(cfg.seed);

  TrainLog log;
  log.epochs.reserve(static_cast<std::size_t>(cfg.epochs));

  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<std::vector<double>> sample_grads;
  std::vector<double> sample_sq(batch, 0.0);
  std::vector<double> sample_abs_err(batch, 0.0);
  std::vector<double> batch_grad(params, 0.0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_sq = 0.0;
    double epoch_abs_err = 0.0;

    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t b = std::min(batch, n - start);
      sample_grads.resize(b);
      for (auto& g : sample_grads) g.assign(params, 0.0);

      parallel_for(b, [&](std::size_t i) {
        const std::size_t idx = order[start + i];
        ForwardTrace trace = forward_traced(net, images[idx]);
        const Tensor& target = targets[idx];
        Tensor residual(trace.output.shape);
        double sq = 0.0, pred_count = 0.0, gt_count = 0.0;
        for (std::size_t p = 0; p < residual.size(); ++p) {
          const double pv = trace.output.values[p];
          const double r = pv - target.values[p];
          residual.values[p] = r;
          sq += r * r;
          pred_count += std::max(0.0, pv);
          gt_count += target.values[p];
        }
        sample_sq[i] = sq;
        sample_abs_err[i] = std::abs(pred_count - gt_count);
        backward_into(net, trace, residual, sample_grads[i]);
      });

      double batch_sq = 0.0;
      std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
      for (std::size_t i = 0; i < b; ++i) {
        batch_sq += sample_sq[i];
        epoch_abs_err += sample_abs_err[i];
        const std::vector<double>& g = sample_grads[i];
        for (std::size_t p = 0; p < params; ++p) batch_grad[p] += g[p];
      }
      const double inv_b = 1.0 / static_cast<double>(b);
      for (double& g : batch_grad) g *= inv_b;
      const double batch_loss = batch_sq * 0.5 * inv_b;
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("non-finite loss in epoch " +
                            std::to_string(epoch + 1) + ", batch starting at " +
                            std::to_string(start));
      }
      epoch_sq += batch_sq;

      adam_step(flat_params.data(), batch_grad.data(), params, adam, adam_cfg);
      net.set_params(flat_params);
    }

    EpochStats stats;
    stats.mean_loss = epoch_sq / (2.0 * static_cast<double>(n));
    stats.train_mae = epoch_abs_err / static_cast<double>(n);
    log.epochs.push_back(stats);
  }
  return log;
}

// ---------------------------------------------------------------------------
// Checkpoints: "MSNW", version u8, u32 descriptor length, descriptor JSON,
// then all parameters as f64 little-endian in declaration order.

inline constexpr std::uint8_t kCheckpointVersion = 1;

inline void save_checkpoint(const Network& net, std::ostream& os) {
  os.write("MSNW", 4);
  binio::put_u8(os, kCheckpointVersion);
  const std::string desc = network_spec_to_json(net.spec).dump();
  binio::put_u32_le(os, static_cast<std::uint32_t>(desc.size()));
  os.write(desc.data(), static_cast<std::streamsize>(desc.size()));
  std::vector<double> flat;
  net.get_params(flat);
  for (double v : flat) binio::put_f64_le(os, v);
}

inline void save_checkpoint(const Network& net, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  save_checkpoint(net, os);
  if (!os) throw IoError("write failed for '" + path + "'");
}

inline Network load_checkpoint(std::istream& is, const std::string& path) {
  char magic[4];
  if (!is.read(magic, 4) || std::string_view(magic, 4) != "MSNW") {
    throw IoError(path + ": bad checkpoint magic");
  }
  const std::uint8_t version = binio::get_u8(is, path);
  if (version != kCheckpointVersion) {
    throw IoError(path + ": unsupported checkpoint version " +
                  std::to_string(version));
  }
  const std::uint32_t len = binio::get_u32_le(is, path);
  std::string desc(len, '\0');
  if (!is.read(desc.data(), len)) throw IoError(path + ": truncated descriptor");
  NetworkSpec spec;
  try {
    spec = network_spec_from_json(nlohmann::json::parse(desc));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path + ": bad descriptor: " + e.what());
  }
  Network net(spec);
  std::vector<double> flat(net.param_count());
  for (double& v : flat) v = binio::get_f64_le(is, path);
  net.set_params(flat);
  return net;
}

inline Network load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  return load_checkpoint(is, path);
}

}  // namespace crowdmap
