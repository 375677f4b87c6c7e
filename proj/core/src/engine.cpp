#include "factorkit/engine.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "factorkit/cost.hpp"
#include "factorkit/error.hpp"

namespace factorkit {
namespace {

// Output columns per im2col tile; keeps a tile near 512 KiB.
std::int64_t tile_columns(std::int64_t k, std::int64_t total) {
  return std::clamp<std::int64_t>(131072 / std::max<std::int64_t>(k, 1), 32, std::max<std::int64_t>(total, 1));
}

struct ConvGeometry {
  std::int64_t cin, h, w, cout, kh, kw, sh, sw, ph, pw, ho, wo;
  std::int64_t k() const { return cin * kh * kw; }
  std::int64_t p() const { return ho * wo; }
};

ConvGeometry conv_geometry(const Tensor& input, const ConvParams& params, const LayerSpec& spec) {
  if (spec.kind != LayerKind::Conv) throw SpecError("layer '" + spec.name + "' is not a conv");
  const Dims& d = input.dims();
  const Dims& wd = params.weight.dims();
  if (wd.n != spec.out_channels || wd.c != d.c || wd.h != spec.kernel.h || wd.w != spec.kernel.w)
    throw SpecError("layer '" + spec.name + "': weight dims do not match the layer and its input");
  if (!params.bias.empty() && static_cast<std::int64_t>(params.bias.size()) != spec.out_channels)
    throw SpecError("layer '" + spec.name + "': bias length does not match out_channels");
  const Shape out = infer_shape(spec, d.shape());
  return {d.c, d.h, d.w, spec.out_channels, spec.kernel.h, spec.kernel.w, spec.stride.h,
          spec.stride.w, spec.padding.h, spec.padding.w, out.height, out.width};
}

// col[k * cols + j] for output position p0 + j; zero outside the input.
void im2col_tile(const float* in, const ConvGeometry& g, std::int64_t p0, std::int64_t cols,
                 std::vector<std::int64_t>& oh, std::vector<std::int64_t>& ow, float* col) {
  oh.resize(static_cast<std::size_t>(cols));
  ow.resize(static_cast<std::size_t>(cols));
  for (std::int64_t j = 0; j < cols; ++j) {
    oh[j] = (p0 + j) / g.wo * g.sh - g.ph;
    ow[j] = (p0 + j) % g.wo * g.sw - g.pw;
  }
  std::int64_t k = 0;
  for (std::int64_t c = 0; c < g.cin; ++c) {
    const float* plane = in + c * g.h * g.w;
    for (std::int64_t i = 0; i < g.kh; ++i) {
      for (std::int64_t jj = 0; jj < g.kw; ++jj, ++k) {
        float* row = col + k * cols;
        for (std::int64_t j = 0; j < cols; ++j) {
          const std::int64_t y = oh[j] + i, x = ow[j] + jj;
          row[j] = (y >= 0 && y < g.h && x >= 0 && x < g.w) ? plane[y * g.w + x] : 0.0f;
        }
      }
    }
  }
}

void col2im_tile(const double* dcol, const ConvGeometry& g, std::int64_t cols,
                 const std::vector<std::int64_t>& oh, const std::vector<std::int64_t>& ow, double* dx) {
  std::int64_t k = 0;
  for (std::int64_t c = 0; c < g.cin; ++c) {
    double* plane = dx + c * g.h * g.w;
    for (std::int64_t i = 0; i < g.kh; ++i) {
      for (std::int64_t jj = 0; jj < g.kw; ++jj, ++k) {
        const double* row = dcol + k * cols;
        for (std::int64_t j = 0; j < cols; ++j) {
          const std::int64_t y = oh[j] + i, x = ow[j] + jj;
          if (y >= 0 && y < g.h && x >= 0 && x < g.w) plane[y * g.w + x] += row[j];
        }
      }
    }
  }
}

void add_into(Tensor& dst, Tensor&& src) {
  if (dst.empty()) {
    dst = std::move(src);
    return;
  }
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const ConvParams& params, const LayerSpec& spec) {
  const ConvGeometry g = conv_geometry(input, params, spec);
  const std::int64_t n = input.dims().n, K = g.k(), P = g.p();
  Tensor out({n, g.cout, g.ho, g.wo});
  const std::int64_t tile = tile_columns(K, P);
  std::vector<float> col(static_cast<std::size_t>(K * tile));
  std::vector<double> acc(static_cast<std::size_t>(4 * tile));
  std::vector<std::int64_t> oh, ow;
  const float* w = params.weight.data().data();

  for (std::int64_t b = 0; b < n; ++b) {
    const float* in = input.data().data() + b * g.cin * g.h * g.w;
    float* o = out.data().data() + b * g.cout * P;
    for (std::int64_t p0 = 0; p0 < P; p0 += tile) {
      const std::int64_t cols = std::min(tile, P - p0);
      im2col_tile(in, g, p0, cols, oh, ow, col.data());
      // Four output channels per sweep over the tile. Each output element
      // still sums its K products in ascending k.
      for (std::int64_t co = 0; co < g.cout; co += 4) {
        const std::int64_t block = std::min<std::int64_t>(4, g.cout - co);
        std::fill(acc.begin(), acc.begin() + block * cols, 0.0);
        for (std::int64_t k = 0; k < K; ++k) {
          const float* crow = col.data() + k * cols;
          for (std::int64_t r = 0; r < block; ++r) {
            const double wv = w[(co + r) * K + k];
            double* a = acc.data() + r * cols;
            for (std::int64_t j = 0; j < cols; ++j) a[j] += wv * static_cast<double>(crow[j]);
          }
        }
        for (std::int64_t r = 0; r < block; ++r) {
          const double bias = params.bias.empty() ? 0.0 : static_cast<double>(params.bias[co + r]);
          float* orow = o + (co + r) * P + p0;
          const double* a = acc.data() + r * cols;
          for (std::int64_t j = 0; j < cols; ++j) orow[j] = static_cast<float>(a[j] + bias);
        }
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const ConvParams& params, const LayerSpec& spec,
                          const Tensor& grad_output) {
  const ConvGeometry g = conv_geometry(input, params, spec);
  const std::int64_t n = input.dims().n, K = g.k(), P = g.p();
  if (!(grad_output.dims() == Dims{n, g.cout, g.ho, g.wo}))
    throw SpecError("layer '" + spec.name + "': gradient shape does not match the conv output");

  std::vector<double> dw(static_cast<std::size_t>(g.cout * K), 0.0);
  std::vector<double> db(static_cast<std::size_t>(g.cout), 0.0);
  std::vector<double> dx(static_cast<std::size_t>(g.cin * g.h * g.w));
  const std::int64_t tile = tile_columns(K, P);
  std::vector<float> col(static_cast<std::size_t>(K * tile));
  std::vector<double> dcol(static_cast<std::size_t>(K * tile));
  std::vector<std::int64_t> oh, ow;
  const float* w = params.weight.data().data();
  ConvGrads out{Tensor(input.dims()), Tensor(params.weight.dims()), {}};

  for (std::int64_t b = 0; b < n; ++b) {
    const float* in = input.data().data() + b * g.cin * g.h * g.w;
    const float* gy = grad_output.data().data() + b * g.cout * P;
    std::fill(dx.begin(), dx.end(), 0.0);
    for (std::int64_t p0 = 0; p0 < P; p0 += tile) {
      const std::int64_t cols = std::min(tile, P - p0);
      im2col_tile(in, g, p0, cols, oh, ow, col.data());
      std::fill(dcol.begin(), dcol.begin() + K * cols, 0.0);
      for (std::int64_t co = 0; co < g.cout; ++co) {
        const float* grow = gy + co * P + p0;
        double bsum = 0.0;
        for (std::int64_t j = 0; j < cols; ++j) bsum += grow[j];
        db[co] += bsum;
        for (std::int64_t k = 0; k < K; ++k) {
          const float* crow = col.data() + k * cols;
          double s = 0.0;
          for (std::int64_t j = 0; j < cols; ++j) s += static_cast<double>(grow[j]) * crow[j];
          dw[co * K + k] += s;
          const double wv = w[co * K + k];
          double* drow = dcol.data() + k * cols;
          for (std::int64_t j = 0; j < cols; ++j) drow[j] += wv * grow[j];
        }
      }
      col2im_tile(dcol.data(), g, cols, oh, ow, dx.data());
    }
    float* gx = out.input.data().data() + b * g.cin * g.h * g.w;
    for (std::size_t i = 0; i < dx.size(); ++i) gx[i] = static_cast<float>(dx[i]);
  }
  for (std::size_t i = 0; i < dw.size(); ++i) out.weight.data()[i] = static_cast<float>(dw[i]);
  if (!params.bias.empty()) {
    out.bias.resize(db.size());
    for (std::size_t i = 0; i < db.size(); ++i) out.bias[i] = static_cast<float>(db[i]);
  }
  return out;
}

PoolResult maxpool_forward(const Tensor& input, const LayerSpec& spec) {
  if (spec.kind != LayerKind::MaxPool) throw SpecError("layer '" + spec.name + "' is not a maxpool");
  const Dims& d = input.dims();
  const Shape os = infer_shape(spec, d.shape());
  PoolResult r{Tensor({d.n, d.c, os.height, os.width}), {}};
  r.argmax.resize(static_cast<std::size_t>(r.output.size()));
  std::size_t o = 0;
  for (std::int64_t b = 0; b < d.n; ++b) {
    for (std::int64_t c = 0; c < d.c; ++c) {
      const std::int64_t base = input.offset(b, c, 0, 0);
      const float* plane = input.data().data() + base;
      for (std::int64_t y = 0; y < os.height; ++y) {
        for (std::int64_t x = 0; x < os.width; ++x, ++o) {
          std::int64_t best = -1;
          float best_v = 0.0f;
          for (std::int64_t i = 0; i < spec.kernel.h; ++i) {
            const std::int64_t iy = y * spec.stride.h - spec.padding.h + i;
            if (iy < 0 || iy >= d.h) continue;
            for (std::int64_t j = 0; j < spec.kernel.w; ++j) {
              const std::int64_t ix = x * spec.stride.w - spec.padding.w + j;
              if (ix < 0 || ix >= d.w) continue;
              const float v = plane[iy * d.w + ix];
              if (best < 0 || v > best_v) {
                best = iy * d.w + ix;
                best_v = v;
              }
            }
          }
          if (best < 0)
            throw SpecError("maxpool '" + spec.name + "': window at (" + std::to_string(y) + "," +
                            std::to_string(x) + ") covers only padding");
          r.output.data()[o] = best_v;
          r.argmax[o] = base + best;
        }
      }
    }
  }
  return r;
}

Tensor maxpool_backward(const Dims& input_dims, std::span<const std::int64_t> argmax,
                        const Tensor& grad_output) {
  if (static_cast<std::int64_t>(argmax.size()) != grad_output.size())
    throw SpecError("maxpool gradient does not match the recorded argmax");
  Tensor gx(input_dims);
  for (std::size_t i = 0; i < argmax.size(); ++i) gx.data()[argmax[i]] += grad_output.data()[i];
  return gx;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out(input.dims());
  auto src = input.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0f ? src[i] : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_output) {
  if (!(input.dims() == grad_output.dims())) throw SpecError("relu gradient shape mismatch");
  Tensor gx(input.dims());
  for (std::size_t i = 0; i < gx.data().size(); ++i)
    gx.data()[i] = input.data()[i] > 0.0f ? grad_output.data()[i] : 0.0f;
  return gx;
}

Tensor concat_forward(std::span<const Tensor* const> inputs) {
  if (inputs.empty()) throw SpecError("concat needs at least one input");
  const Dims& d0 = inputs.front()->dims();
  Dims out = d0;
  out.c = 0;
  for (const Tensor* t : inputs) {
    const Dims& d = t->dims();
    if (d.n != d0.n || d.h != d0.h || d.w != d0.w)
      throw SpecError("concat inputs differ in batch or spatial dims");
    out.c += d.c;
  }
  Tensor r(out);
  const std::int64_t plane = d0.h * d0.w;
  for (std::int64_t b = 0; b < out.n; ++b) {
    float* dst = r.data().data() + b * out.c * plane;
    for (const Tensor* t : inputs) {
      const std::int64_t chunk = t->dims().c * plane;
      std::copy_n(t->data().data() + b * chunk, chunk, dst);
      dst += chunk;
    }
  }
  return r;
}

Tensor concat_forward(const std::vector<Tensor>& inputs) {
  std::vector<const Tensor*> ptrs;
  for (const auto& t : inputs) ptrs.push_back(&t);
  return concat_forward(std::span<const Tensor* const>(ptrs));
}

std::vector<Tensor> concat_backward(const Tensor& grad_output, std::span<const std::int64_t> channels) {
  const Dims& d = grad_output.dims();
  std::int64_t total = 0;
  for (auto c : channels) total += c;
  if (total != d.c) throw SpecError("concat gradient channel count mismatch");
  std::vector<Tensor> out;
  const std::int64_t plane = d.h * d.w;
  std::int64_t c0 = 0;
  for (auto c : channels) {
    Tensor t({d.n, c, d.h, d.w});
    for (std::int64_t b = 0; b < d.n; ++b)
      std::copy_n(grad_output.data().data() + (b * d.c + c0) * plane, c * plane,
                  t.data().data() + b * c * plane);
    c0 += c;
    out.push_back(std::move(t));
  }
  return out;
}

// ---- graph execution --------------------------------------------------------

CompiledGraph::CompiledGraph(GraphSpec graph)
    : graph_(std::move(graph)), index_(GraphIndex::build(graph_)), shapes_(infer_shapes(graph_, index_)) {}

std::int64_t CompiledGraph::in_channels(std::size_t i) const {
  const auto src = index_.inputs[i].front();
  return src == GraphIndex::kInput ? graph_.input_shape.channels : shapes_[src].channels;
}

ForwardCache make_cache(const CompiledGraph& graph, Tensor input) {
  const Shape& want = graph.spec().input_shape;
  if (!(input.dims().shape() == want) || input.dims().n < 1)
    throw SpecError("input tensor " + to_string(input.dims().shape()) + " does not match graph input " +
                    to_string(want));
  ForwardCache c;
  c.input = std::move(input);
  c.values.resize(graph.spec().layers.size());
  c.argmax.resize(graph.spec().layers.size());
  return c;
}

ExecStats make_stats(const CompiledGraph& graph) {
  return ExecStats{std::vector<std::int64_t>(graph.spec().layers.size(), 0)};
}

void run_layers(const CompiledGraph& graph, const Parameters& params,
                std::span<const std::size_t> layers, ForwardCache& cache, ExecStats* stats,
                const std::atomic<bool>* cancel) {
  const auto& index = graph.index();
  auto source = [&](std::size_t src) -> const Tensor& {
    const Tensor& t = src == GraphIndex::kInput ? cache.input : cache.values[src];
    if (t.empty()) throw SpecError("layer input has not been computed yet");
    return t;
  };
  for (std::size_t i : layers) {
    if (cancel && cancel->load(std::memory_order_relaxed)) return;
    const LayerSpec& l = graph.layer(i);
    const Tensor& in = source(index.inputs[i].front());
    switch (l.kind) {
      case LayerKind::Conv: {
        auto it = params.find(l.name);
        if (it == params.end()) throw SpecError("missing parameters for conv '" + l.name + "'");
        cache.values[i] = conv2d_forward(in, it->second, l);
        if (stats) {
          const Dims& od = cache.values[i].dims();
          stats->macs[i] = od.n * od.c * od.h * od.w * in.dims().c * l.kernel.h * l.kernel.w;
        }
        break;
      }
      case LayerKind::MaxPool: {
        auto r = maxpool_forward(in, l);
        cache.values[i] = std::move(r.output);
        cache.argmax[i] = std::move(r.argmax);
        break;
      }
      case LayerKind::ReLU:
        cache.values[i] = relu_forward(in);
        break;
      case LayerKind::ConcatChannels: {
        std::vector<const Tensor*> ins;
        for (auto src : index.inputs[i]) ins.push_back(&source(src));
        cache.values[i] = concat_forward(std::span<const Tensor* const>(ins));
        break;
      }
    }
  }
}

std::vector<Tensor> collect_outputs(const CompiledGraph& graph, const ForwardCache& cache) {
  std::vector<Tensor> out;
  for (auto o : graph.index().outputs) out.push_back(cache.values[o]);
  return out;
}

std::vector<Tensor> forward(const CompiledGraph& graph, const Parameters& params, const Tensor& input,
                            ForwardCache* cache, ExecStats* stats) {
  ForwardCache local = make_cache(graph, input);
  run_layers(graph, params, graph.index().order, local, stats);
  auto outputs = collect_outputs(graph, local);
  if (cache) *cache = std::move(local);
  return outputs;
}

std::vector<Tensor> forward(const GraphSpec& graph, const Parameters& params, const Tensor& input) {
  return forward(CompiledGraph(graph), params, input);
}

Gradients backward(const CompiledGraph& graph, const Parameters& params, const ForwardCache& cache,
                   std::span<const Tensor> output_grads) {
  const auto& index = graph.index();
  if (output_grads.size() != index.outputs.size())
    throw SpecError("backward needs " + std::to_string(index.outputs.size()) + " output gradients, got " +
                    std::to_string(output_grads.size()));
  const std::size_t n = graph.spec().layers.size();
  if (cache.values.size() != n) throw SpecError("forward cache does not belong to this graph");

  std::vector<Tensor> grads(n);
  for (std::size_t k = 0; k < output_grads.size(); ++k) {
    const auto o = index.outputs[k];
    if (!(output_grads[k].dims() == cache.values[o].dims()))
      throw SpecError("gradient for output '" + graph.layer(o).name + "' has the wrong shape");
    add_into(grads[o], Tensor(output_grads[k]));
  }

  Gradients out;
  for (const auto& [name, p] : params) {
    ConvParams z{Tensor(p.weight.dims()), std::vector<float>(p.bias.size(), 0.0f)};
    out.params.emplace(name, std::move(z));
  }
  out.input = Tensor(cache.input.dims());

  auto route = [&](std::size_t src, Tensor&& g) {
    if (src == GraphIndex::kInput) add_into(out.input, std::move(g));
    else add_into(grads[src], std::move(g));
  };
  auto input_of = [&](std::size_t src) -> const Tensor& {
    return src == GraphIndex::kInput ? cache.input : cache.values[src];
  };

  for (auto it = index.order.rbegin(); it != index.order.rend(); ++it) {
    const std::size_t i = *it;
    if (grads[i].empty()) continue;
    const LayerSpec& l = graph.layer(i);
    const auto& srcs = index.inputs[i];
    switch (l.kind) {
      case LayerKind::Conv: {
        auto g = conv2d_backward(input_of(srcs[0]), params.at(l.name), l, grads[i]);
        auto& slot = out.params.at(l.name);
        slot.weight = std::move(g.weight);
        if (!g.bias.empty()) slot.bias = std::move(g.bias);
        route(srcs[0], std::move(g.input));
        break;
      }
      case LayerKind::MaxPool:
        route(srcs[0], maxpool_backward(input_of(srcs[0]).dims(), cache.argmax[i], grads[i]));
        break;
      case LayerKind::ReLU:
        route(srcs[0], relu_backward(input_of(srcs[0]), grads[i]));
        break;
      case LayerKind::ConcatChannels: {
        std::vector<std::int64_t> channels;
        for (auto s : srcs) channels.push_back(input_of(s).dims().c);
        auto parts = concat_backward(grads[i], channels);
        for (std::size_t k = 0; k < srcs.size(); ++k) route(srcs[k], std::move(parts[k]));
        break;
      }
    }
    grads[i] = Tensor();
  }
  return out;
}

Parameters init_params(const CompiledGraph& graph, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Parameters params;
  for (auto i : graph.index().order) {
    const LayerSpec& l = graph.layer(i);
    if (l.kind != LayerKind::Conv) continue;
    const std::int64_t cin = graph.in_channels(i);
    const std::int64_t fan_in = cin * l.kernel.h * l.kernel.w;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    ConvParams p{Tensor({l.out_channels, cin, l.kernel.h, l.kernel.w}), {}};
    for (auto& v : p.weight.data()) v = static_cast<float>(dist(rng));
    if (l.has_bias) p.bias.assign(static_cast<std::size_t>(l.out_channels), 0.0f);
    params.emplace(l.name, std::move(p));
  }
  return params;
}

Parameters init_params(const GraphSpec& graph, std::uint64_t seed) {
  return init_params(CompiledGraph(graph), seed);
}

void check_params(const CompiledGraph& graph, const Parameters& params) {
  std::size_t convs = 0;
  for (std::size_t i = 0; i < graph.spec().layers.size(); ++i) {
    const LayerSpec& l = graph.layer(i);
    if (l.kind != LayerKind::Conv) continue;
    ++convs;
    auto it = params.find(l.name);
    if (it == params.end()) throw SpecError("missing parameters for conv '" + l.name + "'");
    const Dims want{l.out_channels, graph.in_channels(i), l.kernel.h, l.kernel.w};
    if (!(it->second.weight.dims() == want))
      throw SpecError("parameters for '" + l.name + "' have the wrong weight dims");
    const std::size_t bias = l.has_bias ? static_cast<std::size_t>(l.out_channels) : 0;
    if (it->second.bias.size() != bias)
      throw SpecError("parameters for '" + l.name + "' have the wrong bias length");
  }
  if (params.size() != convs) throw SpecError("parameter set names layers that are not convs of this graph");
}

std::int64_t parameter_count(const Parameters& params) {
  std::int64_t n = 0;
  for (const auto& [_, p] : params) n += p.weight.size() + static_cast<std::int64_t>(p.bias.size());
  return n;
}

}  // namespace factorkit
