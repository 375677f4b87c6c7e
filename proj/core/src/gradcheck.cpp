#include "factorkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "factorkit/error.hpp"

namespace factorkit {
namespace {

// Double-precision replay of the graph used for the numeric side, so float
// rounding in the forward pass does not masquerade as gradient error.
struct Reference {
  std::vector<double> input;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<std::int64_t>> argmax;
  std::vector<Dims> dims;
};

struct RefParams {
  std::vector<double> weight;
  std::vector<double> bias;
};

void ref_conv(const std::vector<double>& in, const Dims& d, const RefParams& p, const LayerSpec& l,
              const Dims& od, std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(od.count()), 0.0);
  const std::int64_t kh = l.kernel.h, kw = l.kernel.w;
  std::size_t o = 0;
  for (std::int64_t b = 0; b < od.n; ++b)
    for (std::int64_t co = 0; co < od.c; ++co)
      for (std::int64_t y = 0; y < od.h; ++y)
        for (std::int64_t x = 0; x < od.w; ++x, ++o) {
          double acc = p.bias.empty() ? 0.0 : p.bias[co];
          for (std::int64_t ci = 0; ci < d.c; ++ci) {
            const double* plane = in.data() + ((b * d.c + ci) * d.h) * d.w;
            const double* wk = p.weight.data() + ((co * d.c + ci) * kh) * kw;
            for (std::int64_t i = 0; i < kh; ++i) {
              const std::int64_t iy = y * l.stride.h - l.padding.h + i;
              if (iy < 0 || iy >= d.h) continue;
              for (std::int64_t j = 0; j < kw; ++j) {
                const std::int64_t ix = x * l.stride.w - l.padding.w + j;
                if (ix < 0 || ix >= d.w) continue;
                acc += plane[iy * d.w + ix] * wk[i * kw + j];
              }
            }
          }
          out[o] = acc;
        }
}

void ref_pool(const std::vector<double>& in, const Dims& d, const LayerSpec& l, const Dims& od,
              std::vector<double>& out, std::vector<std::int64_t>& argmax) {
  out.assign(static_cast<std::size_t>(od.count()), 0.0);
  argmax.assign(out.size(), -1);
  std::size_t o = 0;
  for (std::int64_t b = 0; b < od.n; ++b)
    for (std::int64_t c = 0; c < od.c; ++c) {
      const std::int64_t base = ((b * d.c + c) * d.h) * d.w;
      for (std::int64_t y = 0; y < od.h; ++y)
        for (std::int64_t x = 0; x < od.w; ++x, ++o) {
          std::int64_t best = -1;
          double best_v = 0.0;
          for (std::int64_t i = 0; i < l.kernel.h; ++i) {
            const std::int64_t iy = y * l.stride.h - l.padding.h + i;
            if (iy < 0 || iy >= d.h) continue;
            for (std::int64_t j = 0; j < l.kernel.w; ++j) {
              const std::int64_t ix = x * l.stride.w - l.padding.w + j;
              if (ix < 0 || ix >= d.w) continue;
              const double v = in[base + iy * d.w + ix];
              if (best < 0 || v > best_v) {
                best = iy * d.w + ix;
                best_v = v;
              }
            }
          }
          out[o] = best_v;
          argmax[o] = base + best;
        }
    }
}

void ref_run(const CompiledGraph& graph, const std::map<std::string, RefParams>& params,
             std::span<const std::size_t> layers, Reference& ref) {
  const auto& idx = graph.index();
  auto src = [&](std::size_t s) -> const std::vector<double>& {
    return s == GraphIndex::kInput ? ref.input : ref.values[s];
  };
  for (auto i : layers) {
    const LayerSpec& l = graph.layer(i);
    const auto s0 = idx.inputs[i].front();
    const Dims& d = s0 == GraphIndex::kInput ? ref.dims.back() : ref.dims[s0];
    switch (l.kind) {
      case LayerKind::Conv:
        ref_conv(src(s0), d, params.at(l.name), l, ref.dims[i], ref.values[i]);
        break;
      case LayerKind::MaxPool:
        ref_pool(src(s0), d, l, ref.dims[i], ref.values[i], ref.argmax[i]);
        break;
      case LayerKind::ReLU: {
        const auto& in = src(s0);
        ref.values[i].resize(in.size());
        for (std::size_t k = 0; k < in.size(); ++k) ref.values[i][k] = in[k] > 0.0 ? in[k] : 0.0;
        break;
      }
      case LayerKind::ConcatChannels: {
        auto& out = ref.values[i];
        out.assign(static_cast<std::size_t>(ref.dims[i].count()), 0.0);
        const std::int64_t plane = ref.dims[i].h * ref.dims[i].w;
        for (std::int64_t b = 0; b < ref.dims[i].n; ++b) {
          std::int64_t c0 = 0;
          for (auto s : idx.inputs[i]) {
            const Dims& sd = s == GraphIndex::kInput ? ref.dims.back() : ref.dims[s];
            const auto& in = src(s);
            std::copy_n(in.begin() + b * sd.c * plane, sd.c * plane,
                        out.begin() + (b * ref.dims[i].c + c0) * plane);
            c0 += sd.c;
          }
        }
        break;
      }
    }
  }
}

double loss(const CompiledGraph& graph, const Reference& ref) {
  double s = 0.0;
  for (auto o : graph.index().outputs)
    for (double v : ref.values[o]) s += v;
  return s;
}

// Layers reachable from `start` (inclusive), topological.
std::vector<std::size_t> downstream(const CompiledGraph& graph, std::size_t start) {
  const auto& idx = graph.index();
  std::vector<char> hit(graph.spec().layers.size(), 0);
  hit[start] = 1;
  std::vector<std::size_t> out;
  for (auto i : idx.order) {
    if (!hit[i])
      for (auto s : idx.inputs[i])
        if (s != GraphIndex::kInput && hit[s]) hit[i] = 1;
    if (hit[i]) out.push_back(i);
  }
  return out;
}

// True when any relu in `layers` sees a different sign pattern, or any pool a
// different argmax, than the float forward pass the analytic gradient used.
bool crossed_kink(const CompiledGraph& graph, std::span<const std::size_t> layers, const ForwardCache& base,
                  const Reference& ref) {
  for (auto i : layers) {
    const LayerSpec& l = graph.layer(i);
    if (l.kind == LayerKind::MaxPool) {
      if (ref.argmax[i] != base.argmax[i]) return true;
    } else if (l.kind == LayerKind::ReLU) {
      const auto src = graph.index().inputs[i].front();
      const auto a = (src == GraphIndex::kInput ? base.input : base.values[src]).data();
      const auto& b = src == GraphIndex::kInput ? ref.input : ref.values[src];
      for (std::size_t k = 0; k < a.size(); ++k)
        if ((a[k] > 0.0f) != (b[k] > 0.0)) return true;
    }
  }
  return false;
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const CompiledGraph& graph, const Parameters& params, const Tensor& input,
                           double epsilon, double threshold, std::int64_t max_params) {
  check_params(graph, params);
  const std::int64_t count = parameter_count(params);
  if (count > max_params)
    throw SpecError("gradient check limited to " + std::to_string(max_params) + " parameters, graph has " +
                    std::to_string(count));

  ForwardCache base;
  forward(graph, params, input, &base);
  std::vector<Tensor> ones;
  for (auto o : graph.index().outputs) ones.emplace_back(base.values[o].dims(), 1.0f);
  const Gradients analytic = backward(graph, params, base, ones);

  GradCheckReport report;
  report.epsilon = epsilon;
  report.threshold = threshold;

  std::map<std::string, RefParams> ref_params;
  for (const auto& [name, p] : params)
    ref_params[name] = {{p.weight.data().begin(), p.weight.data().end()}, {p.bias.begin(), p.bias.end()}};
  const std::size_t n = graph.spec().layers.size();
  Reference ref;
  ref.input.assign(input.data().begin(), input.data().end());
  ref.values.resize(n);
  ref.argmax.resize(n);
  for (std::size_t i = 0; i < n; ++i) ref.dims.push_back(base.values[i].dims());
  ref.dims.push_back(input.dims());
  ref_run(graph, ref_params, graph.index().order, ref);
  const Reference ref_base = ref;

  for (auto i : graph.index().order) {
    const LayerSpec& l = graph.layer(i);
    if (l.kind != LayerKind::Conv) continue;
    const auto layers = downstream(graph, i);
    RefParams& p = ref_params.at(l.name);
    const ConvParams& g = analytic.params.at(l.name);

    auto probe = [&](std::vector<double>& values, std::span<const float> grads, const char* part) {
      ParamCheck pc{l.name, part};
      for (std::size_t e = 0; e < values.size(); ++e) {
        const double orig = values[e];
        values[e] = orig + epsilon;
        ref_run(graph, ref_params, layers, ref);
        const double loss_up = loss(graph, ref);
        bool kink = crossed_kink(graph, layers, base, ref);
        values[e] = orig - epsilon;
        ref_run(graph, ref_params, layers, ref);
        const double loss_down = loss(graph, ref);
        kink = kink || crossed_kink(graph, layers, base, ref);
        values[e] = orig;
        if (kink) {
          ++pc.excluded;
          continue;
        }
        const double numeric = (loss_up - loss_down) / (2.0 * epsilon);
        pc.max_rel_error = std::max(pc.max_rel_error, relative_error(grads[e], numeric));
        ++pc.checked;
      }
      report.checked += pc.checked;
      report.excluded += pc.excluded;
      report.max_rel_error = std::max(report.max_rel_error, pc.max_rel_error);
      report.entries.push_back(pc);
    };
    probe(p.weight, g.weight.data(), "weight");
    if (!p.bias.empty()) probe(p.bias, g.bias, "bias");
    for (auto k : layers) {
      ref.values[k] = ref_base.values[k];
      ref.argmax[k] = ref_base.argmax[k];
    }
  }
  report.passed = report.max_rel_error <= threshold;
  return report;
}

}  // namespace factorkit
