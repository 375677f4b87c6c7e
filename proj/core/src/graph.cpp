#include "factorkit/graph.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "factorkit/error.hpp"

namespace factorkit {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::ReLU: return "relu";
    case LayerKind::ConcatChannels: return "concat";
  }
  return "?";
}

LayerSpec make_conv(std::string name, std::string input, Extent kernel, Extent stride,
                    Extent padding, std::int64_t out_channels, bool bias) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::Conv;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  l.out_channels = out_channels;
  l.has_bias = bias;
  l.inputs = {std::move(input)};
  return l;
}

LayerSpec make_maxpool(std::string name, std::string input, Extent kernel, Extent stride,
                       Extent padding) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::MaxPool;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  l.inputs = {std::move(input)};
  return l;
}

LayerSpec make_relu(std::string name, std::string input) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::ReLU;
  l.inputs = {std::move(input)};
  return l;
}

LayerSpec make_concat(std::string name, std::vector<std::string> inputs) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::ConcatChannels;
  l.inputs = std::move(inputs);
  return l;
}

const LayerSpec* GraphSpec::find(std::string_view layer) const {
  for (const auto& l : layers)
    if (l.name == layer) return &l;
  return nullptr;
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::EmptyGraph: return "EmptyGraph";
    case ViolationKind::InvalidInputShape: return "InvalidInputShape";
    case ViolationKind::DuplicateName: return "DuplicateName";
    case ViolationKind::DanglingInput: return "DanglingInput";
    case ViolationKind::CycleAt: return "CycleAt";
    case ViolationKind::BadArity: return "BadArity";
    case ViolationKind::BadHyperparameter: return "BadHyperparameter";
    case ViolationKind::FactorOverlap: return "FactorOverlap";
    case ViolationKind::UnknownFactorLayer: return "UnknownFactorLayer";
    case ViolationKind::EmptyFactor: return "EmptyFactor";
    case ViolationKind::CrossFactorEdge: return "CrossFactorEdge";
    case ViolationKind::FactorEntryInput: return "FactorEntryInput";
    case ViolationKind::BadTrailing: return "BadTrailing";
  }
  return "?";
}

std::string Violation::describe() const {
  std::ostringstream os;
  os << to_string(kind) << "(";
  for (std::size_t i = 0; i < layers.size(); ++i) os << (i ? "," : "") << layers[i];
  os << ")";
  if (!detail.empty()) os << ": " << detail;
  return os.str();
}

namespace {

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

struct Resolved {
  std::unordered_map<std::string, std::size_t> index;
  // Per layer, resolved input indices; kNone marks the graph input. Dangling
  // references are dropped.
  std::vector<std::vector<std::size_t>> inputs;
};

Resolved resolve(const GraphSpec& g) {
  Resolved r;
  for (std::size_t i = 0; i < g.layers.size(); ++i) r.index.emplace(g.layers[i].name, i);
  r.inputs.resize(g.layers.size());
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    for (const auto& in : g.layers[i].inputs) {
      if (in == kGraphInput) {
        r.inputs[i].push_back(kNone);
      } else if (auto it = r.index.find(in); it != r.index.end()) {
        r.inputs[i].push_back(it->second);
      }
    }
  }
  return r;
}

// Kahn's algorithm with declaration-order tie-breaking. Returns the layers that
// could be ordered; anything missing sits on or behind a cycle.
std::vector<std::size_t> kahn(std::size_t n, const std::vector<std::vector<std::size_t>>& inputs) {
  std::vector<std::size_t> indegree(n, 0);
  std::vector<std::vector<std::size_t>> consumers(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t src : inputs[i]) {
      if (src == kNone) continue;
      ++indegree[i];
      consumers[src].push_back(i);
    }
  }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.push(i);
  std::vector<std::size_t> order;
  order.reserve(n);
  while (!ready.empty()) {
    std::size_t i = ready.top();
    ready.pop();
    order.push_back(i);
    for (std::size_t c : consumers[i])
      if (--indegree[c] == 0) ready.push(c);
  }
  return order;
}

// Tarjan SCC restricted to `nodes`; yields cycles (SCCs of size > 1 or with a
// self-loop), each sorted by declaration index.
std::vector<std::vector<std::size_t>> find_cycles(
    const std::vector<std::size_t>& nodes, const std::vector<std::vector<std::size_t>>& inputs) {
  std::vector<char> member(inputs.size(), 0);
  for (auto v : nodes) member[v] = 1;
  std::vector<int> idx(inputs.size(), -1), low(inputs.size(), 0);
  std::vector<char> on_stack(inputs.size(), 0);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> out;
  int counter = 0;

  std::function<void(std::size_t)> strong = [&](std::size_t v) {
    idx[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = 1;
    for (auto w : inputs[v]) {
      if (w == kNone || !member[w]) continue;
      if (idx[w] < 0) {
        strong(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], idx[w]);
      }
    }
    if (low[v] == idx[v]) {
      std::vector<std::size_t> comp;
      std::size_t w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = 0;
        comp.push_back(w);
      } while (w != v);
      bool self_loop = std::find(inputs[v].begin(), inputs[v].end(), v) != inputs[v].end();
      if (comp.size() > 1 || self_loop) {
        std::sort(comp.begin(), comp.end());
        out.push_back(std::move(comp));
      }
    }
  };
  for (auto v : nodes)
    if (idx[v] < 0) strong(v);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

}  // namespace

std::vector<Violation> validate(const GraphSpec& g) {
  std::vector<Violation> v;
  auto add = [&](ViolationKind k, std::vector<std::string> names, std::string detail = {}) {
    v.push_back({k, std::move(names), std::move(detail)});
  };

  if (!g.input_shape.valid())
    add(ViolationKind::InvalidInputShape, {}, "input shape " + to_string(g.input_shape));
  if (g.layers.empty()) {
    add(ViolationKind::EmptyGraph, {}, "graph declares no layers");
    return v;
  }

  std::unordered_set<std::string> seen;
  for (const auto& l : g.layers) {
    if (l.name.empty() || l.name == kGraphInput)
      add(ViolationKind::BadHyperparameter, {l.name}, "reserved or empty layer name");
    if (!seen.insert(l.name).second) add(ViolationKind::DuplicateName, {l.name});
  }

  for (const auto& l : g.layers) {
    const bool single = l.kind != LayerKind::ConcatChannels;
    if (single ? l.inputs.size() != 1 : l.inputs.empty())
      add(ViolationKind::BadArity, {l.name},
          std::to_string(l.inputs.size()) + " inputs for " + std::string(to_string(l.kind)));
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::MaxPool) {
      if (l.kernel.h < 1 || l.kernel.w < 1 || l.stride.h < 1 || l.stride.w < 1 ||
          l.padding.h < 0 || l.padding.w < 0)
        add(ViolationKind::BadHyperparameter, {l.name}, "kernel/stride must be >= 1, padding >= 0");
    }
    if (l.kind == LayerKind::Conv && l.out_channels < 1)
      add(ViolationKind::BadHyperparameter, {l.name}, "out_channels must be >= 1");
    for (const auto& in : l.inputs)
      if (in != kGraphInput && !seen.contains(in))
        add(ViolationKind::DanglingInput, {l.name, in}, "unknown input '" + in + "'");
  }

  const Resolved r = resolve(g);
  const std::size_t n = g.layers.size();
  auto order = kahn(n, r.inputs);
  if (order.size() != n) {
    std::vector<char> placed(n, 0);
    for (auto i : order) placed[i] = 1;
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < n; ++i)
      if (!placed[i]) rest.push_back(i);
    for (const auto& cyc : find_cycles(rest, r.inputs)) {
      std::vector<std::string> names;
      for (auto i : cyc) names.push_back(g.layers[i].name);
      add(ViolationKind::CycleAt, std::move(names));
    }
  }

  // Factor membership.
  std::vector<std::size_t> owner(n, kNone);
  for (std::size_t f = 0; f < g.factors.size(); ++f) {
    const auto& fac = g.factors[f];
    if (fac.body.empty()) {
      add(ViolationKind::EmptyFactor, {}, "factor '" + fac.name + "' has no layers");
      continue;
    }
    for (const auto& name : fac.body) {
      auto it = r.index.find(name);
      if (it == r.index.end()) {
        add(ViolationKind::UnknownFactorLayer, {name}, "in factor '" + fac.name + "'");
        continue;
      }
      if (owner[it->second] != kNone) {
        add(ViolationKind::FactorOverlap, {name},
            "claimed by '" + g.factors[owner[it->second]].name + "' and '" + fac.name + "'");
        continue;
      }
      owner[it->second] = f;
    }
  }

  std::size_t trailing = kNone;
  if (g.trailing) {
    if (auto it = r.index.find(*g.trailing); it != r.index.end()) trailing = it->second;
    else add(ViolationKind::BadTrailing, {*g.trailing}, "trailing layer does not exist");
  }

  // Stem output: last stem layer in declaration order.
  std::size_t stem_out = kNone;
  for (std::size_t i = 0; i < n; ++i)
    if (owner[i] == kNone && i != trailing) stem_out = i;
  const std::string stem_out_name =
      stem_out == kNone ? std::string(kGraphInput) : g.layers[stem_out].name;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = g.layers[i];
    if (i == trailing) continue;
    if (owner[i] != kNone && g.factors[owner[i]].entry() == l.name) {
      if (l.inputs != std::vector<std::string>{stem_out_name})
        add(ViolationKind::FactorEntryInput, {l.name},
            "factor entry must consume exactly '" + stem_out_name + "'");
      continue;
    }
    for (std::size_t k = 0; k < r.inputs[i].size(); ++k) {
      std::size_t src = r.inputs[i][k];
      std::size_t src_owner = src == kNone ? kNone : owner[src];
      if (src != kNone && src == trailing) {
        add(ViolationKind::BadTrailing, {l.name, g.layers[src].name}, "trailing merge must be terminal");
        continue;
      }
      if (owner[i] != kNone && src_owner != owner[i]) {
        add(ViolationKind::CrossFactorEdge,
            {src == kNone ? std::string(kGraphInput) : g.layers[src].name, l.name},
            "factor '" + g.factors[owner[i]].name + "' reads outside its body");
      } else if (owner[i] == kNone && src_owner != kNone) {
        add(ViolationKind::CrossFactorEdge, {g.layers[src].name, l.name},
            "stem layer reads from factor '" + g.factors[src_owner].name + "'");
      }
    }
  }

  if (trailing != kNone) {
    const auto& t = g.layers[trailing];
    std::vector<std::string> exits;
    for (const auto& fac : g.factors)
      if (!fac.body.empty()) exits.push_back(fac.exit());
    if (t.kind != LayerKind::ConcatChannels)
      add(ViolationKind::BadTrailing, {t.name}, "trailing merge must be a concat");
    else if (owner[trailing] != kNone)
      add(ViolationKind::BadTrailing, {t.name}, "trailing merge belongs to a factor");
    else if (g.factors.empty() || t.inputs != exits)
      add(ViolationKind::BadTrailing, {t.name}, "trailing merge must consume every factor exit in order");
  }
  return v;
}

void require_valid(const GraphSpec& graph) {
  auto v = validate(graph);
  if (v.empty()) return;
  std::ostringstream os;
  os << "graph '" << graph.name << "' is invalid:";
  for (const auto& x : v) os << "\n  " << x.describe();
  throw SpecError(os.str());
}

std::vector<std::string> topo_order(const GraphSpec& graph) {
  require_valid(graph);
  const Resolved r = resolve(graph);
  std::vector<std::string> names;
  for (auto i : kahn(graph.layers.size(), r.inputs)) names.push_back(graph.layers[i].name);
  return names;
}

GraphIndex GraphIndex::build(const GraphSpec& graph) {
  require_valid(graph);
  const Resolved r = resolve(graph);
  const std::size_t n = graph.layers.size();
  GraphIndex gi;
  gi.order = kahn(n, r.inputs);
  gi.inputs = r.inputs;
  gi.factor_of.assign(n, kNoFactor);
  for (std::size_t f = 0; f < graph.factors.size(); ++f)
    for (const auto& name : graph.factors[f].body) gi.factor_of[r.index.at(name)] = f;
  if (graph.trailing) gi.trailing = r.index.at(*graph.trailing);

  gi.factor_order.resize(graph.factors.size());
  for (auto i : gi.order) {
    if (gi.trailing && *gi.trailing == i) continue;
    if (gi.factor_of[i] == kNoFactor) gi.stem_order.push_back(i);
    else gi.factor_order[gi.factor_of[i]].push_back(i);
  }

  if (gi.trailing) {
    gi.outputs = {*gi.trailing};
  } else if (!graph.factors.empty()) {
    for (const auto& fac : graph.factors) gi.outputs.push_back(r.index.at(fac.exit()));
  } else {
    std::vector<char> consumed(n, 0);
    for (const auto& ins : r.inputs)
      for (auto s : ins)
        if (s != kNone) consumed[s] = 1;
    for (std::size_t i = 0; i < n; ++i)
      if (!consumed[i]) gi.outputs.push_back(i);
  }
  return gi;
}

std::vector<std::string> output_names(const GraphSpec& graph) {
  auto gi = GraphIndex::build(graph);
  std::vector<std::string> names;
  for (auto i : gi.outputs) names.push_back(graph.layers[i].name);
  return names;
}

}  // namespace factorkit
