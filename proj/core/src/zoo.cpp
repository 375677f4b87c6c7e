#include "factorkit/zoo.hpp"

#include <array>
#include <charconv>
#include <vector>

#include "factorkit/error.hpp"

namespace factorkit {

std::string_view to_string(ZooModel model) {
  switch (model) {
    case ZooModel::GoogleNet4e: return "googlenet4e";
    case ZooModel::FactorNetV1: return "factornet_v1";
    case ZooModel::FactorNetV2: return "factornet_v2";
  }
  return "?";
}

std::optional<ZooModel> parse_zoo_model(std::string_view name) {
  for (auto m : {ZooModel::GoogleNet4e, ZooModel::FactorNetV1, ZooModel::FactorNetV2})
    if (to_string(m) == name) return m;
  return std::nullopt;
}

std::int64_t Ratio::scale(std::int64_t channels) const {
  std::int64_t v = (2 * channels * num + den) / (2 * den);
  return v < 1 ? 1 : v;
}

Ratio parse_ratio(const std::string& text) {
  auto number = [&](std::string_view s) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || v < 1)
      throw SpecError("bad width multiplier '" + text + "': expected p/q with positive integers");
    return v;
  };
  Ratio r;
  auto slash = text.find('/');
  std::string_view sv = text;
  if (slash == std::string::npos) {
    r.num = number(sv);
  } else {
    r.num = number(sv.substr(0, slash));
    r.den = number(sv.substr(slash + 1));
  }
  if (r.num > r.den) throw SpecError("width multiplier '" + text + "' must lie in (0, 1]");
  return r;
}

namespace {

// Appends layers to a graph and optionally to a factor body.
class Builder {
 public:
  Builder(GraphSpec& g, Ratio width) : g_(g), width_(width) {}

  void begin_factor(std::string name) {
    g_.factors.push_back({std::move(name), {}});
    in_factor_ = true;
  }
  void end_factor() { in_factor_ = false; }

  // conv followed by relu; returns the relu name.
  std::string conv_relu(const std::string& name, const std::string& in, std::int64_t k,
                        std::int64_t s, Extent pad, std::int64_t out) {
    add(make_conv(name, in, {k, k}, {s, s}, pad, width_.scale(out), true));
    add(make_relu(name + "_relu", name));
    return name + "_relu";
  }

  std::string pool(const std::string& name, const std::string& in, std::int64_t k, std::int64_t s,
                   Extent pad) {
    add(make_maxpool(name, in, {k, k}, {s, s}, pad));
    return name;
  }

  std::string concat(const std::string& name, std::vector<std::string> ins) {
    add(make_concat(name, std::move(ins)));
    return name;
  }

 private:
  void add(LayerSpec l) {
    if (in_factor_) g_.factors.back().body.push_back(l.name);
    g_.layers.push_back(std::move(l));
  }

  GraphSpec& g_;
  Ratio width_;
  bool in_factor_ = false;
};

Extent same(std::int64_t k) { return {k / 2, k / 2}; }

// The last stride-2 stage pads height one less than width. This reproduces the
// published 4e map size at 1920x1080: height floors (135 -> 67) while width
// stays exact (240 -> 120).
Extent final_down(std::int64_t k) { return {k / 2 - 1, k / 2}; }

struct InceptionWidths {
  const char* name;
  std::int64_t b1, b2_reduce, b2, b3_reduce, b3, pool_proj;
};

// Published GoogLeNet inception branch widths, 3a through 4e.
constexpr std::array<InceptionWidths, 7> kInception = {{
    {"inception_3a", 64, 96, 128, 16, 32, 32},
    {"inception_3b", 128, 128, 192, 32, 96, 64},
    {"inception_4a", 192, 96, 208, 16, 48, 64},
    {"inception_4b", 160, 112, 224, 24, 64, 64},
    {"inception_4c", 128, 128, 256, 24, 64, 64},
    {"inception_4d", 112, 144, 288, 32, 64, 64},
    {"inception_4e", 256, 160, 320, 32, 128, 128},
}};

std::string inception(Builder& b, const InceptionWidths& w, const std::string& in) {
  const std::string p = w.name;
  auto b1 = b.conv_relu(p + "_1x1", in, 1, 1, {0, 0}, w.b1);
  auto r2 = b.conv_relu(p + "_3x3_reduce", in, 1, 1, {0, 0}, w.b2_reduce);
  auto b2 = b.conv_relu(p + "_3x3", r2, 3, 1, same(3), w.b2);
  auto r3 = b.conv_relu(p + "_5x5_reduce", in, 1, 1, {0, 0}, w.b3_reduce);
  auto b3 = b.conv_relu(p + "_5x5", r3, 5, 1, same(5), w.b3);
  auto pl = b.pool(p + "_pool", in, 3, 1, same(3));
  auto b4 = b.conv_relu(p + "_pool_proj", pl, 1, 1, {0, 0}, w.pool_proj);
  return b.concat(p + "_output", {b1, b2, b3, b4});
}

// GoogleNet layers up to the second pooling stage ("Part A").
std::string part_a(Builder& b, const std::string& in) {
  auto x = b.conv_relu("conv1", in, 7, 2, same(7), 64);
  x = b.pool("pool1", x, 3, 2, same(3));
  x = b.conv_relu("conv2_reduce", x, 1, 1, {0, 0}, 64);
  x = b.conv_relu("conv2", x, 3, 1, same(3), 192);
  return b.pool("pool2", x, 3, 2, same(3));
}

GraphSpec empty_graph(const ZooConfig& cfg) {
  GraphSpec g;
  g.name = std::string(to_string(cfg.model));
  g.input_shape = cfg.input_shape;
  return g;
}

}  // namespace

GraphSpec build_googlenet4e(const ZooConfig& cfg) {
  GraphSpec g = empty_graph({ZooModel::GoogleNet4e, cfg.width, cfg.input_shape});
  Builder b(g, cfg.width);
  auto x = part_a(b, std::string(kGraphInput));
  x = inception(b, kInception[0], x);
  x = inception(b, kInception[1], x);
  x = b.pool("pool3", x, 3, 2, final_down(3));
  for (std::size_t i = 2; i < kInception.size(); ++i) x = inception(b, kInception[i], x);
  return g;
}

// Canonical FactorNet_V1 factor widths. Stride 2 happens once per factor
// (stem output is already at stride 8).
GraphSpec build_factornet_v1(const ZooConfig& cfg) {
  GraphSpec g = empty_graph({ZooModel::FactorNetV1, cfg.width, cfg.input_shape});
  Builder b(g, cfg.width);
  const auto stem = part_a(b, std::string(kGraphInput));

  b.begin_factor("f1_pool");
  auto x = b.pool("f1_pool1", stem, 3, 2, final_down(3));
  x = b.conv_relu("f1_conv1", x, 1, 1, {0, 0}, 96);
  x = b.pool("f1_pool2", x, 3, 1, same(3));
  b.conv_relu("f1_conv2", x, 1, 1, {0, 0}, 192);
  b.end_factor();

  struct Family {
    const char* name;
    std::int64_t k, reduce, mid;
  };
  for (const Family& f : {Family{"f2_conv3", 3, 64, 128}, Family{"f3_conv5", 5, 32, 64},
                          Family{"f4_conv7", 7, 24, 48}}) {
    const std::string p = std::string(f.name).substr(0, 2);
    b.begin_factor(f.name);
    x = b.conv_relu(p + "_reduce", stem, 1, 1, {0, 0}, f.reduce);
    x = b.conv_relu(p + "_conv1", x, f.k, 2, final_down(f.k), f.mid);
    b.conv_relu(p + "_expand", x, 1, 1, {0, 0}, 192);
    b.end_factor();
  }
  return g;
}

// Canonical FactorNet_V2 factor widths: four stride-2 stages from the raw
// input, then a 1x1 expansion to 416 channels per factor.
GraphSpec build_factornet_v2(const ZooConfig& cfg) {
  GraphSpec g = empty_graph({ZooModel::FactorNetV2, cfg.width, cfg.input_shape});
  Builder b(g, cfg.width);
  const std::string in(kGraphInput);
  constexpr std::int64_t kExit = 416;

  b.begin_factor("f1_pool");
  std::string x = in;
  const std::array<std::int64_t, 3> pool_widths = {32, 64, 64};
  for (std::size_t i = 0; i < pool_widths.size(); ++i) {
    const auto n = std::to_string(i + 1);
    x = b.pool("f1_pool" + n, x, 3, 2, same(3));
    x = b.conv_relu("f1_conv" + n, x, 1, 1, {0, 0}, pool_widths[i]);
  }
  x = b.pool("f1_pool4", x, 3, 2, final_down(3));
  b.conv_relu("f1_expand", x, 1, 1, {0, 0}, kExit);
  b.end_factor();

  struct Family {
    const char* name;
    std::int64_t k;
    std::array<std::int64_t, 4> widths;
  };
  for (const Family& f : {Family{"f2_conv3", 3, {32, 32, 64, 96}},
                          Family{"f3_conv5", 5, {24, 32, 48, 64}},
                          Family{"f4_conv7", 7, {24, 32, 32, 48}}}) {
    const std::string p = std::string(f.name).substr(0, 2);
    b.begin_factor(f.name);
    x = in;
    for (std::size_t i = 0; i < f.widths.size(); ++i) {
      const bool last = i + 1 == f.widths.size();
      x = b.conv_relu(p + "_conv" + std::to_string(i + 1), x, f.k, 2,
                      last ? final_down(f.k) : same(f.k), f.widths[i]);
    }
    b.conv_relu(p + "_expand", x, 1, 1, {0, 0}, kExit);
    b.end_factor();
  }
  return g;
}

GraphSpec build_model(const ZooConfig& cfg) {
  switch (cfg.model) {
    case ZooModel::GoogleNet4e: return build_googlenet4e(cfg);
    case ZooModel::FactorNetV1: return build_factornet_v1(cfg);
    case ZooModel::FactorNetV2: return build_factornet_v2(cfg);
  }
  throw SpecError("unknown zoo model");
}

}  // namespace factorkit
