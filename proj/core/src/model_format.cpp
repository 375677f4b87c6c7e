#include "factorkit/model_format.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "factorkit/error.hpp"

namespace factorkit {
namespace {

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '_' || c == '.' || c == '-' || c == '/';
    if (!ok) return false;
  }
  return true;
}

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

class Parser {
 public:
  GraphSpec run(std::string_view text) {
    graph_.name = "unnamed";
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string_view::npos) end = text.size();
      ++line_no_;
      statement(text.substr(start, end - start));
      start = end + 1;
    }
    if (open_factor_) fail("factor '" + graph_.factors.back().name + "' is never closed");
    if (!saw_input_) fail("missing 'input <C>x<H>x<W>' header");
    return std::move(graph_);
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw SpecError("model spec line " + std::to_string(line_no_) + ": " + what);
  }

  std::int64_t integer(std::string_view s, std::string_view key) const {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
      fail("bad integer '" + std::string(s) + "' for " + std::string(key));
    return v;
  }

  Extent pair(std::string_view s, std::string_view key) const {
    auto x = s.find('x');
    if (x == std::string_view::npos) fail("expected <a>x<b> for " + std::string(key));
    return {integer(s.substr(0, x), key), integer(s.substr(x + 1), key)};
  }

  void statement(std::string_view raw) {
    if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    auto tok = split_ws(raw);
    if (tok.empty()) return;
    const std::string& kw = tok[0];

    if (kw == "}") {
      if (tok.size() != 1) fail("unexpected tokens after '}'");
      if (!open_factor_) fail("'}' without an open factor");
      open_factor_ = false;
      return;
    }
    if (kw == "model") {
      if (tok.size() != 2 || !valid_name(tok[1])) fail("expected 'model <name>'");
      graph_.name = tok[1];
      return;
    }
    if (kw == "input") {
      if (tok.size() != 2) fail("expected 'input <C>x<H>x<W>'");
      if (saw_input_) fail("duplicate input header");
      try {
        graph_.input_shape = parse_shape(tok[1]);
      } catch (const SpecError& e) {
        fail(e.what());
      }
      saw_input_ = true;
      return;
    }
    if (kw == "factor") {
      if (open_factor_) fail("factors cannot nest");
      if (tok.size() != 3 || tok[2] != "{" || !valid_name(tok[1]))
        fail("expected 'factor <name> {'");
      if (graph_.trailing) fail("factor declared after the trailing merge");
      graph_.factors.push_back({tok[1], {}});
      open_factor_ = true;
      return;
    }
    layer(kw, tok);
  }

  void layer(const std::string& kw, const std::vector<std::string>& tok) {
    LayerSpec l;
    if (kw == "conv") l.kind = LayerKind::Conv;
    else if (kw == "maxpool") l.kind = LayerKind::MaxPool;
    else if (kw == "relu") l.kind = LayerKind::ReLU;
    else if (kw == "concat") l.kind = LayerKind::ConcatChannels;
    else fail("unknown statement '" + kw + "'");

    if (tok.size() < 2 || !valid_name(tok[1])) fail("expected a layer name after '" + kw + "'");
    l.name = tok[1];

    std::map<std::string, std::string> kv;
    for (std::size_t i = 2; i < tok.size(); ++i) {
      auto eq = tok[i].find('=');
      if (eq == std::string::npos || eq == 0) fail("expected key=value, got '" + tok[i] + "'");
      auto key = tok[i].substr(0, eq);
      if (!kv.emplace(key, tok[i].substr(eq + 1)).second) fail("repeated key '" + key + "'");
    }

    auto allowed = [&](std::initializer_list<std::string_view> keys) {
      for (const auto& [k, _] : kv) {
        bool ok = false;
        for (auto a : keys) ok = ok || k == a;
        if (!ok) fail("unknown key '" + k + "' for " + kw);
      }
    };
    auto need = [&](const std::string& key) -> const std::string& {
      auto it = kv.find(key);
      if (it == kv.end()) fail(kw + " '" + l.name + "' is missing " + key + "=");
      return it->second;
    };

    switch (l.kind) {
      case LayerKind::Conv:
        allowed({"in", "k", "s", "p", "out", "bias"});
        l.out_channels = integer(need("out"), "out");
        if (auto it = kv.find("bias"); it != kv.end()) {
          if (it->second != "0" && it->second != "1") fail("bias must be 0 or 1");
          l.has_bias = it->second == "1";
        } else {
          l.has_bias = true;
        }
        [[fallthrough]];
      case LayerKind::MaxPool:
        if (l.kind == LayerKind::MaxPool) allowed({"in", "k", "s", "p"});
        l.kernel = pair(need("k"), "k");
        l.stride = kv.contains("s") ? pair(kv["s"], "s") : Extent{1, 1};
        l.padding = kv.contains("p") ? pair(kv["p"], "p") : Extent{0, 0};
        break;
      case LayerKind::ReLU:
        allowed({"in"});
        break;
      case LayerKind::ConcatChannels:
        allowed({"in"});
        break;
    }

    const std::string& in = need("in");
    std::size_t start = 0;
    while (true) {
      auto comma = in.find(',', start);
      std::string src = in.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (src != kGraphInput && !valid_name(src)) fail("bad input reference '" + src + "'");
      l.inputs.push_back(src);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (l.kind != LayerKind::ConcatChannels && l.inputs.size() != 1)
      fail(kw + " takes exactly one input");

    if (open_factor_) {
      graph_.factors.back().body.push_back(l.name);
    } else if (!graph_.factors.empty()) {
      if (graph_.trailing) fail("only one merge layer may follow the factor blocks");
      if (l.kind != LayerKind::ConcatChannels) fail("only a concat may follow the factor blocks");
      graph_.trailing = l.name;
    }
    graph_.layers.push_back(std::move(l));
  }

  GraphSpec graph_;
  std::size_t line_no_ = 0;
  bool open_factor_ = false;
  bool saw_input_ = false;
};

void write_layer(std::ostream& os, const LayerSpec& l, std::string_view indent) {
  os << indent << to_string(l.kind) << ' ' << l.name << " in=";
  for (std::size_t i = 0; i < l.inputs.size(); ++i) os << (i ? "," : "") << l.inputs[i];
  if (l.kind == LayerKind::Conv || l.kind == LayerKind::MaxPool) {
    os << " k=" << l.kernel.h << 'x' << l.kernel.w << " s=" << l.stride.h << 'x' << l.stride.w
       << " p=" << l.padding.h << 'x' << l.padding.w;
  }
  if (l.kind == LayerKind::Conv) os << " out=" << l.out_channels << " bias=" << (l.has_bias ? 1 : 0);
  os << '\n';
}

}  // namespace

GraphSpec parse_model(std::string_view text) { return Parser{}.run(text); }

GraphSpec load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError("cannot open model spec '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

std::string export_model(const GraphSpec& g) {
  std::ostringstream os;
  os << "model " << g.name << '\n';
  os << "input " << to_string(g.input_shape) << '\n';

  std::map<std::string, std::size_t> claimed;
  for (std::size_t f = 0; f < g.factors.size(); ++f)
    for (const auto& n : g.factors[f].body) claimed.emplace(n, f);

  for (const auto& l : g.layers)
    if (!claimed.contains(l.name) && (!g.trailing || *g.trailing != l.name)) write_layer(os, l, "");
  for (const auto& f : g.factors) {
    os << "factor " << f.name << " {\n";
    for (const auto& n : f.body)
      if (const auto* l = g.find(n)) write_layer(os, *l, "  ");
    os << "}\n";
  }
  if (g.trailing)
    if (const auto* l = g.find(*g.trailing)) write_layer(os, *l, "");
  return os.str();
}

}  // namespace factorkit
