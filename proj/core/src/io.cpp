#include "factorkit/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "factorkit/error.hpp"

namespace factorkit {
namespace {

constexpr std::array<char, 4> kMagic = {'F', 'K', 'T', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

void put_floats(std::ostream& os, std::span<const float> values) {
  for (float f : values) put_u32(os, std::bit_cast<std::uint32_t>(f));
}

void need(std::istream& is, char* dst, std::size_t n, const char* what) {
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw FormatError(std::string("truncated FKT1 data reading ") + what);
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  need(is, reinterpret_cast<char*>(b), 4, what);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

void get_floats(std::istream& is, std::span<float> out) {
  for (float& f : out) f = std::bit_cast<float>(get_u32(is, "payload"));
}

struct Record {
  std::string name;
  Tensor data;
  std::vector<float> bias;
  bool has_bias = false;
};

void write_record(std::ostream& os, const std::string& name, const Tensor& t, const std::vector<float>* bias) {
  put_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  const Dims& d = t.dims();
  for (auto v : {d.n, d.c, d.h, d.w}) put_u32(os, static_cast<std::uint32_t>(v));
  const bool with_bias = bias && !bias->empty();
  os.put(with_bias ? 1 : 0);
  put_floats(os, t.data());
  if (with_bias) put_floats(os, *bias);
}

Record read_record(std::istream& is) {
  Record r;
  const auto len = get_u32(is, "name length");
  if (len > (1u << 16)) throw FormatError("FKT1 record name is implausibly long");
  r.name.resize(len);
  need(is, r.name.data(), len, "name");
  Dims d;
  d.n = get_u32(is, "dims");
  d.c = get_u32(is, "dims");
  d.h = get_u32(is, "dims");
  d.w = get_u32(is, "dims");
  if (d.count() > (std::int64_t{1} << 32)) throw FormatError("FKT1 record '" + r.name + "' is implausibly large");
  char flag = 0;
  need(is, &flag, 1, "bias flag");
  if (flag != 0 && flag != 1) throw FormatError("FKT1 record '" + r.name + "' has a bad bias flag");
  r.has_bias = flag == 1;
  r.data = Tensor(d);
  get_floats(is, r.data.data());
  if (r.has_bias) {
    r.bias.resize(static_cast<std::size_t>(d.n));
    get_floats(is, r.bias);
  }
  return r;
}

std::uint32_t read_header(std::istream& is) {
  std::array<char, 4> magic{};
  need(is, magic.data(), 4, "magic");
  if (magic != kMagic) throw FormatError("not an FKT1 file (bad magic)");
  return get_u32(is, "record count");
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write '" + path.string() + "'");
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path.string() + "'");
  return is;
}

}  // namespace

void write_parameters(std::ostream& os, const CompiledGraph& graph, const Parameters& params) {
  check_params(graph, params);
  std::vector<std::size_t> convs;
  for (auto i : graph.index().order)
    if (graph.layer(i).kind == LayerKind::Conv) convs.push_back(i);
  os.write(kMagic.data(), 4);
  put_u32(os, static_cast<std::uint32_t>(convs.size()));
  for (auto i : convs) {
    const auto& p = params.at(graph.layer(i).name);
    write_record(os, graph.layer(i).name, p.weight, &p.bias);
  }
}

void save_parameters(const std::filesystem::path& path, const CompiledGraph& graph, const Parameters& params) {
  auto os = open_out(path);
  write_parameters(os, graph, params);
}

Parameters read_parameters(std::istream& is) {
  const auto count = read_header(is);
  Parameters params;
  for (std::uint32_t k = 0; k < count; ++k) {
    Record r = read_record(is);
    ConvParams p{std::move(r.data), std::move(r.bias)};
    if (!params.emplace(r.name, std::move(p)).second) throw FormatError("duplicate FKT1 record '" + r.name + "'");
  }
  return params;
}

Parameters load_parameters(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_parameters(is);
}

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  os.write(kMagic.data(), 4);
  put_u32(os, 1);
  write_record(os, name, t, nullptr);
}

void save_tensor(const std::filesystem::path& path, const std::string& name, const Tensor& t) {
  auto os = open_out(path);
  write_tensor(os, name, t);
}

Tensor read_tensor(std::istream& is, std::string* name) {
  if (read_header(is) != 1) throw FormatError("tensor files hold exactly one FKT1 record");
  Record r = read_record(is);
  if (r.has_bias) throw FormatError("tensor record '" + r.name + "' unexpectedly carries a bias");
  if (name) *name = r.name;
  return std::move(r.data);
}

Tensor load_tensor(const std::filesystem::path& path, std::string* name) {
  auto is = open_in(path);
  return read_tensor(is, name);
}

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string ppm_token(std::istream& is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw FormatError("truncated PPM header");
  return tok;
}

std::int64_t ppm_number(std::istream& is, const char* what) {
  const std::string t = ppm_token(is);
  if (t.empty() || !std::all_of(t.begin(), t.end(), [](char ch) { return ch >= '0' && ch <= '9'; }) ||
      t.size() > 9)
    throw FormatError(std::string("bad PPM ") + what + " '" + t + "'");
  return std::stoll(t);
}

}  // namespace

Tensor read_ppm(std::istream& is) {
  if (ppm_token(is) != "P6") throw FormatError("only binary PPM (P6) images are supported");
  const auto w = ppm_number(is, "width");
  const auto h = ppm_number(is, "height");
  const auto maxval = ppm_number(is, "maxval");
  if (w < 1 || h < 1) throw FormatError("PPM image has zero size");
  if (maxval < 1 || maxval > 65535) throw FormatError("PPM maxval must be in [1, 65535]");
  // ppm_token consumed the single whitespace byte after maxval.
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(w * h * 3 * bytes));
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(is.gcount()) != raw.size()) throw FormatError("truncated PPM pixel data");

  Tensor t({1, 3, h, w});
  const float denom = static_cast<float>(maxval);
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      for (std::int64_t c = 0; c < 3; ++c) {
        const std::size_t k = static_cast<std::size_t>((y * w + x) * 3 + c) * bytes;
        const unsigned v = bytes == 2 ? (unsigned(raw[k]) << 8) | raw[k + 1] : raw[k];
        t.at(0, c, y, x) = std::min(1.0f, static_cast<float>(v) / denom);
      }
    }
  }
  return t;
}

Tensor load_ppm(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_ppm(is);
}

void save_ppm(const std::filesystem::path& path, const Tensor& image) {
  const Dims& d = image.dims();
  if (d.n != 1 || d.c != 3) throw SpecError("save_ppm expects a (1, 3, H, W) tensor");
  auto os = open_out(path);
  os << "P6\n" << d.w << ' ' << d.h << "\n255\n";
  for (std::int64_t y = 0; y < d.h; ++y)
    for (std::int64_t x = 0; x < d.w; ++x)
      for (std::int64_t c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(0, c, y, x), 0.0f, 1.0f);
        os.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
      }
}

}  // namespace factorkit
