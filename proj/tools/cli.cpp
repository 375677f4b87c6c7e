#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "factorkit/cost.hpp"
#include "factorkit/engine.hpp"
#include "factorkit/error.hpp"
#include "factorkit/gradcheck.hpp"
#include "factorkit/io.hpp"
#include "factorkit/model_format.hpp"
#include "factorkit/parallel.hpp"
#include "factorkit/zoo.hpp"

namespace factorkit::cli {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::vector<std::string> models;
  std::string input;
  std::string order = "chw";
  std::string mult = "1";
  std::uint64_t seed = 0;
  std::size_t lanes = 4;
  std::size_t repeats = 5;
  std::string out;
  std::string baseline;
  std::string model;
  std::string image;
  std::string params;
  double epsilon = 1e-3;
  double threshold = 1e-3;
};

GraphSpec resolve_model(const std::string& source, const Options& o) {
  const Ratio width = parse_ratio(o.mult);
  std::optional<Shape> shape;
  if (!o.input.empty()) shape = parse_shape(o.input, o.order == "whc");

  if (auto zoo = parse_zoo_model(source)) {
    ZooConfig cfg{*zoo, width};
    if (shape) cfg.input_shape = *shape;
    return build_model(cfg);
  }
  if (!fs::is_regular_file(source))
    throw SpecError("unknown model '" + source + "': not a zoo name (googlenet4e, factornet_v1, "
                    "factornet_v2) or a readable spec file");
  if (!(width == Ratio{1, 1})) throw SpecError("--mult applies to zoo models only");
  GraphSpec g = load_model(source);
  if (shape) g.input_shape = *shape;
  return g;
}

// Validation failures are reported as data before anything else runs.
bool report_violations(const GraphSpec& g, std::ostream& err) {
  auto v = validate(g);
  for (const auto& x : v) err << "violation: " << x.describe() << '\n';
  return v.empty();
}

Tensor random_input(const Shape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  Tensor t({1, s.channels, s.height, s.width});
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

std::size_t capped_lanes(std::size_t requested) {
  if (const char* env = std::getenv("FACTORKIT_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && cap >= 1) return std::min(requested, static_cast<std::size_t>(cap));
  }
  return requested;
}

// Writes CSV to --out when given, otherwise to stdout.
template <typename Fn>
void emit_csv(const Options& o, std::ostream& out, Fn&& write) {
  if (o.out.empty()) {
    write(out);
    return;
  }
  std::ofstream f(o.out, std::ios::binary);
  if (!f) throw FormatError("cannot write '" + o.out + "'");
  write(f);
}

int cmd_validate(const Options& o, std::ostream& out, std::ostream& err) {
  const GraphSpec g = resolve_model(o.models.front(), o);
  if (!report_violations(g, err)) return kUsage;
  out << g.name << ": ok (" << g.layers.size() << " layers, " << g.factors.size() << " factors)\n";
  return kOk;
}

int cmd_analyze(const Options& o, std::ostream& out, std::ostream& err) {
  const GraphSpec g = resolve_model(o.models.front(), o);
  if (!report_violations(g, err)) return kUsage;
  const CostReport r = analyze(g);
  emit_csv(o, out, [&](std::ostream& os) { write_cost_csv(os, r); });
  for (const auto& f : r.outputs) out << "output " << f.name << ' ' << to_string(f.shape) << '\n';
  out << "totals model=" << r.model << " input=" << to_string(r.input) << " weights=" << r.total_weights
      << " macs=" << r.total_macs << " output_channels=" << r.total_output_channels
      << " features=" << r.total_features << '\n';
  return kOk;
}

int cmd_compare(const Options& o, std::ostream& out, std::ostream& err) {
  std::vector<CostReport> reports;
  for (const auto& m : o.models) {
    const GraphSpec g = resolve_model(m, o);
    if (!report_violations(g, err)) return kUsage;
    reports.push_back(analyze(g));
  }
  const std::string baseline = o.baseline.empty() ? reports.front().model : o.baseline;
  const ComparisonReport r = compare(std::span<const CostReport>(reports), baseline);
  emit_csv(o, out, [&](std::ostream& os) { write_comparison_csv(os, r); });
  write_comparison_table(out, r);
  return kOk;
}

int cmd_run(const Options& o, std::ostream& out, std::ostream& err) {
  if (!fs::is_regular_file(o.image)) {
    err << "error: image '" << o.image << "' not found\n";
    return kUsage;
  }
  Tensor image = load_ppm(o.image);
  Options shaped = o;
  if (parse_zoo_model(o.models.front())) {
    shaped.input = to_string(image.dims().shape());
    shaped.order = "chw";
  }
  const GraphSpec g = resolve_model(o.models.front(), shaped);
  if (!report_violations(g, err)) return kUsage;
  const CompiledGraph graph(g);
  const Parameters params = o.params.empty() ? init_params(graph, o.seed) : load_parameters(o.params);
  check_params(graph, params);

  const auto outputs = run_parallel(graph, params, image, capped_lanes(o.lanes));
  const fs::path dir = o.out.empty() ? fs::path(".") : fs::path(o.out);
  fs::create_directories(dir);
  const auto names = output_names(g);
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    if (!all_finite(outputs[k])) throw NumericError("output '" + names[k] + "' contains non-finite values");
    const fs::path file = dir / (g.name + "_out" + std::to_string(k) + ".fkt");
    save_tensor(file, names[k], outputs[k]);
    out << "output " << k << ' ' << names[k] << ' ' << to_string(outputs[k].dims().shape()) << ' '
        << file.string() << '\n';
  }
  return kOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out, std::ostream& err) {
  const GraphSpec g = resolve_model(o.models.front(), o);
  if (!report_violations(g, err)) return kUsage;
  const CompiledGraph graph(g);
  const Parameters params = init_params(graph, o.seed);
  const Tensor input = random_input(g.input_shape, o.seed);
  const GradCheckReport r = grad_check(graph, params, input, o.epsilon, o.threshold);
  emit_csv(o, out, [&](std::ostream& os) {
    os << "layer,part,checked,excluded,max_rel_error\n";
    char buf[64];
    for (const auto& e : r.entries) {
      std::snprintf(buf, sizeof buf, "%.6e", e.max_rel_error);
      os << e.layer << ',' << e.part << ',' << e.checked << ',' << e.excluded << ',' << buf << '\n';
    }
  });
  char line[256];
  std::snprintf(line, sizeof line,
                "gradcheck model=%s max_rel_error=%.6e threshold=%.1e checked=%lld excluded=%lld %s\n",
                g.name.c_str(), r.max_rel_error, r.threshold, static_cast<long long>(r.checked),
                static_cast<long long>(r.excluded), r.passed ? "PASS" : "FAIL");
  out << line;
  return r.passed ? kOk : kNumeric;
}

int cmd_bench(const Options& o, std::ostream& out, std::ostream& err) {
  std::vector<BenchResult> results;
  for (const auto& m : o.models) {
    const GraphSpec g = resolve_model(m, o);
    if (!report_violations(g, err)) return kUsage;
    const CompiledGraph graph(g);
    const Parameters params = init_params(graph, o.seed);
    results.push_back(bench(graph, params, random_input(g.input_shape, o.seed), capped_lanes(o.lanes), o.repeats));
  }
  emit_csv(o, out, [&](std::ostream& os) { write_bench_csv(os, results); });
  return kOk;
}

int cmd_export(const Options& o, std::ostream& out, std::ostream& err) {
  const GraphSpec g = resolve_model(o.models.front(), o);
  if (!report_violations(g, err)) return kUsage;
  const std::string text = export_model(g);
  emit_csv(o, out, [&](std::ostream& os) { os << text; });
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"factorkit: factorized CNN analysis, execution, and verification"};
  app.require_subcommand(1, 1);
  Options o;

  auto shape_flags = [&](CLI::App* s) {
    s->add_option("--input", o.input, "input shape, CxHxW by default");
    s->add_option("--order", o.order, "axis order of --input")->check(CLI::IsMember({"chw", "whc"}));
    s->add_option("--mult", o.mult, "width multiplier p/q for zoo models");
  };
  auto out_flag = [&](CLI::App* s, const char* what) { s->add_option("--out", o.out, what); };

  auto* validate_cmd = app.add_subcommand("validate", "check a model for structural violations");
  validate_cmd->add_option("model", o.models, "zoo name or spec file")->required()->expected(1);
  shape_flags(validate_cmd);

  auto* analyze_cmd = app.add_subcommand("analyze", "per-layer shapes, weights, and MACs");
  analyze_cmd->add_option("model", o.models, "zoo name or spec file")->required()->expected(1);
  shape_flags(analyze_cmd);
  out_flag(analyze_cmd, "CSV path (default: stdout)");

  auto* compare_cmd = app.add_subcommand("compare", "weight, MAC, and feature ratios against a baseline");
  compare_cmd->add_option("models", o.models, "zoo names or spec files")->required()->expected(1, -1);
  compare_cmd->add_option("--baseline", o.baseline, "baseline model name (default: first model)");
  shape_flags(compare_cmd);
  out_flag(compare_cmd, "CSV path (default: stdout)");

  auto* run_cmd = app.add_subcommand("run", "forward pass on a P6 PPM image");
  run_cmd->add_option("model", o.model, "zoo name or spec file")->required();
  run_cmd->add_option("image", o.image, "binary PPM image")->required();
  run_cmd->add_option("--params", o.params, "FKT1 parameter file (default: random init)");
  run_cmd->add_option("--seed", o.seed, "initialization seed");
  run_cmd->add_option("--lanes", o.lanes, "factor lanes")->check(CLI::PositiveNumber);
  run_cmd->add_option("--mult", o.mult, "width multiplier p/q for zoo models");
  out_flag(run_cmd, "directory for output tensors (default: .)");

  auto* grad_cmd = app.add_subcommand("gradcheck", "analytic vs central-difference gradients");
  grad_cmd->add_option("model", o.models, "zoo name or spec file")->required()->expected(1);
  shape_flags(grad_cmd);
  grad_cmd->add_option("--seed", o.seed, "seed for parameters and input");
  grad_cmd->add_option("--epsilon", o.epsilon, "central-difference step")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--threshold", o.threshold, "max relative error")->check(CLI::PositiveNumber);
  out_flag(grad_cmd, "CSV path (default: stdout)");

  auto* bench_cmd = app.add_subcommand("bench", "sequential vs factor-parallel wall time");
  bench_cmd->add_option("models", o.models, "zoo names or spec files")->required()->expected(1, -1);
  shape_flags(bench_cmd);
  bench_cmd->add_option("--seed", o.seed, "seed for parameters and input");
  bench_cmd->add_option("--lanes", o.lanes, "factor lanes (capped by FACTORKIT_THREADS)")
      ->check(CLI::PositiveNumber);
  bench_cmd->add_option("--repeats", o.repeats, "timed repetitions, at least 5")->check(CLI::Range(5, 1000000));
  out_flag(bench_cmd, "CSV path (default: stdout)");

  auto* export_cmd = app.add_subcommand("export", "print a model in the text spec format");
  export_cmd->add_option("model", o.models, "zoo name or spec file")->required()->expected(1);
  shape_flags(export_cmd);
  out_flag(export_cmd, "output path (default: stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    if (!o.model.empty()) o.models = {o.model};
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    auto* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    if (name == "validate") return cmd_validate(o, out, err);
    if (name == "analyze") return cmd_analyze(o, out, err);
    if (name == "compare") return cmd_compare(o, out, err);
    if (name == "run") return cmd_run(o, out, err);
    if (name == "gradcheck") return cmd_gradcheck(o, out, err);
    if (name == "bench") return cmd_bench(o, out, err);
    if (name == "export") return cmd_export(o, out, err);
  } catch (const SpecError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kNumeric;
  }
  return kUsage;
}

}  // namespace factorkit::cli
