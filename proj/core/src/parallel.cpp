#include "factorkit/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <ostream>
#include <thread>

#include "factorkit/cost.hpp"
#include "factorkit/error.hpp"

namespace factorkit {
namespace {

std::int64_t factor_macs(const CompiledGraph& graph, std::size_t f) {
  std::int64_t total = 0;
  const auto& shapes = graph.shapes();
  for (auto i : graph.index().factor_order[f]) {
    const auto src = graph.index().inputs[i].front();
    const Shape& in = src == GraphIndex::kInput ? graph.spec().input_shape : shapes[src];
    total += count_macs(graph.layer(i), in);
  }
  return total;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

ExecPlan make_plan(const CompiledGraph& graph, std::size_t lanes) {
  if (lanes < 1) throw SpecError("lane count must be at least 1");
  const auto& index = graph.index();
  ExecPlan plan;
  plan.stem = index.stem_order;
  if (index.trailing) plan.trailing = {*index.trailing};
  const std::size_t factors = index.factor_order.size();
  plan.lanes.resize(std::max<std::size_t>(1, std::min(lanes, factors)));
  for (std::size_t f = 0; f < factors; ++f) plan.lanes[f % plan.lanes.size()].push_back(f);

  std::vector<std::int64_t> macs(factors);
  for (std::size_t f = 0; f < factors; ++f) macs[f] = factor_macs(graph, f);
  for (auto& lane : plan.lanes)
    std::stable_sort(lane.begin(), lane.end(), [&](std::size_t a, std::size_t b) { return macs[a] > macs[b]; });
  return plan;
}

std::vector<Tensor> run_plan(const CompiledGraph& graph, const ExecPlan& plan, const Parameters& params,
                             const Tensor& input, ExecStats* stats) {
  ForwardCache cache = make_cache(graph, input);
  run_layers(graph, params, plan.stem, cache, stats);

  const auto& factor_order = graph.index().factor_order;
  const std::size_t factors = factor_order.size();
  std::vector<std::exception_ptr> errors(factors);
  std::vector<char> finished(factors, 0);
  std::atomic<bool> cancel{false};

  auto run_factor = [&](std::size_t f) {
    try {
      run_layers(graph, params, factor_order[f], cache, stats, &cancel);
      if (!cancel.load()) finished[f] = 1;
    } catch (...) {
      errors[f] = std::current_exception();
      cancel.store(true);
    }
  };
  auto run_lane = [&](const std::vector<std::size_t>& lane) {
    for (auto f : lane) {
      if (cancel.load()) return;
      run_factor(f);
    }
  };

  if (plan.lanes.size() <= 1) {
    for (const auto& lane : plan.lanes) run_lane(lane);
  } else {
    std::vector<std::jthread> workers;
    workers.reserve(plan.lanes.size() - 1);
    for (std::size_t l = 1; l < plan.lanes.size(); ++l) workers.emplace_back(run_lane, std::cref(plan.lanes[l]));
    run_lane(plan.lanes.front());
  }  // jthreads join here

  auto first = std::find_if(errors.begin(), errors.end(), [](const auto& e) { return bool(e); });
  if (first != errors.end()) {
    // Factors below the first recorded failure may have been cancelled before
    // they ran; finish them in order so the reported error does not depend on
    // thread timing.
    const std::size_t failed = static_cast<std::size_t>(first - errors.begin());
    cancel.store(false);
    for (std::size_t f = 0; f < failed; ++f) {
      if (!finished[f]) run_layers(graph, params, factor_order[f], cache, stats);
    }
    std::rethrow_exception(errors[failed]);
  }

  run_layers(graph, params, plan.trailing, cache, stats);
  return collect_outputs(graph, cache);
}

std::vector<Tensor> run_parallel(const CompiledGraph& graph, const Parameters& params, const Tensor& input,
                                 std::size_t lanes, ExecStats* stats) {
  return run_plan(graph, make_plan(graph, lanes), params, input, stats);
}

BenchResult bench(const CompiledGraph& graph, const Parameters& params, const Tensor& input,
                  std::size_t lanes, std::size_t repeats) {
  if (repeats < 5) throw SpecError("bench needs at least 5 repeats");
  const ExecPlan plan = make_plan(graph, lanes);
  using clock = std::chrono::steady_clock;

  const auto reference = forward(graph, params, input);  // doubles as warm-up
  const auto parallel = run_plan(graph, plan, params, input);
  for (std::size_t k = 0; k < reference.size(); ++k)
    if (!bitwise_equal(reference[k], parallel[k]))
      throw NumericError("parallel output " + std::to_string(k) + " differs from sequential forward");

  std::vector<double> seq, par;
  for (std::size_t r = 0; r < repeats; ++r) {
    auto t0 = clock::now();
    forward(graph, params, input);
    auto t1 = clock::now();
    run_plan(graph, plan, params, input);
    auto t2 = clock::now();
    seq.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    par.push_back(std::chrono::duration<double, std::milli>(t2 - t1).count());
  }
  BenchResult b;
  b.model = graph.spec().name;
  b.input = graph.spec().input_shape;
  b.lanes = plan.lane_count();
  b.repeats = repeats;
  b.sequential_ms = median(seq);
  b.parallel_ms = median(par);
  b.speedup = b.sequential_ms / b.parallel_ms;
  return b;
}

void write_bench_csv(std::ostream& os, std::span<const BenchResult> results) {
  os << "model,lanes,seq_ms,par_ms,speedup\n";
  char buf[256];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.3f,%.3f,%.4f\n", r.model.c_str(), r.lanes, r.sequential_ms,
                  r.parallel_ms, r.speedup);
    os << buf;
  }
}

}  // namespace factorkit
