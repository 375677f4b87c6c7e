#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "factorkit/engine.hpp"

namespace factorkit {

// Stem runs sequentially, then each lane runs its factors one after another
// while lanes run concurrently. A trailing merge, if any, runs after the join.
struct ExecPlan {
  std::vector<std::size_t> stem;                // layer indices
  std::vector<std::vector<std::size_t>> lanes;  // factor indices, execution order
  std::vector<std::size_t> trailing;            // zero or one layer index
  std::size_t lane_count() const { return lanes.size(); }
};

// Round-robin factor -> lane by declaration order, then largest-MAC-first
// within each lane. Uses min(lanes, factor count) lanes, at least one.
ExecPlan make_plan(const CompiledGraph& graph, std::size_t lanes);

std::vector<Tensor> run_plan(const CompiledGraph& graph, const ExecPlan& plan, const Parameters& params,
                             const Tensor& input, ExecStats* stats = nullptr);

// Bitwise identical to forward(): factors share no accumulations. On failure
// the error of the lowest-index failing factor is rethrown.
std::vector<Tensor> run_parallel(const CompiledGraph& graph, const Parameters& params, const Tensor& input,
                                 std::size_t lanes, ExecStats* stats = nullptr);

struct BenchResult {
  std::string model;
  Shape input;
  std::size_t lanes = 1;
  std::size_t repeats = 0;
  double sequential_ms = 0.0;  // median
  double parallel_ms = 0.0;    // median
  double speedup = 0.0;        // sequential / parallel
};

// Checks run_parallel against forward() bitwise (throws NumericError on any
// mismatch), does one untimed warm-up of each, then reports medians.
BenchResult bench(const CompiledGraph& graph, const Parameters& params, const Tensor& input,
                  std::size_t lanes, std::size_t repeats);

// model,lanes,seq_ms,par_ms,speedup
void write_bench_csv(std::ostream& os, std::span<const BenchResult> results);

}  // namespace factorkit
