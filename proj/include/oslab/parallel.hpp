#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace oslab {

// Runs body(begin, end) over fixed-size chunks of [0, n). Chunk boundaries depend
// only on n and chunk_size, never on the worker count, so any per-chunk partial
// results reduced in chunk order are bit-identical for every worker count.
void parallel_chunks(std::size_t n, std::size_t chunk_size, int workers,
                     const std::function<void(std::size_t, std::size_t)>& body);

// Pairwise (cascade) summation; order fixed by index.
double pairwise_sum(std::span<const double> xs);

struct MeanStderr {
  double mean = 0.0;
  double std_error = 0.0;
};

// Mean and standard error of i.i.d. replicates.
MeanStderr mean_stderr(std::span<const double> replicates);

}  // namespace oslab
