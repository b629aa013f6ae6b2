#pragma once

#include <cstddef>
#include <functional>

namespace kamtori {

// Thread cap, read once from KAMTORI_THREADS (default 1).
int max_threads();
void set_max_threads(int n);

// Runs body(begin, end) over [0, n) in contiguous chunks.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace kamtori
