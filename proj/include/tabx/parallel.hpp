#pragma once

#include <cstddef>
#include <functional>

namespace tabx {

// Process-wide cap on worker threads. Defaults to the hardware concurrency.
void set_max_threads(std::size_t n);
std::size_t max_threads();

// Runs body(i) for i in [0, n). Work items must write only to their own
// output slots; the call returns after every item finished. Nested calls run
// inline on the calling worker. If any item throws, the exception from the
// lowest failing index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace tabx
