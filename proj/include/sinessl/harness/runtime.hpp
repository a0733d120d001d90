#pragma once

namespace sinessl {

/// Keeps large tensor buffers on the heap instead of fresh mmap pages, which
/// otherwise dominate the cost of small convolutions. No-op off glibc.
void tune_allocator();

}  // namespace sinessl
