#pragma once

namespace trl3d {

/// Keeps freed tensor buffers in the heap instead of returning them to the
/// kernel after every step. No-op outside glibc.
void tune_allocator();

}  // namespace trl3d
