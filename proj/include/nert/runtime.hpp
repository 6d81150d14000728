#pragma once

#include <malloc.h>

namespace nert {

/// Keeps large freed blocks in the heap instead of returning them to the
/// OS. Training reallocates the same multi-megabyte buffers every epoch and
/// otherwise spends a large share of its time in page faults.
inline void tune_allocator() {
#ifdef M_MMAP_THRESHOLD
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace nert
