#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace thepose {

// Keeps freed tape buffers in the heap instead of returning them to the
// kernel after every step. Call once at program start.
inline void keep_heap_resident() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

}  // namespace thepose
