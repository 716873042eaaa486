#pragma once

#include <cstddef>
#include <new>
#include <vector>

namespace spikegrad {

namespace detail {

/// Blocks of at least this many bytes are recycled instead of returned to the
/// system allocator, which would hand large blocks back to the OS and fault
/// the pages in again on the next run.
inline constexpr std::size_t kRecycleBytes = std::size_t{64} << 10;

/// Process-wide, thread-safe cache of large blocks keyed by exact byte size.
/// Holds at most a fixed budget of idle memory; the rest is freed.
void* acquire_block(std::size_t bytes);
void release_block(void* block, std::size_t bytes) noexcept;

/// Idle bytes currently held by the cache.
std::size_t cached_block_bytes() noexcept;

}  // namespace detail

/// Allocator for tensor storage; large blocks go through the block cache.
template <typename T>
struct BufferAllocator {
  using value_type = T;

  BufferAllocator() noexcept = default;
  template <typename U>
  BufferAllocator(const BufferAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    const std::size_t bytes = n * sizeof(T);
    if (bytes >= detail::kRecycleBytes) return static_cast<T*>(detail::acquire_block(bytes));
    return static_cast<T*>(::operator new(bytes));
  }

  void deallocate(T* p, std::size_t n) noexcept {
    const std::size_t bytes = n * sizeof(T);
    if (bytes >= detail::kRecycleBytes) {
      detail::release_block(p, bytes);
    } else {
      ::operator delete(p);
    }
  }

  template <typename U>
  friend bool operator==(const BufferAllocator&, const BufferAllocator<U>&) noexcept {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, BufferAllocator<T>>;

}  // namespace spikegrad
