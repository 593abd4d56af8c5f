#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace pheno {

/// Deterministic RNG whose draws do not depend on the standard library's
/// distribution implementations (those are not portable across vendors).
class SeededRng {
public:
  explicit SeededRng(uint64_t seed) : engine_(seed) {}

  /// Uniform integer in [0, bound); bound must be > 0.
  uint64_t below(uint64_t bound) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

private:
  std::mt19937_64 engine_;
};

/// Derives a named sub-seed so each pipeline stage draws an independent stream.
uint64_t derive_seed(uint64_t seed, std::string_view stage);

/// FNV-1a, 64-bit. Stable across platforms and runs.
uint64_t fnv1a64(std::string_view bytes);

/// Runs fn(i) for i in [0, count) with at most max_inflight calls outstanding.
/// The first exception thrown by any call is rethrown after all workers stop.
template <class Fn>
void bounded_for_each(std::size_t count, std::size_t max_inflight, Fn&& fn) {
  if (count == 0) return;
  const std::size_t workers = std::max<std::size_t>(1, std::min(count, max_inflight));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
}

namespace io {

/// Whole file as bytes; InputError if it cannot be opened.
std::string read_file(const std::filesystem::path& path);
/// Lines without terminators; a trailing empty line is dropped.
std::vector<std::string> read_lines(const std::filesystem::path& path);
std::vector<std::string> split_lines(std::string_view text);
/// Writes to a sibling temp file, then renames over the target.
void write_atomic(const std::filesystem::path& path, std::string_view contents);
std::string sha256_hex(std::string_view bytes);
std::string trim(std::string_view text);

}  // namespace io

}  // namespace pheno
