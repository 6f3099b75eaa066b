#include "fracbubbles/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

namespace fracbubbles {

namespace {
std::atomic<int> g_threads{1};

int env_threads() {
  if (const char* v = std::getenv("FRACBUBBLES_THREADS")) {
    const int n = std::atoi(v);
    if (n > 0) return n;
  }
  return 0;
}
}  // namespace

void set_thread_count(int n) { g_threads = std::max(1, n); }

int thread_count() {
  const int env = env_threads();
  return env > 0 ? env : g_threads.load();
}

void parallel_chunks(std::size_t n, std::size_t chunk, const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t nchunks = (n + chunk - 1) / chunk;
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), nchunks);
  auto run_chunk = [&](std::size_t c) { body(c * chunk, std::min(n, (c + 1) * chunk)); };
  if (workers <= 1) {
    for (std::size_t c = 0; c < nchunks; ++c) run_chunk(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < nchunks; c = next++) run_chunk(c);
    });
  for (auto& t : pool) t.join();
}

double parallel_sum(std::size_t n, const std::function<double(std::size_t)>& term, std::size_t chunk) {
  const std::size_t nchunks = (n + chunk - 1) / std::max<std::size_t>(chunk, 1);
  std::vector<CompensatedSum> partial(nchunks);
  parallel_chunks(n, chunk, [&](std::size_t b, std::size_t e) {
    CompensatedSum acc;
    for (std::size_t i = b; i < e; ++i) acc.add(term(i));
    partial[b / chunk] = acc;
  });
  CompensatedSum total;
  for (const auto& p : partial) total.add(p.value());
  return total.value();
}

std::vector<double> parallel_sum_vec(std::size_t n, std::size_t width,
                                     const std::function<void(std::size_t, std::span<double>)>& term,
                                     std::size_t chunk) {
  const std::size_t nchunks = (n + chunk - 1) / std::max<std::size_t>(chunk, 1);
  std::vector<std::vector<CompensatedSum>> partial(nchunks, std::vector<CompensatedSum>(width));
  parallel_chunks(n, chunk, [&](std::size_t b, std::size_t e) {
    auto& acc = partial[b / chunk];
    std::vector<double> buf(width);
    for (std::size_t i = b; i < e; ++i) {
      std::fill(buf.begin(), buf.end(), 0.0);
      term(i, buf);
      for (std::size_t w = 0; w < width; ++w) acc[w].add(buf[w]);
    }
  });
  std::vector<double> out(width, 0.0);
  for (std::size_t w = 0; w < width; ++w) {
    CompensatedSum total;
    for (const auto& p : partial) total.add(p[w].value());
    out[w] = total.value();
  }
  return out;
}

}  // namespace fracbubbles
