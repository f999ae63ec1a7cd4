#pragma once

#include <functional>
#include <thread>
#include <vector>

#include "trsd/model.hpp"

namespace trsd {

// Runs fn(example_index, worker_index) for every example of a batch. Workers
// take examples round-robin by index; worker count never changes results as
// long as fn writes only to per-example slots and per-worker scratch.
inline void parallel_batch(int batch_size, int n_workers,
                           const std::function<void(int, int)>& fn) {
    if (n_workers <= 1 || batch_size <= 1) {
        for (int i = 0; i < batch_size; ++i) {
            fn(i, 0);
        }
        return;
    }
    const int workers = std::min(n_workers, batch_size);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (int i = w; i < batch_size; i += workers) {
                fn(i, w);
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
}

// Per-example gradient buffers reduced in example order, so accumulation is
// bitwise identical at every worker count.
struct BatchGradients {
    std::vector<std::vector<float>> per_example;
    std::vector<float> reduced;

    void ensure(int batch_size, size_t params) {
        if (per_example.size() != static_cast<size_t>(batch_size) ||
            (batch_size > 0 && per_example[0].size() != params)) {
            per_example.assign(static_cast<size_t>(batch_size), std::vector<float>(params));
            reduced.assign(params, 0.0f);
        }
    }

    void zero_all() {
        for (auto& g : per_example) {
            zero(g.data(), g.size());
        }
        zero(reduced.data(), reduced.size());
    }

    // reduced = (1/batch) * sum_i per_example[i], summed in index order
    void reduce_mean() {
        const float inv = 1.0f / static_cast<float>(per_example.size());
        for (const auto& g : per_example) {
            for (size_t j = 0; j < reduced.size(); ++j) {
                reduced[j] += g[j];
            }
        }
        for (float& x : reduced) {
            x *= inv;
        }
    }
};

}  // namespace trsd
