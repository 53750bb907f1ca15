#include <gtest/gtest.h>

#include <atomic>
#include <set>
#include <stdexcept>
#include <thread>

#include "ignet/parallel.hpp"
#include "ignet/tensor.hpp"
#include "test_util.hpp"

using namespace ignet;

TEST(BlockRange, PartitionsEveryItemOnce)
{
    for (std::size_t items : {0u, 1u, 7u, 64u, 101u})
        for (std::size_t workers : {1u, 2u, 3u, 8u}) {
            std::size_t next = 0;
            for (std::size_t w = 0; w < workers; ++w) {
                const BlockRange r = block_range(items, workers, w);
                EXPECT_EQ(r.begin, next);
                next = r.end;
            }
            EXPECT_EQ(next, items);
        }
}

TEST(WorkerPool, EmptyStageReturnsImmediately)
{
    WorkerPool pool(4);
    bool touched = false;
    pool.execute_stage(0, [&](std::size_t) { touched = true; });
    EXPECT_FALSE(touched);
}

TEST(WorkerPool, SingleWorkerMatchesPlainLoop)
{
    WorkerPool pool(1);
    std::vector<std::size_t> order;
    pool.execute_stage(10, [&](std::size_t i) { order.push_back(i); });
    std::vector<std::size_t> expected(10);
    std::iota(expected.begin(), expected.end(), std::size_t{0});
    EXPECT_EQ(order, expected);
}

TEST(WorkerPool, EachItemRunsExactlyOnce)
{
    for (std::size_t workers : {2u, 4u, 8u}) {
        WorkerPool pool(workers);
        for (int stage = 0; stage < 50; ++stage) {
            const std::size_t items = 1 + static_cast<std::size_t>(stage) * 7;
            std::vector<std::atomic<int>> hits(items);
            pool.execute_stage(items, [&](std::size_t i) { hits[i].fetch_add(1); });
            for (auto& h : hits)
                ASSERT_EQ(h.load(), 1);
        }
    }
}

TEST(WorkerPool, WorkersPersistAcrossStages)
{
    WorkerPool pool(4);
    std::vector<std::thread::id> ids;
    for (std::size_t w = 0; w < pool.worker_count(); ++w)
        ids.push_back(pool.worker_id(w));
    std::set<std::thread::id> seen;
    std::mutex m;
    constexpr std::size_t kStages = 10000;
    for (std::size_t s = 0; s < kStages; ++s)
        pool.execute_stage(4, [&](std::size_t) {
            std::lock_guard lock(m);
            seen.insert(std::this_thread::get_id());
        });
    for (std::size_t w = 0; w < pool.worker_count(); ++w) {
        EXPECT_EQ(pool.worker_id(w), ids[w]);
        EXPECT_EQ(pool.stages_run(w), kStages);
    }
    EXPECT_EQ(seen, std::set<std::thread::id>(ids.begin(), ids.end()));
}

TEST(WorkerPool, FailureSurfacesAfterBarrier)
{
    WorkerPool pool(4);
    std::atomic<int> finished{0};
    EXPECT_THROW(pool.execute_stage(40,
                                    [&](std::size_t i) {
                                        if (i == 3)
                                            throw std::runtime_error("boom");
                                        finished.fetch_add(1);
                                    }),
                 StageError);
    // Items outside the failing worker's block still ran; the pool stays usable.
    EXPECT_GE(finished.load(), 30);
    std::atomic<int> again{0};
    pool.execute_stage(8, [&](std::size_t) { again.fetch_add(1); });
    EXPECT_EQ(again.load(), 8);
}

TEST(WorkerPool, NestedStageRunsInline)
{
    WorkerPool pool(3);
    std::vector<std::atomic<int>> hits(9);
    pool.execute_stage(3, [&](std::size_t i) {
        pool.execute_stage(3, [&](std::size_t j) { hits[i * 3 + j].fetch_add(1); });
    });
    for (auto& h : hits)
        EXPECT_EQ(h.load(), 1);
}

TEST(WorkerPool, ConvolutionBitIdenticalAcrossWorkerCounts)
{
    Rng rng(5);
    const FeatureMap x = ignet::testing::random_map({3, 23, 31}, rng);
    const FilterBank bank = ignet::testing::random_bank(5, 3, 4, 3, rng);
    ConvGeometry g;
    g.stride_h = 2;
    g.zero_pad_v = 1;
    const FeatureMap serial = convolve(x, bank, g);
    for (std::size_t workers : {1u, 2u, 4u, 8u}) {
        WorkerPool pool(workers);
        EXPECT_EQ(convolve(x, bank, g, &pool).values, serial.values) << workers << " workers";
    }
}
