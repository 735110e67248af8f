#include "sdcl/replay.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "sdcl/nn.hpp"
#include "sdcl/rng.hpp"

using namespace sdcl;

namespace {

MemoryItem item_with_label(int label) {
    MemoryItem it;
    it.input = {static_cast<double>(label), static_cast<double>(label) * 0.5};
    it.label = label;
    return it;
}

} // namespace

TEST(Replay, FillPhaseKeepsEverythingInOrder) {
    ReplayBuffer buf(10, 42);
    for (int i = 0; i < 10; ++i) reservoir_insert(buf, item_with_label(i));
    ASSERT_EQ(buf.size(), 10u);
    EXPECT_EQ(buf.n_seen(), 10u);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(buf.items()[static_cast<std::size_t>(i)].label, i);
}

TEST(Replay, CapacityZeroAcceptsAndDiscards) {
    ReplayBuffer buf(0, 42);
    for (int i = 0; i < 5; ++i) reservoir_insert(buf, item_with_label(i));
    EXPECT_EQ(buf.size(), 0u);
    EXPECT_EQ(buf.n_seen(), 5u);
    Rng rng(1);
    EXPECT_FALSE(sample_batch(buf, 3, rng).has_value());
}

TEST(Replay, SizeNeverExceedsCapacity) {
    ReplayBuffer buf(5, 7);
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        reservoir_insert(buf, item_with_label(i));
        EXPECT_LE(buf.size(), 5u);
        if (i % 17 == 0) (void)sample_batch(buf, 3, rng);
    }
    EXPECT_EQ(buf.size(), 5u);
    EXPECT_EQ(buf.n_seen(), 200u);
    // retained labels are a subset of what was offered
    for (const MemoryItem& it : buf.items()) {
        EXPECT_GE(it.label, 0);
        EXPECT_LT(it.label, 200);
    }
}

TEST(Replay, SingletonBufferSamplesItselfRepeatedly) {
    ReplayBuffer buf(8, 42);
    reservoir_insert(buf, item_with_label(3));
    Rng rng(5);
    auto batch = sample_batch(buf, 4, rng);
    ASSERT_TRUE(batch.has_value());
    ASSERT_EQ(batch->size(), 4u);
    for (const MemoryItem& it : *batch) EXPECT_EQ(it.label, 3);
}

TEST(Replay, ZeroSizedBatchFromNonemptyBuffer) {
    ReplayBuffer buf(4, 42);
    reservoir_insert(buf, item_with_label(1));
    Rng rng(5);
    auto batch = sample_batch(buf, 0, rng);
    ASSERT_TRUE(batch.has_value());
    EXPECT_TRUE(batch->empty());
}

TEST(Replay, EmptyBufferSignalsNoMemory) {
    ReplayBuffer buf(4, 42);
    Rng rng(5);
    EXPECT_FALSE(sample_batch(buf, 4, rng).has_value());
}

TEST(Replay, SamplingLeavesContentsUntouched) {
    ReplayBuffer buf(6, 9);
    for (int i = 0; i < 20; ++i) reservoir_insert(buf, item_with_label(i));
    const std::vector<MemoryItem> before = buf.items();
    const std::uint64_t seen = buf.n_seen();
    Rng rng(11);
    for (int r = 0; r < 50; ++r) (void)sample_batch(buf, 13, rng);
    EXPECT_EQ(buf.items(), before);
    EXPECT_EQ(buf.n_seen(), seen);
}

TEST(Replay, SampleFrequenciesUniformWithinThreeSigma) {
    ReplayBuffer buf(10, 21);
    for (int i = 0; i < 10; ++i) reservoir_insert(buf, item_with_label(i));
    Rng rng(22);
    const int draws = 100000;
    std::vector<int> count(10, 0);
    for (int r = 0; r < draws; ++r) {
        auto batch = sample_batch(buf, 1, rng);
        ++count[static_cast<std::size_t>((*batch)[0].label)];
    }
    const double mean = draws / 10.0;
    const double sigma = std::sqrt(draws * 0.1 * 0.9);
    for (int c : count) EXPECT_NEAR(static_cast<double>(c), mean, 3.0 * sigma);
}

// Mini Monte-Carlo of the reservoir guarantee: every offer retained with
// probability M/N. The dedicated acceptance binary runs the full-size version.
TEST(Replay, RetentionFollowsReservoirLaw) {
    const std::size_t M = 20, N = 200;
    const int trials = 2000;
    std::vector<int> retained(N, 0);
    for (int t = 0; t < trials; ++t) {
        ReplayBuffer buf(M, 1000 + static_cast<std::uint64_t>(t));
        for (std::size_t i = 0; i < N; ++i)
            reservoir_insert(buf, item_with_label(static_cast<int>(i)));
        for (const MemoryItem& it : buf.items()) ++retained[static_cast<std::size_t>(it.label)];
    }
    const double expected = trials * static_cast<double>(M) / static_cast<double>(N);
    double stat = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double diff = retained[i] - expected;
        stat += diff * diff / expected;
    }
    const double p = oracle::chi_square_p(stat, static_cast<double>(N - 1));
    EXPECT_GT(p, 0.01) << "chi-square stat " << stat;
}

TEST(Replay, DumpRestoreRoundtripContinuesIdentically) {
    ReplayBuffer buf(5, 77);
    for (int i = 0; i < 12; ++i) {
        MemoryItem it = item_with_label(i);
        if (i % 3 == 0) it.logits = {0.1 * i, -0.2 * i, 1.0};
        reservoir_insert(buf, it);
    }
    std::stringstream ss;
    buf.save(ss);
    ReplayBuffer restored = ReplayBuffer::load(ss);

    EXPECT_EQ(restored.capacity(), buf.capacity());
    EXPECT_EQ(restored.n_seen(), buf.n_seen());
    EXPECT_EQ(restored.items(), buf.items());

    // The replacement stream must resume exactly: both buffers see the same
    // future offers and must retain identical sets.
    for (int i = 12; i < 60; ++i) {
        reservoir_insert(buf, item_with_label(i));
        reservoir_insert(restored, item_with_label(i));
    }
    EXPECT_EQ(restored.items(), buf.items());
    EXPECT_EQ(restored.n_seen(), buf.n_seen());
}

TEST(Replay, LoadRejectsGarbage) {
    {
        std::stringstream ss;
        ss << "NOTMAGIC" << std::string(64, 'x');
        EXPECT_THROW(ReplayBuffer::load(ss), ParseError);
    }
    {
        ReplayBuffer buf(3, 1);
        reservoir_insert(buf, item_with_label(0));
        std::stringstream ss;
        buf.save(ss);
        std::string full = ss.str();
        std::stringstream cut(full.substr(0, full.size() / 2));
        EXPECT_THROW(ReplayBuffer::load(cut), ParseError);
    }
}

TEST(Replay, BufferDumpAndNetworkCheckpointAreMutuallyRejected) {
    // A network checkpoint is not a buffer dump...
    Rng rng(8);
    Network net = make_mlp(4, {3}, rng);
    net.expand_head({0, 1});
    const std::string net_path = ::testing::TempDir() + "/net_ckpt.bin";
    save_checkpoint(net, net_path);
    EXPECT_THROW(ReplayBuffer::load_file(net_path), ParseError);

    // ...and a buffer dump is not a network checkpoint.
    ReplayBuffer buf(3, 1);
    reservoir_insert(buf, item_with_label(2));
    const std::string buf_path = ::testing::TempDir() + "/buf_dump.bin";
    buf.save_file(buf_path);
    EXPECT_THROW(load_checkpoint(buf_path), ParseError);
}
