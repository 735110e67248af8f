#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sdcl/errors.hpp"
#include "sdcl/io.hpp"
#include "sdcl/rng.hpp"

namespace sdcl {

/// One remembered example: raw (pre-normalization) input, its label, and —
/// for logit-matching baselines — the logits the model produced when the
/// example was stored. Empty logits means none were kept.
struct MemoryItem {
    std::vector<double> input;
    int label = 0;
    std::vector<double> logits;

    bool operator==(const MemoryItem& o) const {
        return input == o.input && label == o.label && logits == o.logits;
    }
};

/// Fixed-capacity episodic memory maintained by reservoir sampling. The
/// buffer owns a seeded generator for its replacement decisions, so the
/// retained set is a deterministic function of (seed, offer sequence).
/// Single-writer: one training loop mutates it, everyone else reads.
class ReplayBuffer {
  public:
    explicit ReplayBuffer(std::size_t capacity, std::uint64_t seed)
        : capacity_(capacity), rng_(seed, /*stream=*/0xB0FFE4) {}

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return items_.size(); }
    std::uint64_t n_seen() const { return n_seen_; }
    bool empty() const { return items_.empty(); }
    const std::vector<MemoryItem>& items() const { return items_; }

    /// Offer one item. During the fill phase everything is kept; afterwards
    /// the k-th offer (0-based k = n_seen) replaces a random slot with
    /// probability capacity/(k+1), which leaves every offer retained with
    /// probability capacity/N after N offers.
    void insert(MemoryItem item) {
        if (capacity_ == 0) {
            ++n_seen_;
            return;
        }
        if (items_.size() < capacity_) {
            items_.push_back(std::move(item));
        } else {
            const std::uint64_t j = rng_.uniform_index(n_seen_ + 1);
            if (j < capacity_) items_[static_cast<std::size_t>(j)] = std::move(item);
        }
        ++n_seen_;
    }

    /// Uniform sample of k items with replacement, drawn from the caller's
    /// generator (the buffer's own stream is reserved for replacement
    /// decisions). Empty buffer signals via nullopt; k = 0 gives an empty
    /// batch from a nonempty buffer.
    std::optional<std::vector<MemoryItem>> sample(std::size_t k, Rng& rng) const {
        if (items_.empty()) return std::nullopt;
        std::vector<MemoryItem> out;
        out.reserve(k);
        for (std::size_t i = 0; i < k; ++i)
            out.push_back(items_[static_cast<std::size_t>(rng.uniform_index(items_.size()))]);
        return out;
    }

    /// Binary dump sharing the checkpoint magic; the all-ones marker after it
    /// is what tells a buffer dump apart from a network checkpoint (whose
    /// next field is a small layer count).
    void save(std::ostream& os) const {
        detail::put_magic(os);
        detail::put_u32(os, 0xFFFFFFFFu);
        detail::put_u64(os, capacity_);
        detail::put_u64(os, n_seen_);
        detail::put_u64(os, items_.size());
        for (const MemoryItem& it : items_) {
            detail::put_u64(os, it.input.size());
            detail::put_doubles(os, it.input.data(), it.input.size());
            detail::put_u64(os, static_cast<std::uint64_t>(static_cast<std::int64_t>(it.label)));
            detail::put_u64(os, it.logits.size());
            detail::put_doubles(os, it.logits.data(), it.logits.size());
        }
        const std::string rng_state = rng_.save_state();
        detail::put_u64(os, rng_state.size());
        os.write(rng_state.data(), static_cast<std::streamsize>(rng_state.size()));
        if (!os) throw ParseError("replay dump: write failed");
    }

    static ReplayBuffer load(std::istream& is) {
        detail::check_magic(is, "replay dump");
        if (detail::get_u32(is) != 0xFFFFFFFFu)
            throw ParseError("replay dump: marker missing (is this a network checkpoint?)");
        const std::uint64_t capacity = detail::get_u64(is);
        ReplayBuffer buf(static_cast<std::size_t>(capacity), /*seed=*/0);
        buf.n_seen_ = detail::get_u64(is);
        const std::uint64_t count = detail::get_u64(is);
        if (count > capacity) throw ParseError("replay dump: item count exceeds capacity");
        buf.items_.resize(static_cast<std::size_t>(count));
        for (MemoryItem& it : buf.items_) {
            it.input.resize(static_cast<std::size_t>(detail::get_u64(is)));
            detail::get_doubles(is, it.input.data(), it.input.size());
            it.label = static_cast<int>(static_cast<std::int64_t>(detail::get_u64(is)));
            it.logits.resize(static_cast<std::size_t>(detail::get_u64(is)));
            detail::get_doubles(is, it.logits.data(), it.logits.size());
        }
        std::string rng_state(static_cast<std::size_t>(detail::get_u64(is)), '\0');
        if (!is.read(rng_state.data(), static_cast<std::streamsize>(rng_state.size())))
            throw ParseError("replay dump: truncated generator state");
        buf.rng_.load_state(rng_state);
        return buf;
    }

    void save_file(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw ParseError("replay dump: cannot open " + path + " for writing");
        save(os);
    }

    static ReplayBuffer load_file(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw ParseError("replay dump: cannot open " + path);
        return load(is);
    }

  private:
    std::size_t capacity_;
    std::vector<MemoryItem> items_;
    std::uint64_t n_seen_ = 0;
    Rng rng_;
};

inline void reservoir_insert(ReplayBuffer& buf, MemoryItem item) {
    buf.insert(std::move(item));
}

inline std::optional<std::vector<MemoryItem>> sample_batch(const ReplayBuffer& buf,
                                                           std::size_t k, Rng& rng) {
    return buf.sample(k, rng);
}

} // namespace sdcl
