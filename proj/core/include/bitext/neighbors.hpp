#pragma once

#include <bitext/common.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace bitext {

enum class Direction : std::uint8_t {
    Forward = 0,  // source -> target
    Backward = 1, // target -> source
};

const char* to_string(Direction d);

/// Top-k neighbors of one query, best first: similarity descending, ties
/// by ascending id.
struct NeighborList {
    GlobalId query_id = 0;
    std::vector<GlobalId> ids;
    std::vector<float> sims;
    Direction direction = Direction::Forward;
    /// Fewer than k neighbors were available.
    bool short_result = false;

    std::size_t size() const {
        return ids.size();
    }
    bool operator==(const NeighborList&) const = default;
};

/// Strict "ranks before" order used by every top-k in the library.
inline bool ranks_before(float sim_a, GlobalId id_a, float sim_b, GlobalId id_b) {
    return sim_a > sim_b || (sim_a == sim_b && id_a < id_b);
}

/// Bounded best-k collector.
class TopK {
   public:
    explicit TopK(std::size_t k) : k_(k) {
        heap_.reserve(k + 1);
    }

    /// Current admission bar; only meaningful when full().
    bool full() const {
        return heap_.size() >= k_;
    }
    float worst_sim() const {
        return heap_.front().sim;
    }
    bool admits(float sim, GlobalId id) const {
        return !full() || ranks_before(sim, id, heap_.front().sim, heap_.front().id);
    }
    void push(float sim, GlobalId id);
    std::size_t size() const {
        return heap_.size();
    }
    void clear() {
        heap_.clear();
    }

    /// Drains into `list` in rank order.
    void extract(NeighborList& list);

   private:
    struct Entry {
        float sim;
        GlobalId id;
    };
    static bool worse_first(const Entry& a, const Entry& b) {
        return ranks_before(a.sim, a.id, b.sim, b.id);
    }

    std::size_t k_;
    std::vector<Entry> heap_;
};

/// Checks the NeighborList invariants: equal lengths, unique ids, rank order.
bool is_well_formed(const NeighborList& list);

/// Merges per-shard lists of the same query into its global top-k.
NeighborList merge_neighbor_lists(const std::vector<const NeighborList*>& parts, std::size_t k);

// ---------------------------------------------------------------------------
// "NBR1" neighbor files: magic, u32 k, u8 direction, u64 count, then per
// list: u64 query_id, u32 n, n x u64 ids, n x f32 sims.

struct NeighborFile {
    std::uint32_t k = 0;
    Direction direction = Direction::Forward;
    std::vector<NeighborList> lists;
};

std::string serialize_neighbors(const NeighborFile& file);
NeighborFile parse_neighbors(std::string_view bytes, const std::string& what = "neighbors");
void write_neighbors(const NeighborFile& file, const std::filesystem::path& path);
NeighborFile read_neighbors(const std::filesystem::path& path);

} // namespace bitext
