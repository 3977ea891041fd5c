#include <bitext/neighbors.hpp>

#include <algorithm>
#include <unordered_set>

namespace bitext {

const char* to_string(Direction d) {
    return d == Direction::Forward ? "forward" : "backward";
}

void TopK::push(float sim, GlobalId id) {
    if (k_ == 0 || !admits(sim, id)) {
        return;
    }
    heap_.push_back({sim, id});
    std::push_heap(heap_.begin(), heap_.end(), worse_first);
    if (heap_.size() > k_) {
        std::pop_heap(heap_.begin(), heap_.end(), worse_first);
        heap_.pop_back();
    }
}

void TopK::extract(NeighborList& list) {
    std::sort_heap(heap_.begin(), heap_.end(), worse_first);
    list.ids.clear();
    list.sims.clear();
    list.ids.reserve(heap_.size());
    list.sims.reserve(heap_.size());
    for (const auto& e : heap_) {
        list.ids.push_back(e.id);
        list.sims.push_back(e.sim);
    }
    list.short_result = heap_.size() < k_;
    heap_.clear();
}

bool is_well_formed(const NeighborList& list) {
    if (list.ids.size() != list.sims.size()) {
        return false;
    }
    std::unordered_set<GlobalId> seen;
    for (std::size_t i = 0; i < list.ids.size(); ++i) {
        if (!seen.insert(list.ids[i]).second) {
            return false;
        }
        if (i > 0 && !ranks_before(list.sims[i - 1], list.ids[i - 1], list.sims[i], list.ids[i])) {
            return false;
        }
    }
    return true;
}

NeighborList merge_neighbor_lists(const std::vector<const NeighborList*>& parts, std::size_t k) {
    NeighborList out;
    if (parts.empty()) {
        out.short_result = k > 0;
        return out;
    }
    out.query_id = parts.front()->query_id;
    out.direction = parts.front()->direction;
    TopK top(k);
    for (const auto* p : parts) {
        if (p->query_id != out.query_id) {
            throw Error("merge_neighbor_lists: lists belong to different queries");
        }
        for (std::size_t i = 0; i < p->size(); ++i) {
            top.push(p->sims[i], p->ids[i]);
        }
    }
    top.extract(out);
    return out;
}

namespace {
constexpr char kMagic[4] = {'N', 'B', 'R', '1'};
}

std::string serialize_neighbors(const NeighborFile& file) {
    ByteWriter w;
    w.put_bytes(kMagic, 4);
    w.put<std::uint32_t>(file.k);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(file.direction));
    w.put<std::uint64_t>(file.lists.size());
    for (const auto& l : file.lists) {
        w.put<std::uint64_t>(l.query_id);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(l.size()));
        w.put_bytes(l.ids.data(), l.ids.size() * sizeof(GlobalId));
        w.put_bytes(l.sims.data(), l.sims.size() * sizeof(float));
    }
    return w.take();
}

NeighborFile parse_neighbors(std::string_view bytes, const std::string& what) {
    ByteReader r(bytes, what);
    char magic[4];
    r.get_bytes(magic, 4);
    if (std::string_view(magic, 4) != std::string_view(kMagic, 4)) {
        throw FormatError(what + ": bad magic (expected NBR1)");
    }
    NeighborFile f;
    f.k = r.get<std::uint32_t>();
    auto dir = r.get<std::uint8_t>();
    if (dir > 1) {
        throw FormatError(what + ": bad direction byte");
    }
    f.direction = static_cast<Direction>(dir);
    auto count = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
        NeighborList l;
        l.direction = f.direction;
        l.query_id = r.get<std::uint64_t>();
        auto n = r.get<std::uint32_t>();
        if (n > f.k) {
            throw FormatError(what + ": list longer than k");
        }
        l.ids.resize(n);
        l.sims.resize(n);
        r.get_bytes(l.ids.data(), n * sizeof(GlobalId));
        r.get_bytes(l.sims.data(), n * sizeof(float));
        l.short_result = n < f.k;
        f.lists.push_back(std::move(l));
    }
    if (r.remaining() != 0) {
        throw FormatError(what + ": trailing bytes");
    }
    return f;
}

void write_neighbors(const NeighborFile& file, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_neighbors(file));
}

NeighborFile read_neighbors(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw Error("missing neighbor file " + path.string());
    }
    return parse_neighbors(read_file(path), path.string());
}

} // namespace bitext
