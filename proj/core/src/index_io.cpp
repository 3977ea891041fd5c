#include <bitext/vindex.hpp>

// "IVF1" layout: magic, u32 version, u32 dim, u32 nlist, u32 m, u8 rotation
// flag, [dim*dim f32 rotation], nlist*dim f32 centroids, m*256*(dim/m) f32
// codebooks, then per list: u64 length, length*u64 ids, length*m code bytes.
// Trailer: u8 retained flag; when set, per list length*dim f32 vectors and
// length f32 error bounds.

namespace bitext::vindex {

namespace {

constexpr char kMagic[4] = {'I', 'V', 'F', '1'};
constexpr std::uint32_t kVersion = 1;

void write_quantizers(ByteWriter& w, const TrainedQuantizers& q) {
    w.put_bytes(kMagic, 4);
    w.put<std::uint32_t>(kVersion);
    w.put<std::uint32_t>(q.dim());
    w.put<std::uint32_t>(q.coarse.nlist);
    w.put<std::uint32_t>(q.pq.m);
    w.put<std::uint8_t>(q.rotation.enabled ? 1 : 0);
    if (q.rotation.enabled) {
        w.put_bytes(q.rotation.matrix.data(), q.rotation.matrix.size() * sizeof(float));
    }
    w.put_bytes(q.coarse.centroids.data(), q.coarse.centroids.size() * sizeof(float));
    w.put_bytes(q.pq.codebooks.data(), q.pq.codebooks.size() * sizeof(float));
}

template <typename T>
void read_vec(ByteReader& r, std::vector<T>& v, std::size_t n) {
    if (n * sizeof(T) > r.remaining()) {
        // let ByteReader produce the truncation message
        r.get_bytes(nullptr, n * sizeof(T));
    }
    v.resize(n);
    r.get_bytes(v.data(), n * sizeof(T));
}

} // namespace

std::string IndexShard::serialize_quantizers_only() const {
    ByteWriter w;
    write_quantizers(w, *quantizers_);
    return w.take();
}

std::string IndexShard::serialize() const {
    ByteWriter w;
    write_quantizers(w, *quantizers_);
    for (const auto& l : lists_) {
        w.put<std::uint64_t>(l.ids.size());
        w.put_bytes(l.ids.data(), l.ids.size() * sizeof(GlobalId));
        w.put_bytes(l.codes.data(), l.codes.size());
    }
    w.put<std::uint8_t>(retain_vectors_ ? 1 : 0);
    if (retain_vectors_) {
        for (const auto& l : lists_) {
            w.put_bytes(l.vectors.data(), l.vectors.size() * sizeof(float));
            w.put_bytes(l.error_bounds.data(), l.error_bounds.size() * sizeof(float));
        }
    }
    return w.take();
}

IndexShard IndexShard::parse(std::string_view bytes, const std::string& what) {
    ByteReader r(bytes, what);
    char magic[4];
    r.get_bytes(magic, 4);
    if (std::string_view(magic, 4) != std::string_view(kMagic, 4)) {
        throw FormatError(what + ": bad magic (expected IVF1)");
    }
    auto version = r.get<std::uint32_t>();
    if (version != kVersion) {
        throw FormatError(what + ": unsupported version " + std::to_string(version));
    }
    auto q = std::make_shared<TrainedQuantizers>();
    std::uint32_t dim = r.get<std::uint32_t>();
    std::uint32_t nlist = r.get<std::uint32_t>();
    std::uint32_t m = r.get<std::uint32_t>();
    auto rot = r.get<std::uint8_t>();
    if (dim == 0 || nlist == 0 || m == 0 || dim % m != 0 || rot > 1) {
        throw FormatError(what + ": inconsistent header");
    }
    q->rotation = Rotation::identity(dim);
    if (rot) {
        q->rotation.enabled = true;
        read_vec(r, q->rotation.matrix, static_cast<std::size_t>(dim) * dim);
    }
    q->coarse.dim = dim;
    q->coarse.nlist = nlist;
    read_vec(r, q->coarse.centroids, static_cast<std::size_t>(nlist) * dim);
    q->pq.dim = dim;
    q->pq.m = m;
    read_vec(r, q->pq.codebooks, static_cast<std::size_t>(kCodebookSize) * dim);

    std::vector<InvertedList> lists(nlist);
    std::size_t count = 0;
    for (auto& l : lists) {
        auto len = r.get<std::uint64_t>();
        if (len > r.remaining()) {
            throw FormatError(what + ": list length exceeds file size");
        }
        read_vec(r, l.ids, len);
        read_vec(r, l.codes, len * m);
        count += len;
    }
    auto retained = r.get<std::uint8_t>();
    if (retained > 1) {
        throw FormatError(what + ": bad retained-vector flag");
    }
    if (retained) {
        for (auto& l : lists) {
            read_vec(r, l.vectors, l.ids.size() * dim);
            read_vec(r, l.error_bounds, l.ids.size());
        }
    }
    if (r.remaining() != 0) {
        throw FormatError(what + ": trailing bytes");
    }

    IndexShard shard(std::move(q), retained != 0);
    for (const auto& l : lists) {
        for (GlobalId id : l.ids) {
            if (!shard.ids_.insert(id).second) {
                throw FormatError(what + ": id " + std::to_string(id) + " stored twice");
            }
        }
    }
    shard.lists_ = std::move(lists);
    shard.count_ = count;
    return shard;
}

void IndexShard::save(const std::filesystem::path& path) const {
    write_file_atomic(path, serialize());
}

IndexShard IndexShard::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw Error("missing index file " + path.string());
    }
    return parse(read_file(path), path.string());
}

void IndexShard::save_quantizers(
        const std::shared_ptr<const TrainedQuantizers>& q,
        const std::filesystem::path& path) {
    IndexShard(q, false).save(path);
}

} // namespace bitext::vindex
