#include <bitext/vindex.hpp>

#include "kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace bitext::vindex {

namespace {

// Float rounding allowance added to the PQ error bound before a candidate is
// dismissed without exact rescoring.
constexpr float kBoundSlack = 1e-4f;

} // namespace

std::string index_file_name(std::string_view lang, std::uint32_t shard) {
    return std::string(lang) + "." + std::to_string(shard) + ".idx";
}

IndexShard::IndexShard(std::shared_ptr<const TrainedQuantizers> quantizers, bool retain_vectors)
        : quantizers_(std::move(quantizers)), retain_vectors_(retain_vectors) {
    if (!quantizers_) {
        throw ConfigError("IndexShard: quantizers are required");
    }
    lists_.resize(quantizers_->coarse.nlist);
}

void IndexShard::add_block(const EmbeddingBlock& block) {
    const auto& q = *quantizers_;
    const std::uint32_t dim = q.dim();
    if (block.rows() == 0) {
        return;
    }
    if (block.dim != dim) {
        throw ConfigError(
                "add_block: block dim " + std::to_string(block.dim) + " != index dim " +
                std::to_string(dim));
    }
    {
        std::unordered_set<GlobalId> incoming;
        for (std::size_t r = 0; r < block.rows(); ++r) {
            GlobalId id = block.id(r);
            if (ids_.contains(id) || !incoming.insert(id).second) {
                throw ConfigError("add_block: duplicate global id " + std::to_string(id));
            }
        }
    }
    const std::size_t m = q.code_size();
    std::vector<float> rotated(dim), residual(dim), rec(dim);
    std::vector<std::uint8_t> code(m);
    for (std::size_t r = 0; r < block.rows(); ++r) {
        const float* v = block.row(r).data();
        q.rotation.apply(v, rotated.data());
        auto list_no = q.coarse.assign(rotated.data());
        const float* c = q.coarse.centroid(list_no);
        for (std::uint32_t d = 0; d < dim; ++d) {
            residual[d] = rotated[d] - c[d];
        }
        q.pq.encode(residual.data(), code.data());
        auto& list = lists_[list_no];
        list.ids.push_back(block.id(r));
        list.codes.insert(list.codes.end(), code.begin(), code.end());
        if (retain_vectors_) {
            q.pq.decode(code.data(), rec.data());
            double err = 0.0;
            for (std::uint32_t d = 0; d < dim; ++d) {
                double e = static_cast<double>(rotated[d]) - (static_cast<double>(c[d]) + rec[d]);
                err += e * e;
            }
            list.vectors.insert(list.vectors.end(), v, v + dim);
            list.error_bounds.push_back(static_cast<float>(std::sqrt(err)));
        }
        ids_.insert(block.id(r));
    }
    count_ += block.rows();
}

IndexShard IndexShard::merge(std::span<const IndexShard> shards) {
    if (shards.empty()) {
        throw ConfigError("merge_shards: no shards given");
    }
    const auto reference = shards.front().serialize_quantizers_only();
    IndexShard out(shards.front().quantizers_, shards.front().retain_vectors_);
    for (const auto& s : shards) {
        if (s.retain_vectors_ != out.retain_vectors_) {
            throw ConfigError("merge_shards: shards disagree on full-vector retention");
        }
        if (s.quantizers_ != out.quantizers_ && s.serialize_quantizers_only() != reference) {
            throw ConfigError("merge_shards: quantizer mismatch");
        }
        for (const auto& l : s.lists_) {
            for (GlobalId id : l.ids) {
                if (!out.ids_.insert(id).second) {
                    throw ConfigError("merge_shards: id collision on " + std::to_string(id));
                }
            }
        }
        for (std::size_t j = 0; j < s.lists_.size(); ++j) {
            auto& dst = out.lists_[j];
            const auto& src = s.lists_[j];
            dst.ids.insert(dst.ids.end(), src.ids.begin(), src.ids.end());
            dst.codes.insert(dst.codes.end(), src.codes.begin(), src.codes.end());
            dst.vectors.insert(dst.vectors.end(), src.vectors.begin(), src.vectors.end());
            dst.error_bounds.insert(dst.error_bounds.end(), src.error_bounds.begin(), src.error_bounds.end());
        }
        out.count_ += s.count_;
    }
    return out;
}

double IndexShard::reconstruction_mse(const EmbeddingBlock& block) const {
    const auto& q = *quantizers_;
    const std::uint32_t dim = q.dim();
    if (block.dim != dim) {
        throw ConfigError("reconstruction_mse: dim mismatch");
    }
    std::vector<float> rotated(dim), residual(dim), rec(dim);
    std::vector<std::uint8_t> code(q.code_size());
    double total = 0.0;
    for (std::size_t r = 0; r < block.rows(); ++r) {
        q.rotation.apply(block.row(r).data(), rotated.data());
        const float* c = q.coarse.centroid(q.coarse.assign(rotated.data()));
        for (std::uint32_t d = 0; d < dim; ++d) {
            residual[d] = rotated[d] - c[d];
        }
        q.pq.encode(residual.data(), code.data());
        q.pq.decode(code.data(), rec.data());
        for (std::uint32_t d = 0; d < dim; ++d) {
            double e = static_cast<double>(rotated[d]) - (static_cast<double>(c[d]) + rec[d]);
            total += e * e;
        }
    }
    return block.rows() == 0 ? 0.0 : total / static_cast<double>(block.rows());
}

std::vector<NeighborList> IndexShard::search(const EmbeddingBlock& queries, const SearchParams& p) const {
    const auto& q = *quantizers_;
    const std::uint32_t dim = q.dim();
    const std::uint32_t nlist = q.coarse.nlist;
    if (p.k == 0) {
        throw ConfigError("search: k must be >= 1");
    }
    if (p.nprobe == 0 || p.nprobe > nlist) {
        throw ConfigError(
                "search: nprobe must be in [1, " + std::to_string(nlist) + "], got " +
                std::to_string(p.nprobe));
    }
    if (queries.rows() > 0 && queries.dim != dim) {
        throw ConfigError(
                "search: query dim " + std::to_string(queries.dim) + " != index dim " +
                std::to_string(dim));
    }
    const std::size_t m = q.code_size();
    const std::uint32_t ds = q.pq.sub_dim();
    const bool exact_refine = p.refine && retain_vectors_;

    std::vector<NeighborList> out(queries.rows());
    constexpr std::size_t kChunk = 16;
    std::size_t chunks = (queries.rows() + kChunk - 1) / kChunk;

    parallel_for(chunks, p.workers, [&](std::size_t chunk) {
        std::vector<float> rotated(dim);
        std::vector<float> coarse_scores(nlist);
        std::vector<std::uint32_t> order(nlist);
        std::vector<float> lut(m * kCodebookSize);
        struct Candidate {
            float est;
            float bound;
            GlobalId id;
            const float* vec;
        };
        std::vector<Candidate> cands;
        TopK top(p.k);

        std::size_t end = std::min(queries.rows(), (chunk + 1) * kChunk);
        for (std::size_t qi = chunk * kChunk; qi < end; ++qi) {
            const float* query = queries.row(qi).data();
            q.rotation.apply(query, rotated.data());
            for (std::uint32_t j = 0; j < nlist; ++j) {
                coarse_scores[j] = detail::dot_kernel(rotated.data(), q.coarse.centroid(j), dim);
            }
            std::iota(order.begin(), order.end(), 0);
            std::partial_sort(order.begin(), order.begin() + p.nprobe, order.end(),
                              [&](std::uint32_t a, std::uint32_t b) {
                                  return ranks_before(coarse_scores[a], a, coarse_scores[b], b);
                              });
            for (std::size_t s = 0; s < m; ++s) {
                for (std::uint32_t c = 0; c < kCodebookSize; ++c) {
                    lut[s * kCodebookSize + c] = detail::dot_kernel(
                            rotated.data() + s * ds, q.pq.entry(static_cast<std::uint32_t>(s), c), ds);
                }
            }

            cands.clear();
            for (std::uint32_t pi = 0; pi < p.nprobe; ++pi) {
                std::uint32_t j = order[pi];
                const auto& list = lists_[j];
                const float base = coarse_scores[j];
                for (std::size_t e = 0; e < list.ids.size(); ++e) {
                    const std::uint8_t* code = list.codes.data() + e * m;
                    float est = base;
                    for (std::size_t s = 0; s < m; ++s) {
                        est += lut[s * kCodebookSize + code[s]];
                    }
                    if (exact_refine) {
                        cands.push_back({est, est + list.error_bounds[e] + kBoundSlack, list.ids[e],
                                         list.vectors.data() + e * dim});
                    } else {
                        top.push(est, list.ids[e]);
                    }
                }
            }

            if (exact_refine) {
                std::size_t first_pass = std::min<std::size_t>(
                        cands.size(), static_cast<std::size_t>(p.refine_factor) * p.k);
                if (first_pass < cands.size()) {
                    std::nth_element(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(first_pass),
                                     cands.end(), [](const Candidate& a, const Candidate& b) {
                                         return ranks_before(a.est, a.id, b.est, b.id);
                                     });
                }
                for (std::size_t i = 0; i < first_pass; ++i) {
                    top.push(detail::dot_kernel(query, cands[i].vec, dim), cands[i].id);
                }
                for (std::size_t i = first_pass; i < cands.size(); ++i) {
                    if (top.full() && cands[i].bound < top.worst_sim()) {
                        continue;
                    }
                    top.push(detail::dot_kernel(query, cands[i].vec, dim), cands[i].id);
                }
            }

            auto& res = out[qi];
            res.query_id = queries.id(qi);
            res.direction = p.direction;
            top.extract(res);
        }
    });
    return out;
}

} // namespace bitext::vindex
