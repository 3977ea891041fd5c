#include <bitext/kmeans.hpp>
#include <bitext/vindex.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <map>

using namespace bitext;
using namespace bitext::vindex;
using testsupport::TempDir;

namespace {

// Points scattered around `clusters` random unit centers; label[r] is the
// generating center.
struct Clustered {
    EmbeddingBlock block;
    std::vector<std::uint32_t> label;
};

Clustered clustered(std::size_t rows, std::uint32_t dim, std::uint32_t clusters, double noise, std::uint64_t seed,
                    GlobalId base = 0) {
    auto centers = testsupport::random_block(clusters, dim, seed ^ 0x5eed);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Clustered c{EmbeddingBlock(dim, rows), {}};
    c.block.base_global_id = base;
    for (std::size_t r = 0; r < rows; ++r) {
        const auto lab = static_cast<std::uint32_t>(r % clusters);
        std::vector<double> v(dim);
        double n = 0;
        for (std::uint32_t d = 0; d < dim; ++d) {
            v[d] = centers.row(lab)[d] + noise * g(rng);
            n += v[d] * v[d];
        }
        for (std::uint32_t d = 0; d < dim; ++d) {
            c.block.data[r * dim + d] = static_cast<float>(v[d] / std::sqrt(n));
        }
        c.label.push_back(lab);
    }
    return c;
}

std::shared_ptr<const TrainedQuantizers> train(const EmbeddingBlock& sample, TrainOptions opt,
                                               TrainReport* report = nullptr) {
    return std::make_shared<const TrainedQuantizers>(train_index(std::span(&sample, 1), opt, report));
}

double recall_at(const std::vector<NeighborList>& got, const std::vector<std::vector<testsupport::Hit>>& want) {
    std::size_t hit = 0, total = 0;
    for (std::size_t q = 0; q < want.size(); ++q) {
        std::set<GlobalId> g(got[q].ids.begin(), got[q].ids.end());
        for (const auto& h : want[q]) {
            hit += g.count(h.id);
        }
        total += want[q].size();
    }
    return total ? static_cast<double>(hit) / total : 1.0;
}

} // namespace

TEST(Train, SingleListIsNormalizedMean) {
    auto s = testsupport::random_block(300, 16, 4);
    auto q = train(s, {.nlist = 1, .m = 4});
    std::vector<double> mean(16, 0.0);
    for (std::size_t r = 0; r < s.rows(); ++r) {
        for (int d = 0; d < 16; ++d) {
            mean[d] += s.row(r)[d];
        }
    }
    double n = 0;
    for (double x : mean) {
        n += x * x;
    }
    for (int d = 0; d < 16; ++d) {
        EXPECT_NEAR(q->coarse.centroid(0)[d], mean[d] / std::sqrt(n), 1e-4);
    }
}

TEST(Train, FewDistinctResidualsAreMemorized) {
    // 100 distinct vectors repeated: 256 entries per sub-quantizer cover them all.
    auto base = testsupport::random_block(100, 8, 9);
    EmbeddingBlock s(8, 300);
    for (std::size_t r = 0; r < 300; ++r) {
        std::copy_n(base.row(r % 100).data(), 8, s.data.data() + r * 8);
    }
    auto q = train(s, {.nlist = 1, .m = 1});
    IndexShard shard(q, false);
    EXPECT_LT(shard.reconstruction_mse(base), 1e-10);
}

TEST(Train, ClusterPurity) {
    auto c = clustered(10000, 32, 16, 0.05, 1);
    auto q = train(c.block, {.nlist = 16, .m = 8, .seed = 3});
    std::map<std::uint32_t, std::map<std::uint32_t, std::size_t>> votes;
    for (std::size_t r = 0; r < c.block.rows(); ++r) {
        ++votes[q->coarse.assign(c.block.row(r).data())][c.label[r]];
    }
    std::size_t agree = 0;
    for (const auto& [list, counts] : votes) {
        std::size_t best = 0;
        for (const auto& [lab, n] : counts) {
            best = std::max(best, n);
        }
        agree += best;
    }
    EXPECT_GE(static_cast<double>(agree) / c.block.rows(), 0.95);
}

TEST(Train, Deterministic) {
    auto s = testsupport::random_block(1000, 32, 5);
    TrainOptions opt{.nlist = 8, .m = 4, .use_rotation = true, .seed = 11};
    auto a = train(s, opt);
    auto b = train(s, opt);
    EXPECT_TRUE(*a == *b);
    IndexShard sa(a, false), sb(b, false);
    sa.add_block(s);
    sb.add_block(s);
    EXPECT_EQ(sa.serialize(), sb.serialize());
}

TEST(Train, PqErrorNonIncreasing) {
    auto s = testsupport::random_block(2000, 32, 6);
    TrainReport rep;
    train(s, {.nlist = 4, .m = 4}, &rep);
    ASSERT_GE(rep.pq_mse.size(), 2u);
    for (std::size_t i = 1; i < rep.pq_mse.size(); ++i) {
        EXPECT_LE(rep.pq_mse[i], rep.pq_mse[i - 1] * (1 + 1e-9)) << "iteration " << i;
    }
    for (std::size_t i = 1; i < rep.coarse_mse.size(); ++i) {
        EXPECT_LE(rep.coarse_mse[i], rep.coarse_mse[i - 1] * (1 + 1e-9)) << "iteration " << i;
    }
}

TEST(Train, RotationIsOrthonormal) {
    auto s = testsupport::random_block(1500, 32, 7);
    auto q = train(s, {.nlist = 4, .m = 8, .use_rotation = true});
    EXPECT_TRUE(q->rotation.enabled);
    EXPECT_LE(q->rotation.orthonormality_error(), 1e-4);
    auto id = Rotation::identity(32);
    EXPECT_EQ(id.orthonormality_error(), 0.0);
}

TEST(Train, Errors) {
    auto small = testsupport::random_block(100, 16, 1);
    try {
        train(small, {.nlist = 4, .m = 4});
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("256"), std::string::npos) << e.what();
    }
    EXPECT_EQ(min_training_rows({.nlist = 1000}), 1000u);
    auto s = testsupport::random_block(300, 16, 1);
    EXPECT_THROW(train(s, {.nlist = 4, .m = 5}), ConfigError);
    EXPECT_THROW(train(s, {.nlist = 0, .m = 4}), ConfigError);
}

TEST(SampleRows, BoundedAndDeterministic) {
    std::vector<EmbeddingBlock> blocks = {testsupport::random_block(50, 8, 1), testsupport::random_block(70, 8, 2, 50)};
    auto all = sample_rows(blocks, 1000, 0);
    EXPECT_EQ(all.rows(), 120u);
    auto a = sample_rows(blocks, 30, 5);
    auto b = sample_rows(blocks, 30, 5);
    EXPECT_EQ(a.rows(), 30u);
    EXPECT_EQ(a.data, b.data);
}

class ShardTest : public ::testing::Test {
   protected:
    static void SetUpTestSuite() {
        sample_ = new EmbeddingBlock(testsupport::random_block(2000, 32, 100));
        q_ = train(*sample_, {.nlist = 16, .m = 8, .seed = 1});
    }
    static void TearDownTestSuite() {
        delete sample_;
        q_.reset();
    }
    static inline EmbeddingBlock* sample_ = nullptr;
    static inline std::shared_ptr<const TrainedQuantizers> q_;
};

TEST_F(ShardTest, EmptyAddLeavesShardUnchanged) {
    IndexShard s(q_, true);
    auto before = s.serialize();
    s.add_block(EmbeddingBlock(32, 0));
    EXPECT_EQ(s.size(), 0u);
    EXPECT_EQ(s.serialize(), before);
}

TEST_F(ShardTest, CentroidVectorLandsInItsList) {
    IndexShard s(q_, false);
    const std::uint32_t j = 5;
    EmbeddingBlock b(32, 1);
    std::copy_n(q_->coarse.centroid(j), 32, b.data.data());
    b.base_global_id = 42;
    s.add_block(b);
    ASSERT_EQ(s.lists()[j].ids.size(), 1u);
    EXPECT_EQ(s.lists()[j].ids[0], 42u);
    EXPECT_TRUE(s.contains(42));
}

TEST_F(ShardTest, ReconstructionErrorMatchesDecodedCodes) {
    auto data = testsupport::random_block(3000, 32, 200);
    IndexShard s(q_, false);
    s.add_block(data);
    ASSERT_EQ(s.size(), 3000u);
    // Decode every stored code by hand and compare to the rotated original.
    double err = 0;
    std::size_t seen = 0;
    std::vector<float> rot(32), rec(32);
    for (std::uint32_t l = 0; l < s.lists().size(); ++l) {
        const auto& list = s.lists()[l];
        for (std::size_t e = 0; e < list.ids.size(); ++e) {
            auto row = data.row(list.ids[e] - data.base_global_id);
            q_->rotation.apply(row.data(), rot.data());
            q_->pq.decode(list.codes.data() + e * q_->pq.m, rec.data());
            for (int d = 0; d < 32; ++d) {
                double diff = rot[d] - (q_->coarse.centroid(l)[d] + rec[d]);
                err += diff * diff;
            }
            ++seen;
        }
    }
    EXPECT_EQ(seen, 3000u);
    EXPECT_NEAR(s.reconstruction_mse(data), err / seen, 1e-6);
    EXPECT_LT(err / seen, 1.0);
}

TEST_F(ShardTest, AddErrorsLeaveShardUnchanged) {
    IndexShard s(q_, false);
    auto a = testsupport::random_block(10, 32, 1, 0);
    s.add_block(a);
    auto before = s.serialize();
    auto dup = testsupport::random_block(10, 32, 2, 5);
    try {
        s.add_block(dup);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("duplicate global id 5"), std::string::npos) << e.what();
    }
    EXPECT_THROW(s.add_block(testsupport::random_block(3, 16, 1, 100)), ConfigError);
    EXPECT_EQ(s.serialize(), before);
}

TEST_F(ShardTest, MergeIdentityAndEmpty) {
    IndexShard a(q_, true);
    a.add_block(testsupport::random_block(500, 32, 3));
    std::vector<IndexShard> one = {a};
    EXPECT_EQ(IndexShard::merge(one).serialize(), a.serialize());
    std::vector<IndexShard> with_empty = {a, IndexShard(q_, true)};
    EXPECT_EQ(IndexShard::merge(with_empty).serialize(), a.serialize());
}

TEST_F(ShardTest, MergeEqualsSequentialAdd) {
    auto b0 = testsupport::random_block(400, 32, 10, 0);
    auto b1 = testsupport::random_block(400, 32, 11, 400);
    IndexShard s0(q_, true), s1(q_, true), seq(q_, true);
    s0.add_block(b0);
    s1.add_block(b1);
    seq.add_block(b0);
    seq.add_block(b1);
    std::vector<IndexShard> parts = {s0, s1};
    auto merged = IndexShard::merge(parts);
    EXPECT_EQ(merged.serialize(), seq.serialize());
    auto queries = testsupport::random_block(100, 32, 12);
    SearchParams p{.k = 10, .nprobe = 4};
    EXPECT_EQ(merged.search(queries, p), seq.search(queries, p));
}

TEST_F(ShardTest, MergeRejectsMismatchAndCollision) {
    auto other = train(*sample_, {.nlist = 16, .m = 8, .seed = 2});
    IndexShard a(q_, false), b(other, false), c(q_, false), d(q_, true);
    a.add_block(testsupport::random_block(10, 32, 1, 0));
    b.add_block(testsupport::random_block(10, 32, 1, 100));
    c.add_block(testsupport::random_block(10, 32, 2, 9));
    std::vector<IndexShard> mismatch = {a, b};
    EXPECT_THROW(IndexShard::merge(mismatch), ConfigError);
    std::vector<IndexShard> collide = {a, c};
    try {
        IndexShard::merge(collide);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("9"), std::string::npos);
    }
    std::vector<IndexShard> retention = {a, d};
    EXPECT_THROW(IndexShard::merge(retention), ConfigError);
    EXPECT_THROW(IndexShard::merge(std::span<const IndexShard>{}), ConfigError);
}

TEST_F(ShardTest, SelfSearchFindsItself) {
    auto data = testsupport::random_block(1000, 32, 20, 5000);
    IndexShard s(q_, true);
    s.add_block(data);
    EmbeddingBlock queries(32, 50);
    for (std::size_t i = 0; i < 50; ++i) {
        std::copy_n(data.row(i * 20).data(), 32, queries.data.data() + i * 32);
    }
    auto res = s.search(queries, {.k = 1, .nprobe = 16, .refine = true});
    for (std::size_t i = 0; i < 50; ++i) {
        ASSERT_EQ(res[i].size(), 1u);
        EXPECT_EQ(res[i].ids[0], 5000 + i * 20);
        EXPECT_NEAR(res[i].sims[0], 1.0, 1e-5);
    }
}

TEST_F(ShardTest, EmptyShardGivesShortResults) {
    IndexShard s(q_, false);
    auto res = s.search(testsupport::random_block(3, 32, 1), {.k = 16, .nprobe = 16});
    ASSERT_EQ(res.size(), 3u);
    for (const auto& r : res) {
        EXPECT_EQ(r.size(), 0u);
        EXPECT_TRUE(r.short_result);
    }
    IndexShard t(q_, false);
    t.add_block(testsupport::random_block(5, 32, 2));
    auto few = t.search(testsupport::random_block(2, 32, 3), {.k = 16, .nprobe = 16});
    EXPECT_EQ(few[0].size(), 5u);
    EXPECT_TRUE(few[0].short_result);
}

TEST_F(ShardTest, FullProbeWithRefineIsExact) {
    auto data = testsupport::random_block(20000, 32, 30);
    auto queries = testsupport::random_block(300, 32, 31);
    IndexShard s(q_, true);
    s.add_block(data);
    auto got = s.search(queries, {.k = 16, .nprobe = 16, .refine = true});
    auto want = testsupport::brute_knn(data, queries, 16);
    for (std::size_t q = 0; q < queries.rows(); ++q) {
        ASSERT_TRUE(testsupport::same_topk(got[q], want[q], 1e-6)) << "query " << q;
        for (std::size_t i = 0; i < want[q].size(); ++i) {
            EXPECT_EQ(got[q].ids[i], want[q][i].id);
        }
    }
}

TEST_F(ShardTest, RecallGrowsWithNprobe) {
    auto data = testsupport::random_block(10000, 32, 40);
    auto queries = testsupport::random_block(200, 32, 41);
    IndexShard s(q_, false);
    s.add_block(data);
    auto want = testsupport::brute_knn(data, queries, 16);
    double prev = -1;
    for (std::uint32_t np : {1u, 2u, 4u, 8u, 16u}) {
        double r = recall_at(s.search(queries, {.k = 16, .nprobe = np}), want);
        EXPECT_GE(r, prev - 1e-12) << "nprobe " << np;
        prev = r;
    }
}

TEST_F(ShardTest, SearchParamErrors) {
    IndexShard s(q_, false);
    auto q = testsupport::random_block(1, 32, 1);
    EXPECT_THROW(s.search(q, {.k = 0, .nprobe = 1}), ConfigError);
    EXPECT_THROW(s.search(q, {.k = 4, .nprobe = 0}), ConfigError);
    EXPECT_THROW(s.search(q, {.k = 4, .nprobe = 17}), ConfigError);
    EXPECT_THROW(s.search(testsupport::random_block(1, 16, 1), {.k = 4, .nprobe = 1}), ConfigError);
}

TEST_F(ShardTest, SearchDeterministicAcrossWorkers) {
    auto data = testsupport::random_block(3000, 32, 50);
    auto queries = testsupport::random_block(100, 32, 51);
    IndexShard s(q_, true);
    s.add_block(data);
    SearchParams p{.k = 8, .nprobe = 3, .refine = true, .workers = 1};
    auto a = s.search(queries, p);
    p.workers = 4;
    EXPECT_EQ(a, s.search(queries, p));
}

TEST_F(ShardTest, FileRoundTrip) {
    TempDir dir("idx");
    IndexShard s(q_, true);
    s.add_block(testsupport::random_block(700, 32, 60, 1000));
    auto path = dir / index_file_name("en", 2);
    s.save(path);
    auto bytes = read_file(path);
    EXPECT_EQ(bytes.substr(0, 4), "IVF1");
    auto r = IndexShard::load(path);
    EXPECT_EQ(r.size(), 700u);
    EXPECT_TRUE(r.retains_vectors());
    EXPECT_EQ(r.serialize(), bytes);
    EXPECT_TRUE(r.quantizers() == *q_);
    EXPECT_EQ(r.serialize_quantizers_only(), s.serialize_quantizers_only());

    IndexShard::save_quantizers(q_, dir / "t.idx");
    auto t = IndexShard::load(dir / "t.idx");
    EXPECT_EQ(t.size(), 0u);
    EXPECT_TRUE(t.quantizers() == *q_);

    EXPECT_THROW(IndexShard::parse(bytes.substr(0, bytes.size() - 3)), FormatError);
    auto bad = bytes;
    bad[1] = 'X';
    EXPECT_THROW(IndexShard::parse(bad), FormatError);
}

TEST(SearchExact, OrthonormalTieBreak) {
    EmbeddingBlock basis(4, 4);
    for (int i = 0; i < 4; ++i) {
        basis.data[i * 4 + i] = 1.0f;
    }
    EmbeddingBlock q(4, 1);
    q.data[0] = 1.0f;
    auto r = search_exact(basis, q, 3);
    ASSERT_EQ(r[0].size(), 3u);
    EXPECT_EQ(r[0].ids, (std::vector<GlobalId>{0, 1, 2}));
    EXPECT_EQ(r[0].sims, (std::vector<float>{1.0f, 0.0f, 0.0f}));
    EXPECT_FALSE(r[0].short_result);
    auto all = search_exact(basis, q, 10);
    EXPECT_EQ(all[0].size(), 4u);
    EXPECT_TRUE(all[0].short_result);
}

TEST(SearchExact, MatchesBruteForceOracle) {
    auto data = testsupport::random_block(5000, 128, 70);
    auto queries = testsupport::random_block(200, 128, 71);
    auto got = search_exact(data, queries, 16);
    auto want = testsupport::brute_knn(data, queries, 16);
    for (std::size_t q = 0; q < queries.rows(); ++q) {
        ASSERT_EQ(got[q].size(), 16u);
        for (std::size_t i = 0; i < 16; ++i) {
            EXPECT_EQ(got[q].ids[i], want[q][i].id);
            EXPECT_EQ(got[q].sims[i], want[q][i].sim);
        }
    }
}

TEST(SearchExact, MultipleBlocksAndWorkers) {
    std::vector<EmbeddingBlock> corpus = {testsupport::random_block(300, 16, 1, 0),
                                          testsupport::random_block(200, 16, 2, 300)};
    auto queries = testsupport::random_block(40, 16, 3);
    auto a = search_exact(corpus, queries, 5, Direction::Backward, 1);
    auto b = search_exact(corpus, queries, 5, Direction::Backward, 3);
    EXPECT_EQ(a, b);
    auto want = testsupport::brute_knn({&corpus[0], &corpus[1]}, queries, 5);
    for (std::size_t q = 0; q < queries.rows(); ++q) {
        EXPECT_EQ(a[q].direction, Direction::Backward);
        for (std::size_t i = 0; i < 5; ++i) {
            EXPECT_EQ(a[q].ids[i], want[q][i].id);
        }
    }
}
