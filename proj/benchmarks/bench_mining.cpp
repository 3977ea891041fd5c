#include <bitext/evalkit.hpp>
#include <bitext/miner.hpp>
#include <bitext/vindex.hpp>

#include <benchmark/benchmark.h>

#include <memory>

using namespace bitext;

namespace {

constexpr std::uint32_t kDim = 64;

const evalkit::PlantedCorpus& planted() {
    static const auto pc = evalkit::plant_corpus(5000, 5000, kDim, 0.1, 7);
    return pc;
}

std::shared_ptr<const vindex::TrainedQuantizers> quantizers() {
    static const auto q = [] {
        vindex::TrainOptions opt;
        opt.nlist = 64;
        opt.m = 16;
        return std::make_shared<const vindex::TrainedQuantizers>(
                vindex::train_index(std::span(&planted().b, 1), opt));
    }();
    return q;
}

EmbeddingBlock head(const EmbeddingBlock& b, std::size_t n) {
    EmbeddingBlock out = b;
    out.data.resize(n * b.dim);
    return out;
}

} // namespace

static void BM_ExactSearch(benchmark::State& state) {
    const auto& pc = planted();
    auto queries = head(pc.a, state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(vindex::search_exact(pc.b, queries, 16));
    }
    state.counters["sims/s"] = benchmark::Counter(
            double(queries.rows()) * pc.b.rows(), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_ExactSearch)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);

static void BM_PqEncode(benchmark::State& state) {
    const auto& q = quantizers()->pq;
    const auto& b = planted().b;
    std::vector<std::uint8_t> code(q.m);
    std::size_t row = 0;
    for (auto _ : state) {
        q.encode(b.data.data() + (row % b.rows()) * kDim, code.data());
        benchmark::DoNotOptimize(code.data());
        ++row;
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PqEncode);

static void BM_IndexAdd(benchmark::State& state) {
    for (auto _ : state) {
        vindex::IndexShard shard(quantizers(), false);
        shard.add_block(planted().b);
        benchmark::DoNotOptimize(shard.size());
    }
    state.SetItemsProcessed(state.iterations() * planted().b.rows());
}
BENCHMARK(BM_IndexAdd)->Unit(benchmark::kMillisecond);

static void BM_IvfSearch(benchmark::State& state) {
    static const auto shard = [] {
        vindex::IndexShard s(quantizers(), true);
        s.add_block(planted().b);
        return s;
    }();
    auto queries = head(planted().a, 512);
    vindex::SearchParams p;
    p.nprobe = static_cast<std::uint32_t>(state.range(0));
    p.refine = state.range(1) != 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(shard.search(queries, p));
    }
    state.SetItemsProcessed(state.iterations() * queries.rows());
}
BENCHMARK(BM_IvfSearch)->ArgsProduct({{1, 8, 64}, {0, 1}})->Unit(benchmark::kMillisecond);

static void BM_MaxStrategy(benchmark::State& state) {
    const auto& pc = planted();
    NeighborFile fwd{16, Direction::Forward, vindex::search_exact(pc.b, pc.a, 16)};
    NeighborFile bwd{16, Direction::Backward, vindex::search_exact(pc.a, pc.b, 16, Direction::Backward)};
    auto cands = miner::margin_scores(fwd, bwd);
    for (auto _ : state) {
        benchmark::DoNotOptimize(miner::max_strategy_select(cands, 1.06));
    }
    state.SetItemsProcessed(state.iterations() * cands.size());
}
BENCHMARK(BM_MaxStrategy)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
