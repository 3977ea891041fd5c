#include <bitext/vindex.hpp>

#include "kernels.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace bitext::vindex {

Rotation Rotation::identity(std::uint32_t dim) {
    Rotation r;
    r.dim = dim;
    r.enabled = false;
    return r;
}

void Rotation::apply(const float* in, float* out) const {
    if (!enabled) {
        std::copy_n(in, dim, out);
        return;
    }
    for (std::uint32_t i = 0; i < dim; ++i) {
        out[i] = detail::dot_kernel(matrix.data() + static_cast<std::size_t>(i) * dim, in, dim);
    }
}

double Rotation::orthonormality_error() const {
    if (!enabled) {
        return 0.0;
    }
    double worst = 0.0;
    for (std::uint32_t i = 0; i < dim; ++i) {
        for (std::uint32_t j = 0; j < dim; ++j) {
            double s = 0.0;
            for (std::uint32_t r = 0; r < dim; ++r) {
                s += static_cast<double>(matrix[r * dim + i]) * matrix[r * dim + j];
            }
            worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
        }
    }
    return worst;
}

std::uint32_t CoarseQuantizer::assign(const float* v) const {
    return nearest_centroid(v, centroids, dim, KMeansMetric::Spherical);
}

void PQCodebook::encode(const float* v, std::uint8_t* code) const {
    const std::uint32_t ds = sub_dim();
    for (std::uint32_t s = 0; s < m; ++s) {
        std::span<const float> book(codebooks.data() + static_cast<std::size_t>(s) * kCodebookSize * ds,
                                    static_cast<std::size_t>(kCodebookSize) * ds);
        code[s] = static_cast<std::uint8_t>(nearest_centroid(v + s * ds, book, ds, KMeansMetric::L2));
    }
}

void PQCodebook::decode(const std::uint8_t* code, float* out) const {
    const std::uint32_t ds = sub_dim();
    for (std::uint32_t s = 0; s < m; ++s) {
        std::copy_n(entry(s, code[s]), ds, out + s * ds);
    }
}

std::size_t min_training_rows(const TrainOptions& options) {
    return std::max<std::size_t>(options.nlist, kCodebookSize);
}

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Trains m independent 256-entry sub-quantizers on `data` (n x dim).
PQCodebook train_pq(
        const std::vector<float>& data,
        std::uint32_t dim,
        std::uint32_t m,
        std::uint64_t seed,
        int iterations,
        unsigned workers,
        std::vector<double>* trace) {
    PQCodebook pq;
    pq.dim = dim;
    pq.m = m;
    const std::uint32_t ds = dim / m;
    const std::size_t n = data.size() / dim;
    pq.codebooks.resize(static_cast<std::size_t>(m) * kCodebookSize * ds);
    std::vector<float> sub(n * ds);
    if (trace) {
        trace->assign(static_cast<std::size_t>(iterations) + 1, 0.0);
    }
    for (std::uint32_t s = 0; s < m; ++s) {
        for (std::size_t i = 0; i < n; ++i) {
            std::copy_n(data.data() + i * dim + s * ds, ds, sub.data() + i * ds);
        }
        KMeansOptions opt;
        opt.k = kCodebookSize;
        opt.iterations = iterations;
        opt.seed = derive_seed(seed, s);
        opt.metric = KMeansMetric::L2;
        opt.workers = workers;
        auto res = kmeans(sub, ds, opt);
        std::copy(res.centroids.begin(), res.centroids.end(),
                  pq.codebooks.begin() + static_cast<std::ptrdiff_t>(s) * kCodebookSize * ds);
        if (trace) {
            for (std::size_t t = 0; t < res.mse_trace.size(); ++t) {
                (*trace)[t] += res.mse_trace[t];
            }
        }
    }
    return pq;
}

std::vector<float> rotate_all(const Rotation& r, const std::vector<float>& data, std::uint32_t dim) {
    std::vector<float> out(data.size());
    std::size_t n = data.size() / dim;
    for (std::size_t i = 0; i < n; ++i) {
        r.apply(data.data() + i * dim, out.data() + i * dim);
    }
    return out;
}

double pq_error(const PQCodebook& pq, const std::vector<float>& data, std::uint32_t dim) {
    std::size_t n = data.size() / dim;
    std::vector<std::uint8_t> code(pq.m);
    std::vector<float> rec(dim);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        pq.encode(data.data() + i * dim, code.data());
        pq.decode(code.data(), rec.data());
        total += detail::l2sqr_kernel(data.data() + i * dim, rec.data(), dim);
    }
    return n == 0 ? 0.0 : total / static_cast<double>(n);
}

// Non-parametric OPQ: alternate PQ fitting on the rotated sample and an
// orthogonal Procrustes update of the rotation.
Rotation train_rotation(
        const std::vector<float>& x,
        std::uint32_t dim,
        const TrainOptions& opt,
        TrainReport* report) {
    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const std::size_t n = x.size() / dim;
    Mat X(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::uint32_t d = 0; d < dim; ++d) {
            X(static_cast<Eigen::Index>(i), d) = x[i * dim + d];
        }
    }
    Rotation rot;
    rot.dim = dim;
    rot.enabled = true;
    rot.matrix.assign(static_cast<std::size_t>(dim) * dim, 0.0f);
    for (std::uint32_t i = 0; i < dim; ++i) {
        rot.matrix[static_cast<std::size_t>(i) * dim + i] = 1.0f;
    }
    for (int round = 0; round < opt.rotation_rounds; ++round) {
        auto xr = rotate_all(rot, x, dim);
        auto pq = train_pq(xr, dim, opt.m, derive_seed(opt.seed, 1000 + round), opt.iterations,
                           opt.workers, nullptr);
        if (report) {
            report->rotation_mse.push_back(pq_error(pq, xr, dim));
        }
        Mat Y(n, dim);
        std::vector<std::uint8_t> code(opt.m);
        std::vector<float> rec(dim);
        for (std::size_t i = 0; i < n; ++i) {
            pq.encode(xr.data() + i * dim, code.data());
            pq.decode(code.data(), rec.data());
            for (std::uint32_t d = 0; d < dim; ++d) {
                Y(static_cast<Eigen::Index>(i), d) = rec[d];
            }
        }
        // argmin_R || X R^T - Y ||_F over orthogonal R: with X^T Y = U S V^T,
        // R = V U^T.
        Mat M = X.transpose() * Y;
        Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
        Mat R = svd.matrixV() * svd.matrixU().transpose();
        for (std::uint32_t i = 0; i < dim; ++i) {
            for (std::uint32_t j = 0; j < dim; ++j) {
                rot.matrix[static_cast<std::size_t>(i) * dim + j] = static_cast<float>(R(i, j));
            }
        }
    }
    return rot;
}

} // namespace

EmbeddingBlock sample_rows(
        std::span<const EmbeddingBlock> blocks,
        std::size_t max_rows,
        std::uint64_t seed) {
    EmbeddingBlock out;
    std::size_t total = 0;
    for (const auto& b : blocks) {
        if (out.dim == 0) {
            out.dim = b.dim;
        } else if (b.dim != out.dim) {
            throw ConfigError("sample_rows: blocks disagree on dim");
        }
        total += b.rows();
    }
    std::vector<std::size_t> chosen;
    if (total <= max_rows) {
        chosen.resize(total);
        std::iota(chosen.begin(), chosen.end(), 0);
    } else {
        std::vector<std::size_t> idx(total);
        std::iota(idx.begin(), idx.end(), 0);
        std::mt19937_64 rng(seed);
        for (std::size_t i = 0; i < max_rows; ++i) {
            auto span = static_cast<double>(total - i);
            auto j = i + std::min(total - i - 1,
                                  static_cast<std::size_t>(static_cast<double>(rng() >> 11) * 0x1.0p-53 * span));
            std::swap(idx[i], idx[j]);
        }
        chosen.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(max_rows));
        std::sort(chosen.begin(), chosen.end());
    }
    out.data.reserve(chosen.size() * out.dim);
    std::size_t b = 0;
    std::size_t offset = 0;
    for (auto g : chosen) {
        while (g >= offset + blocks[b].rows()) {
            offset += blocks[b].rows();
            ++b;
        }
        auto row = blocks[b].row(g - offset);
        out.data.insert(out.data.end(), row.begin(), row.end());
    }
    return out;
}

TrainedQuantizers train_index(
        std::span<const EmbeddingBlock> sample,
        const TrainOptions& opt,
        TrainReport* report) {
    std::uint32_t dim = 0;
    std::size_t n = 0;
    for (const auto& b : sample) {
        if (dim == 0) {
            dim = b.dim;
        } else if (b.dim != dim) {
            throw ConfigError("train_index: sample blocks disagree on dim");
        }
        n += b.rows();
    }
    if (opt.nlist == 0) {
        throw ConfigError("train_index: nlist must be >= 1");
    }
    if (opt.m == 0 || dim == 0 || dim % opt.m != 0) {
        throw ConfigError(
                "train_index: dim " + std::to_string(dim) + " is not divisible by m=" +
                std::to_string(opt.m));
    }
    if (n < min_training_rows(opt)) {
        throw ConfigError(
                "train_index: sample has " + std::to_string(n) + " rows, need at least " +
                std::to_string(min_training_rows(opt)) + " (max(nlist, 256))");
    }
    std::vector<float> x;
    x.reserve(n * dim);
    for (const auto& b : sample) {
        x.insert(x.end(), b.data.begin(), b.data.end());
    }

    TrainedQuantizers q;
    q.rotation = opt.use_rotation ? train_rotation(x, dim, opt, report) : Rotation::identity(dim);
    auto xr = rotate_all(q.rotation, x, dim);

    KMeansOptions kopt;
    kopt.k = opt.nlist;
    kopt.iterations = opt.iterations;
    kopt.seed = opt.seed;
    kopt.metric = KMeansMetric::Spherical;
    kopt.workers = opt.workers;
    auto coarse = kmeans(xr, dim, kopt);
    q.coarse.dim = dim;
    q.coarse.nlist = opt.nlist;
    q.coarse.centroids = std::move(coarse.centroids);
    if (report) {
        report->coarse_mse = coarse.mse_trace;
    }

    std::vector<float> residuals(xr.size());
    for (std::size_t i = 0; i < n; ++i) {
        const float* v = xr.data() + i * dim;
        const float* c = q.coarse.centroid(q.coarse.assign(v));
        for (std::uint32_t d = 0; d < dim; ++d) {
            residuals[i * dim + d] = v[d] - c[d];
        }
    }
    q.pq = train_pq(residuals, dim, opt.m, derive_seed(opt.seed, 7), opt.iterations, opt.workers,
                    report ? &report->pq_mse : nullptr);
    return q;
}

} // namespace bitext::vindex
