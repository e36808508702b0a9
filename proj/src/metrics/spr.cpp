#include "spectragen/metrics/spr.hpp"

#include <algorithm>
#include <atomic>
#include <limits>
#include <thread>

#include "spectragen/numerics/error.hpp"
#include "spectragen/numerics/random.hpp"

namespace spectragen::metrics {

namespace {

constexpr std::size_t kTile = 64;
constexpr std::size_t kChunk = 32;
constexpr std::uint64_t kGroupStream = 0x67726f7570ULL;

// Anchor rows regrouped into tiles of kTile columns, band-major inside a tile,
// so one query is compared against a whole tile per band step.
struct PackedRows {
    std::size_t rows = 0;
    std::size_t bands = 0;
    std::size_t tiles = 0;
    std::vector<double> data;

    const double* tile(std::size_t t) const { return data.data() + t * bands * kTile; }
    std::size_t tile_width(std::size_t t) const { return std::min(kTile, rows - t * kTile); }
};

PackedRows pack(const SpectralSet& set) {
    PackedRows p;
    p.rows = set.rows();
    p.bands = set.bands();
    p.tiles = (p.rows + kTile - 1) / kTile;
    p.data.assign(p.tiles * p.bands * kTile, 0.0);
    for (std::size_t r = 0; r < p.rows; ++r) {
        const double* src = set.row(r);
        double* dst = p.data.data() + (r / kTile) * p.bands * kTile + r % kTile;
        for (std::size_t b = 0; b < p.bands; ++b) dst[b * kTile] = src[b];
    }
    return p;
}

// Squared distances from q to every column of a tile. Each lane accumulates
// its bands in order, so the result matches a plain per-pair loop bit for bit.
inline void tile_distances(const double* q, const double* tile, std::size_t bands, double* out) {
    alignas(64) double acc[kTile] = {};
    for (std::size_t b = 0; b < bands; ++b) {
        const double qb = q[b];
        const double* col = tile + b * kTile;
        for (std::size_t j = 0; j < kTile; ++j) {
            const double d = qb - col[j];
            acc[j] += d * d;
        }
    }
    std::copy_n(acc, kTile, out);
}

template <class Fn>
void parallel_rows(std::size_t rows, std::size_t threads, Fn fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t chunks = (rows + kChunk - 1) / kChunk;
    threads = std::min(threads, chunks);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t c = next++; c < chunks; c = next++) fn(c * kChunk, std::min(rows, (c + 1) * kChunk));
    };
    if (threads <= 1) {
        worker();
        return;
    }
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
}

void check_pair(const SpectralSet& a, const SpectralSet& b) {
    if (a.rows() == 0 || b.rows() == 0) throw DataError("spectral sets must be nonempty");
    if (a.bands() != b.bands()) {
        throw DataError("band count mismatch: " + std::to_string(a.bands()) + " vs " + std::to_string(b.bands()));
    }
}

}  // namespace

void SprConfig::validate() const {
    if (k == 0) throw DataError("k must be positive");
    if (group_count == 0) throw DataError("group_count must be positive");
    if (sample_count / group_count <= k) {
        throw DataError("groups of " + std::to_string(sample_count / group_count) + " samples cannot hold more than k = " +
                        std::to_string(k));
    }
}

std::vector<double> kth_neighbor_radii(const SpectralSet& set, std::size_t k, std::size_t threads) {
    if (k == 0) throw DataError("k must be positive");
    if (set.rows() <= k) {
        throw DataError("a set of " + std::to_string(set.rows()) + " rows has no " + std::to_string(k) +
                        "-th neighbour besides each row itself");
    }
    const auto packed = pack(set);
    std::vector<double> radii(set.rows());
    parallel_rows(set.rows(), threads, [&](std::size_t begin, std::size_t end) {
        alignas(64) double d[kTile];
        std::vector<std::pair<double, std::size_t>> best;
        best.reserve(k + 1);
        for (std::size_t i = begin; i < end; ++i) {
            best.clear();
            for (std::size_t t = 0; t < packed.tiles; ++t) {
                tile_distances(set.row(i), packed.tile(t), packed.bands, d);
                const std::size_t width = packed.tile_width(t);
                for (std::size_t j = 0; j < width; ++j) {
                    const std::size_t idx = t * kTile + j;
                    if (idx == i) continue;
                    // Columns arrive in index order, so an equal distance never displaces.
                    if (best.size() == k && !(d[j] < best.back().first)) continue;
                    const std::pair<double, std::size_t> cand{d[j], idx};
                    best.insert(std::upper_bound(best.begin(), best.end(), cand), cand);
                    if (best.size() > k) best.pop_back();
                }
            }
            radii[i] = best.back().first;
        }
    });
    return radii;
}

std::size_t count_covered(const SpectralSet& queries, const SpectralSet& anchors, const std::vector<double>& radii,
                          std::size_t threads) {
    check_pair(queries, anchors);
    if (radii.size() != anchors.rows()) throw DataError("one radius per anchor row is required");
    const auto packed = pack(anchors);
    std::vector<unsigned char> hit(queries.rows(), 0);
    parallel_rows(queries.rows(), threads, [&](std::size_t begin, std::size_t end) {
        alignas(64) double d[kTile];
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t t = 0; t < packed.tiles && !hit[i]; ++t) {
                tile_distances(queries.row(i), packed.tile(t), packed.bands, d);
                const std::size_t width = packed.tile_width(t);
                const double* r = radii.data() + t * kTile;
                for (std::size_t j = 0; j < width; ++j) {
                    if (d[j] <= r[j]) {
                        hit[i] = 1;
                        break;
                    }
                }
            }
        }
    });
    return static_cast<std::size_t>(std::count(hit.begin(), hit.end(), 1));
}

SprCounts spr_srec_counts(const SpectralSet& real, const SpectralSet& generated, std::size_t k,
                          std::size_t threads) {
    check_pair(real, generated);
    SprCounts c;
    c.real = real.rows();
    c.generated = generated.rows();
    c.precision_hits = count_covered(generated, real, kth_neighbor_radii(real, k, threads), threads);
    c.recall_hits = count_covered(real, generated, kth_neighbor_radii(generated, k, threads), threads);
    return c;
}

std::vector<std::vector<std::size_t>> spr_groups(std::size_t rows, std::size_t sample_count, std::size_t groups,
                                                 std::uint64_t seed) {
    if (groups == 0) throw DataError("group count must be positive");
    const std::size_t m = std::min(rows, sample_count);
    std::vector<std::size_t> order(rows);
    for (std::size_t i = 0; i < rows; ++i) order[i] = i;
    RandomSource rng(seed, kGroupStream);
    for (std::size_t i = 0; i < m; ++i) std::swap(order[i], order[i + rng.uniform_index(rows - i)]);
    std::vector<std::vector<std::size_t>> out(groups);
    for (std::size_t g = 0; g < groups; ++g) {
        out[g].assign(order.begin() + static_cast<std::ptrdiff_t>(g * m / groups),
                      order.begin() + static_cast<std::ptrdiff_t>((g + 1) * m / groups));
    }
    return out;
}

std::size_t effective_group_count(std::size_t real_rows, std::size_t generated_rows, const SprConfig& config) {
    config.validate();
    const std::size_t mr = std::min(real_rows, config.sample_count), mg = std::min(generated_rows, config.sample_count);
    const std::size_t g = std::min({config.group_count, mr / (config.k + 1), mg / (config.k + 1)});
    if (g == 0) {
        throw DataError("group too small: " + std::to_string(std::min(mr, mg)) + " rows cannot exceed k = " +
                        std::to_string(config.k));
    }
    return g;
}

SprResult spr_srec(const SpectralSet& real, const SpectralSet& generated, const SprConfig& config) {
    check_pair(real, generated);
    const std::size_t g = effective_group_count(real.rows(), generated.rows(), config);
    // One permutation stream for both sides: equal-sized sets get the same grouping.
    const auto real_groups = spr_groups(real.rows(), config.sample_count, g, config.seed);
    const auto gen_groups = spr_groups(generated.rows(), config.sample_count, g, config.seed);
    SprResult result;
    for (std::size_t i = 0; i < g; ++i) {
        result.groups.push_back(spr_srec_counts(real.select(real_groups[i]), generated.select(gen_groups[i]),
                                                config.k, config.threads));
        result.precision += result.groups.back().precision();
        result.recall += result.groups.back().recall();
    }
    result.precision /= static_cast<double>(g);
    result.recall /= static_cast<double>(g);
    return result;
}

}  // namespace spectragen::metrics
