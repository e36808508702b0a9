#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "spectragen/metrics/spectral_set.hpp"

namespace spectragen::metrics {

struct SprConfig {
    std::size_t k = 10;
    std::size_t sample_count = 100000;
    std::size_t group_count = 10;
    std::uint64_t seed = 0;
    std::size_t threads = 0;  // 0: hardware concurrency

    /// Throws DataError unless k > 0, group_count > 0 and sample_count / group_count > k.
    void validate() const;
};

/// Hit counts for one aligned group pair.
struct SprCounts {
    std::size_t precision_hits = 0;  // generated rows inside some real k-NN ball
    std::size_t generated = 0;
    std::size_t recall_hits = 0;  // real rows inside some generated k-NN ball
    std::size_t real = 0;

    double precision() const { return static_cast<double>(precision_hits) / static_cast<double>(generated); }
    double recall() const { return static_cast<double>(recall_hits) / static_cast<double>(real); }
};

struct SprResult {
    double precision = 0.0;
    double recall = 0.0;
    std::vector<SprCounts> groups;
};

/**
 * Squared distance from every row of `set` to its k-th nearest other row.
 * Neighbours are ordered by (distance, index); the row itself is excluded.
 */
std::vector<double> kth_neighbor_radii(const SpectralSet& set, std::size_t k, std::size_t threads = 1);

/// Number of `queries` rows within radius `radii[j]` of at least one `anchors` row j.
std::size_t count_covered(const SpectralSet& queries, const SpectralSet& anchors, const std::vector<double>& radii,
                          std::size_t threads = 1);

/// sPr and sRec counts on one pair of sets, no sampling.
SprCounts spr_srec_counts(const SpectralSet& real, const SpectralSet& generated, std::size_t k,
                          std::size_t threads = 1);

/**
 * Seeded sample of `sample_count` rows per side (the whole set when smaller),
 * split into aligned groups and averaged. The group count shrinks when a
 * side is too small to give every group more than k rows.
 */
SprResult spr_srec(const SpectralSet& real, const SpectralSet& generated, const SprConfig& config = {});

/// Row indices of each group, as used by spr_srec for a set of `rows` rows.
std::vector<std::vector<std::size_t>> spr_groups(std::size_t rows, std::size_t sample_count, std::size_t groups,
                                                 std::uint64_t seed);

/// Group count spr_srec uses for the given set sizes.
std::size_t effective_group_count(std::size_t real_rows, std::size_t generated_rows, const SprConfig& config);

}  // namespace spectragen::metrics
