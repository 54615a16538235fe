#pragma once

#include <cstdint>
#include <vector>

#include "rangevol/estimators.hpp"

namespace rangevol {

// Binary direction-of-change sequence: labels[i] = 1 iff sigma[i+1] > sigma[i]
// (ties and decreases are 0), dated at the day the change materialized.
struct DirectionSeries {
    std::vector<Date> dates;
    std::vector<std::int8_t> labels;

    std::size_t size() const { return labels.size(); }
};

DirectionSeries directions(const VolSeries& vol);

// Chronological windowed dataset over a label sequence. A window starting at
// index s has inputs labels[s .. s+window_len-1] and target labels[s+window_len].
// Partitions hold window start indices: train, then validation (tail of the
// training share), then test, in time order with no overlap of target regions.
struct DirectionDataset {
    int window_len = 0;
    std::vector<std::int8_t> labels;
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;

    std::size_t n_windows() const { return train.size() + val.size() + test.size(); }
    std::int8_t target(std::size_t start) const {
        return labels[start + static_cast<std::size_t>(window_len)];
    }
};

// Splits floor(train_frac * n_targets) targets into train+validation (the
// final floor(val_frac_of_train * that) become validation); the rest is test.
// Throws std::invalid_argument if any partition comes out empty.
DirectionDataset make_dataset(const DirectionSeries& dir, int window_len,
                              double train_frac, double val_frac_of_train);

}  // namespace rangevol
