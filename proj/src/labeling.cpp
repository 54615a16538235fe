#include "rangevol/labeling.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rangevol {

DirectionSeries directions(const VolSeries& vol) {
    if (vol.size() < 2) throw std::invalid_argument("directions: need >= 2 volatility points");
    DirectionSeries out;
    out.dates.reserve(vol.size() - 1);
    out.labels.reserve(vol.size() - 1);
    for (std::size_t i = 0; i + 1 < vol.size(); ++i) {
        out.dates.push_back(vol.dates[i + 1]);
        out.labels.push_back(vol.sigma[i + 1] > vol.sigma[i] ? 1 : 0);
    }
    return out;
}

DirectionDataset make_dataset(const DirectionSeries& dir, int window_len,
                              double train_frac, double val_frac_of_train) {
    if (window_len < 1) throw std::invalid_argument("make_dataset: window_len must be >= 1");
    if (!(train_frac > 0.0 && train_frac < 1.0))
        throw std::invalid_argument("make_dataset: train_frac must be in (0,1)");
    if (!(val_frac_of_train >= 0.0 && val_frac_of_train < 1.0))
        throw std::invalid_argument("make_dataset: val_frac_of_train must be in [0,1)");

    const std::size_t w = static_cast<std::size_t>(window_len);
    if (dir.size() < w + 1)
        throw std::invalid_argument("make_dataset: not enough labels for one window");
    const std::size_t n_targets = dir.size() - w;

    const auto n_train_total =
        static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(n_targets)));
    const auto n_val =
        static_cast<std::size_t>(std::floor(val_frac_of_train * static_cast<double>(n_train_total)));
    const std::size_t n_train = n_train_total - n_val;
    const std::size_t n_test = n_targets - n_train_total;
    if (n_train == 0 || n_test == 0 || (val_frac_of_train > 0.0 && n_val == 0))
        throw std::invalid_argument("make_dataset: a partition came out empty");

    DirectionDataset ds;
    ds.window_len = window_len;
    ds.labels = dir.labels;
    ds.train.resize(n_train);
    ds.val.resize(n_val);
    ds.test.resize(n_test);
    std::iota(ds.train.begin(), ds.train.end(), std::size_t{0});
    std::iota(ds.val.begin(), ds.val.end(), n_train);
    std::iota(ds.test.begin(), ds.test.end(), n_train_total);
    return ds;
}

}  // namespace rangevol
