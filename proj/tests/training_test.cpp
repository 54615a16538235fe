#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "rangevol/training.hpp"
#include "test_support.hpp"

using namespace rangevol;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Label sequence -> dataset, with dates nobody looks at downstream.
DirectionDataset dataset_from_labels(const std::vector<std::int8_t>& labels, int window_len,
                                     double train_frac = 0.7, double val_frac = 0.15) {
    DirectionSeries dir;
    dir.labels = labels;
    dir.dates.resize(labels.size());
    return make_dataset(dir, window_len, train_frac, val_frac);
}

std::vector<std::int8_t> alternating(std::size_t n) {
    std::vector<std::int8_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::int8_t>(i % 2);
    return labels;
}

}  // namespace

TEST_CASE("config validation") {
    TrainConfig config;
    CHECK_NOTHROW(config.validate());
    config.learning_rate = 0.0;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
    config = {};
    config.dropout_p = 1.0;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
    config = {};
    config.dropout_p = -0.1;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
    config = {};
    config.batch_size = 0;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
    config = {};
    config.max_epochs = 0;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
    config = {};
    config.patience = config.max_epochs + 1;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
    config = {};
    config.patience = 0;  // stop on the first non-improving epoch: legal
    CHECK_NOTHROW(config.validate());
}

TEST_CASE("cross entropy values and the logit form") {
    CHECK(bce_loss(0.5, 1) == doctest::Approx(0.6931471805599453).epsilon(1e-15));
    CHECK(bce_loss(0.5, 0) == doctest::Approx(0.6931471805599453).epsilon(1e-15));
    CHECK(bce_loss(0.9, 1) == doctest::Approx(0.10536051565782628).epsilon(1e-13));
    CHECK(bce_loss(0.9, 0) == doctest::Approx(-std::log(0.1)).epsilon(1e-13));

    // the clamp keeps certain-but-wrong predictions finite
    CHECK(std::isfinite(bce_loss(0.0, 1)));
    CHECK(std::isfinite(bce_loss(1.0, 0)));
    CHECK(bce_loss(0.0, 1) == doctest::Approx(-std::log(1e-15)).epsilon(1e-12));

    // Beyond |z| ~ 10 the direct form loses digits to cancellation in 1 - p,
    // which is the reason the logit form exists; compare where both are sharp.
    for (double z : {-10.0, -3.0, -0.2, 0.0, 0.7, 4.0, 10.0})
        for (int y : {0, 1})
            CHECK(bce_loss_from_logit(z, y) ==
                  doctest::Approx(bce_loss(sigmoid(z), y)).epsilon(1e-12));
    // at z = 30 the logit form is still exact while the direct form drifts
    CHECK(bce_loss_from_logit(30.0, 0) == doctest::Approx(30.0).epsilon(1e-13));
    CHECK(std::abs(bce_loss(sigmoid(30.0), 0) - 30.0) < 0.01);
    // far in the tails the logit form stays exact while sigmoid saturates
    CHECK(bce_loss_from_logit(-800.0, 1) == doctest::Approx(800.0).epsilon(1e-15));
    CHECK(bce_loss_from_logit(800.0, 0) == doctest::Approx(800.0).epsilon(1e-15));
}

TEST_CASE("one Adam step against hand arithmetic") {
    TrainConfig config;  // lr 0.001, betas 0.9/0.999, eps 1e-8
    Vec theta = Vec::Zero(2);
    Vec grad(2);
    grad << 1.0, -0.5;
    AdamState state(2);
    adam_update(theta, grad, state, config);

    // bias-corrected m_hat = g, v_hat = g^2 on the first step
    for (int i = 0; i < 2; ++i) {
        const double g = grad[i];
        const double expected = -config.learning_rate * g / (std::abs(g) + config.adam_eps);
        CHECK(theta[i] == doctest::Approx(expected).epsilon(1e-12));
    }
    CHECK(state.t == 1);

    // second step, fresh gradient, fully hand-rolled: after step one the raw
    // accumulators hold (1 - beta) * g, not the bias-corrected values
    Vec grad2(2);
    grad2 << 0.3, 0.2;
    Vec expected = theta;
    double m[2] = {0.9 * 0.1 + 0.1 * 0.3, 0.9 * -0.05 + 0.1 * 0.2};
    double v[2] = {0.999 * 0.001 + 0.001 * 0.09, 0.999 * 0.00025 + 0.001 * 0.04};
    const double c1 = 1.0 - std::pow(0.9, 2), c2 = 1.0 - std::pow(0.999, 2);
    for (int i = 0; i < 2; ++i)
        expected[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + 1e-8);
    adam_update(theta, grad2, state, config);
    CHECK(theta[0] == doctest::Approx(expected[0]).epsilon(1e-14));
    CHECK(theta[1] == doctest::Approx(expected[1]).epsilon(1e-14));

    // zero gradient moves (almost) nothing
    Vec still = Vec::Ones(1);
    AdamState fresh(1);
    adam_update(still, Vec::Zero(1), fresh, config);
    CHECK(still[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("Adam walks a 1-d quadratic downhill") {
    TrainConfig config;
    config.learning_rate = 0.05;
    Vec theta = Vec::Ones(1);
    AdamState state(1);
    for (int i = 0; i < 100; ++i) {
        Vec grad(1);
        grad << 2.0 * theta[0];
        adam_update(theta, grad, state, config);
    }
    CHECK(std::abs(theta[0]) < 0.2);
}

TEST_CASE("dropout masks: distribution, determinism, batch-size independence") {
    RnnModel model(CellKind::Lstm, 1, {8, 8});
    model.init_weights(1);

    std::mt19937_64 rng(1);
    const DropoutMasks none = sample_dropout_masks(model, 0.0, rng);
    for (const Vec& m : none.layer_out)
        for (int i = 0; i < m.size(); ++i) CHECK(m[i] == 1.0);

    const double p = 0.3, survivor = 1.0 / 0.7;
    double sum = 0.0;
    std::size_t count = 0;
    std::mt19937_64 rng2(2);
    for (int draw = 0; draw < 7000; ++draw) {  // 7000 * 16 > 1e5 entries
        const DropoutMasks masks = sample_dropout_masks(model, p, rng2);
        for (const Vec& m : masks.layer_out)
            for (int i = 0; i < m.size(); ++i) {
                CHECK((m[i] == 0.0 || m[i] == doctest::Approx(survivor).epsilon(1e-15)));
                sum += m[i];
                ++count;
            }
    }
    CHECK(sum / static_cast<double>(count) == doctest::Approx(1.0).epsilon(0.02));

    std::mt19937_64 a(3), b(3);
    const DropoutMasks ma = sample_dropout_masks(model, p, a);
    const DropoutMasks mb = sample_dropout_masks(model, p, b);
    for (std::size_t l = 0; l < ma.layer_out.size(); ++l)
        CHECK((ma.layer_out[l].array() == mb.layer_out[l].array()).all());

    // a window's mask stream must not depend on how many windows share the batch
    BatchMasks small, large;
    small.layer_out = {Mat(8, 2), Mat(8, 2)};
    large.layer_out = {Mat(8, 5), Mat(8, 5)};
    std::mt19937_64 c(4), d(4);
    sample_batch_masks(p, c, small);
    sample_batch_masks(p, d, large);
    for (std::size_t l = 0; l < 2; ++l)
        CHECK((small.layer_out[l].array() == large.layer_out[l].leftCols(2).array()).all());
}

TEST_CASE("constant labels are learned to high confidence") {
    const DirectionDataset data = dataset_from_labels(std::vector<std::int8_t>(220, 1), 5);
    RnnModel model(CellKind::Lstm, 1, {4});
    model.init_weights(7);
    TrainConfig config;
    config.learning_rate = 0.02;
    config.dropout_p = 0.0;  // deterministic descent for the monotonicity check
    config.max_epochs = 40;
    config.patience = 40;
    config.seed = 7;
    const TrainReport report = train(model, data, config);

    REQUIRE(report.epochs_run >= 5);
    for (int e = 1; e < 5; ++e)
        CHECK(report.train_loss[static_cast<std::size_t>(e)] <
              report.train_loss[static_cast<std::size_t>(e - 1)]);

    std::vector<std::size_t> all;
    for (auto part : {&data.train, &data.val, &data.test})
        all.insert(all.end(), part->begin(), part->end());
    for (double p : predict(model, data, all)) CHECK(p > 0.9);
}

TEST_CASE("a deterministic alternating sequence is fully predictable") {
    const DirectionDataset data = dataset_from_labels(alternating(400), 10);
    RnnModel model(CellKind::Lstm, 1, {10, 10});
    model.init_weights(3);
    TrainConfig config;  // reference settings, shorter epoch budget
    config.learning_rate = 0.005;
    config.max_epochs = 150;
    config.patience = 50;
    config.seed = 3;
    train(model, data, config);

    const std::vector<double> probs = predict(model, data, data.test);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.test.size(); ++i) {
        const int pred = probs[i] >= 0.5 ? 1 : 0;
        if (pred == data.target(data.test[i])) ++correct;
    }
    CHECK(correct == data.test.size());
}

TEST_CASE("loss curve bookkeeping and best-epoch restoration") {
    std::mt19937_64 rng(11);
    std::vector<std::int8_t> labels(260);
    for (auto& l : labels) l = static_cast<std::int8_t>(rng() % 2);
    const DirectionDataset data = dataset_from_labels(labels, 6);

    RnnModel model(CellKind::Lstm, 1, {5});
    model.init_weights(13);
    TrainConfig config;
    config.max_epochs = 30;
    config.patience = 8;
    config.seed = 13;
    const TrainReport report = train(model, data, config);

    REQUIRE(report.epochs_run >= 1);
    CHECK(report.epochs_run <= config.max_epochs);
    CHECK(report.train_loss.size() == static_cast<std::size_t>(report.epochs_run));
    CHECK(report.val_loss.size() == static_cast<std::size_t>(report.epochs_run));
    REQUIRE(report.best_epoch >= 1);
    REQUIRE(report.best_epoch <= report.epochs_run);

    const double best = *std::min_element(report.val_loss.begin(), report.val_loss.end());
    CHECK(report.val_loss[static_cast<std::size_t>(report.best_epoch - 1)] == best);
    // strict improvement: the best epoch is the FIRST at the minimum
    for (int e = 0; e < report.best_epoch - 1; ++e)
        CHECK(report.val_loss[static_cast<std::size_t>(e)] > best);
    if (report.epochs_run < config.max_epochs) CHECK(report.stopped_early);

    // the restored parameters reproduce the recorded best validation loss
    CHECK(mean_bce(model, data, data.val) == best);
}

TEST_CASE("patience zero stops at the first non-improving epoch") {
    std::mt19937_64 rng(17);
    std::vector<std::int8_t> labels(240);
    for (auto& l : labels) l = static_cast<std::int8_t>(rng() % 2);
    const DirectionDataset data = dataset_from_labels(labels, 6);

    RnnModel model(CellKind::Lstm, 1, {4});
    model.init_weights(19);
    TrainConfig config;
    config.max_epochs = 50;
    config.patience = 0;
    config.seed = 19;
    const TrainReport report = train(model, data, config);

    if (report.stopped_early) {
        // every epoch before the last strictly improved on the running best
        double best = std::numeric_limits<double>::infinity();
        for (int e = 0; e + 1 < report.epochs_run; ++e) {
            CHECK(report.val_loss[static_cast<std::size_t>(e)] < best);
            best = std::min(best, report.val_loss[static_cast<std::size_t>(e)]);
        }
        CHECK(report.val_loss[static_cast<std::size_t>(report.epochs_run - 1)] >= best);
    }
}

TEST_CASE("training is deterministic under a fixed seed") {
    const DirectionDataset data = dataset_from_labels(alternating(150), 5);
    TrainConfig config;
    config.max_epochs = 12;
    config.patience = 12;
    config.dropout_p = 0.3;  // exercises the mask stream too
    config.seed = 23;

    RnnModel a(CellKind::Lstm, 1, {6});
    RnnModel b(CellKind::Lstm, 1, {6});
    a.init_weights(29);
    b.init_weights(29);
    const TrainReport ra = train(a, data, config);
    const TrainReport rb = train(b, data, config);

    REQUIRE(ra.epochs_run == rb.epochs_run);
    for (int e = 0; e < ra.epochs_run; ++e) {
        CHECK(ra.train_loss[static_cast<std::size_t>(e)] ==
              rb.train_loss[static_cast<std::size_t>(e)]);
        CHECK(ra.val_loss[static_cast<std::size_t>(e)] == rb.val_loss[static_cast<std::size_t>(e)]);
    }
    CHECK((a.params().array() == b.params().array()).all());
}

TEST_CASE("vanilla cell trains through the same loop") {
    const DirectionDataset data = dataset_from_labels(alternating(200), 4);
    RnnModel model(CellKind::VanillaTanh, 1, {6});
    model.init_weights(31);
    TrainConfig config;
    config.learning_rate = 0.01;
    config.max_epochs = 60;
    config.patience = 60;
    config.seed = 31;
    train(model, data, config);
    const std::vector<double> probs = predict(model, data, data.test);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.test.size(); ++i)
        if ((probs[i] >= 0.5 ? 1 : 0) == data.target(data.test[i])) ++correct;
    CHECK(static_cast<double>(correct) / static_cast<double>(data.test.size()) > 0.9);
}

TEST_CASE("non-finite parameters abort with a clear error") {
    const DirectionDataset data = dataset_from_labels(alternating(120), 4);
    RnnModel model(CellKind::Lstm, 1, {3});
    model.init_weights(37);
    model.params()[0] = std::numeric_limits<double>::quiet_NaN();
    TrainConfig config;
    config.max_epochs = 3;
    config.patience = 3;
    CHECK_THROWS_AS(train(model, data, config), std::runtime_error);
}

TEST_CASE("loss curve CSV is written with full precision") {
    rangevol::testsupport::TempDir tmp;
    TrainReport report;
    report.epochs_run = 2;
    report.best_epoch = 2;
    report.train_loss = {0.69314718055994531, 0.5};
    report.val_loss = {0.7, 0.6123456789012345678};
    const auto file = tmp.path / "curve.csv";
    write_loss_curve_csv(file, report);

    std::ifstream in(file);
    std::string line;
    std::getline(in, line);
    CHECK(line == "epoch,train_loss,val_loss");
    std::getline(in, line);
    REQUIRE(line.find("1,") == 0);
    // the written digits must round-trip to the exact stored double
    const std::size_t comma = line.find(',', 2);
    REQUIRE(comma != std::string::npos);
    CHECK(std::stod(line.substr(2, comma - 2)) == report.train_loss[0]);
    CHECK(std::stod(line.substr(comma + 1)) == report.val_loss[0]);
    std::getline(in, line);
    CHECK(line.find("2,") == 0);
}
