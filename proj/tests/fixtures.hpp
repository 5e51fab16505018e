#pragma once

// Shared, lazily built test fixtures. Training even a tiny net costs seconds,
// so suites that only need "some reasonably trained classifier" share one.

#include "npt/dataset.hpp"
#include "npt/model.hpp"
#include "npt/schedules.hpp"

namespace npt::testing {

struct TrainedFixture {
    DatasetSplits data;
    ConvNetSpec spec;
    ParamList params;  // standard-trained
    double clean_val_accuracy = 0.0;
    double clean_test_accuracy = 0.0;
};

inline const TrainedFixture& trained_fixture() {
    static const TrainedFixture fx = [] {
        TrainedFixture f;
        f.data = synthetic_splits({900, 450, 450}, 404);
        f.spec.in_channels = f.data.train.channels();
        f.spec.in_height = f.data.train.height();
        f.spec.in_width = f.data.train.width();
        f.spec.num_classes = f.data.train.num_classes;
        SmallConvNet net(f.spec);
        TrainSchedule s;
        s.n1 = 8;
        s.seed = 404;
        s.sgd.learning_rate = 0.02;  // the default 0.05 is unstable at 900 images
        const TrainResult r = train(net, f.data.train, f.data.val, s);
        f.params = r.params;
        f.clean_val_accuracy = r.log.back().val_accuracy;
        f.clean_test_accuracy =
            accuracy(net, f.params, f.data.test.images, f.data.test.labels, 100);
        return f;
    }();
    return fx;
}

}  // namespace npt::testing
