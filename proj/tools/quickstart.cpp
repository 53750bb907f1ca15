// Library walkthrough: synthesize a corpus, diagnose two amplitude choices,
// train the tuned one and report held-out accuracy.

#include <cstdio>

#include "ignet/ignet.hpp"

int main()
{
    using namespace ignet;
    const std::vector<Sample> originals = synth_dataset(3, 20, 24, 32, 42);
    AugmentConfig aug;
    aug.multiplier = 4;
    const PreparedData data = prepare_data(originals, Task::Classify, EncoderSpec{{FactorGroup::AgeCategory}}, aug,
                                           0.2, 42);

    const std::vector<Example> probe(data.learn_test.examples.begin(), data.learn_test.examples.begin() + 16);
    Network net = build_network(shallow_preset(data.categories.size(), true, 2, 5), Loss::CrossEntropy, {1, 24, 32});
    for (double w2 : {0.5, 10.0}) {
        const InitAmplitudes amps{{{5.0, 0.0}, {w2, 0.0}}};
        Rng rng = derive_rng(42, {1});
        init_weights(net, amps, rng);
        std::printf("W2 = %g\n%s\n", w2, render_report(diagnose(net, amps, probe)).c_str());
    }

    CvConfig cv;
    cv.folds = 4;
    cv.repeats_per_fold = 3;
    OptimizerConfig opt;
    opt.learning_rate = 0.01;
    WorkerPool pool(2);
    const TrainResult result = train(net, data.learn_test, data.validation, cv, opt, Task::Classify, 42, &pool);
    const HistoryRow& last = result.history.rows.back();
    std::printf("%zu epochs, test accuracy %.1f%%, validation accuracy %.1f%%\n", result.history.epochs_run(),
                last.test.accuracy, last.validation.accuracy);
}
