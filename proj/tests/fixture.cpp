#include "fixture.hpp"

#include "advinn/run_config.hpp"

namespace fixture {

namespace {

Trained build() {
  const advinn::RunConfig defaults;
  advinn::Dataset data = advinn::make_shapes_dataset(defaults.data);
  advinn::ClassifierConfig cc;
  cc.height = cc.width = defaults.data.size;
  cc.num_classes = data.num_classes;
  advinn::Classifier model(cc, defaults.model_seed);
  const advinn::TrainReport report = advinn::train_classifier(model, data, defaults.train);
  return Trained{std::move(data), std::move(model), report};
}

}  // namespace

const Trained& trained() {
  static const Trained instance = build();
  return instance;
}

}  // namespace fixture
