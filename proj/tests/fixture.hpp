#pragma once

#include "advinn/classifier.hpp"
#include "advinn/dataset.hpp"

namespace fixture {

struct Trained {
  advinn::Dataset data;
  advinn::Classifier model;
  advinn::TrainReport report;
};

// Default dataset and classifier, trained once per process.
const Trained& trained();

}  // namespace fixture
