#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "machstate/bundle.hpp"
#include "machstate/ingest.hpp"
#include "machstate/kernels.hpp"

namespace machstate {

/// Aligned, run-correlated and labeled data, ready to be split or trained on.
struct LabeledDataset {
  Manifest manifest;
  QualityConfig quality;
  std::vector<ProductionRun> runs;
  std::map<std::string, std::string> run_labels;
  std::vector<MachineSnapshot> snapshots;  // new settings derived
  TrainingWindow window;
};

struct PrepareOptions {
  AlignOptions align;
  std::optional<TrainingWindow> window;
};

LabeledDataset prepare_dataset(const RawDataset& raw, const QualityConfig& quality,
                               const PrepareOptions& options, IngestReport* report = nullptr);

std::string dataset_fingerprint(const TrainingSet& training);

/// Both trees, both scored state sets and the composites.
ModelBundle train_bundle(const TrainingSet& training, std::int64_t min_leaf_size,
                         Exec exec = Exec::parallel);

}  // namespace machstate
