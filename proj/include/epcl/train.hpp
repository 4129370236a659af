#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "epcl/heads.hpp"
#include "epcl/model.hpp"
#include "epcl/optimizer.hpp"
#include "epcl/rng.hpp"
#include "epcl/weights.hpp"

// Training/evaluation loops and the few-shot episode protocols. Everything is
// single-threaded and driven by explicit Rng state, so a fixed seed fixes the
// whole metric sequence. A NaN loss aborts with NumericError diagnostics
// rather than training through garbage.

namespace epcl {

struct Dataset {
  std::vector<PointCloud> clouds;
  std::vector<std::size_t> labels;  // per-cloud class; segmentation labels live per point
  std::vector<std::string> class_names;
  std::size_t classes() const { return class_names.size(); }
  std::size_t size() const { return clouds.size(); }
};

struct TrainOptions {
  std::size_t epochs = 0;
  std::size_t batch_size = 32;
  AdamWConfig opt;
  float lambda = 0.0f;        // contrastive weight; needs a text bank when > 0
  float temperature = 0.07f;
  std::uint64_t seed = 1;
  bool cosine_lr = false;     // optional per-epoch cosine decay of opt.lr
};

struct MetricRecord {
  std::size_t epoch;
  std::string split;
  std::string metric;
  double value;
};

struct TrainReport {
  std::vector<MetricRecord> records;
  std::vector<std::string> backbone_hashes;  // snapshot per recorded epoch, [0] = initial
  std::vector<double> epoch_seconds;         // wall time per trained epoch

  double last(const std::string& split, const std::string& metric) const;
};

// Line format `epoch,split,metric,value`, header included. Wall times are
// deliberately not serialized: artifact files must be byte-identical across
// runs with the same seed.
void write_report_csv(const TrainReport& r, const std::string& path);

// --- metrics ---------------------------------------------------------------

double overall_accuracy(const std::vector<std::size_t>& pred,
                        const std::vector<std::size_t>& truth);

// Mean of per-class accuracies over classes that appear in the truth.
double mean_class_accuracy(const std::vector<std::size_t>& pred,
                           const std::vector<std::size_t>& truth, std::size_t classes);

// Per instance: IoU averaged over classes present in its prediction or truth;
// then the instance values are averaged. One pred/truth pair per instance.
double instance_miou(const std::vector<std::vector<std::size_t>>& pred,
                     const std::vector<std::vector<std::size_t>>& truth,
                     std::size_t classes);

// --- classification --------------------------------------------------------

double evaluate_classification(const ClassificationModel& m, const Dataset& data);

// Epochs of shuffled minibatches; cross-entropy plus the optional contrastive
// term. Pass bank = nullptr to train without the text branch (lambda must be
// 0 then). Records initial test metrics as epoch 0.
TrainReport train_classifier(WeightContainer& c, ClassificationModel& model,
                             const Dataset& train_set, const Dataset& test_set,
                             const TrainOptions& options, const TextFeatureBank* bank);

// --- segmentation ----------------------------------------------------------

struct SegMetrics {
  double point_accuracy = 0.0;
  double mean_class_accuracy = 0.0;
  double instance_miou = 0.0;
};

SegMetrics evaluate_segmentation(const SegmentationModel& m, const Dataset& data,
                                 std::size_t classes);

TrainReport train_segmenter(WeightContainer& c, SegmentationModel& model,
                            const Dataset& train_set, const Dataset& test_set,
                            std::size_t classes, const TrainOptions& options);

// --- few-shot protocol -----------------------------------------------------

struct FewShotEpisode {
  std::size_t way = 0;
  std::size_t shot = 0;
  std::vector<std::size_t> selected_classes;  // original ids, selection order
  std::vector<std::size_t> train_indices;     // way*shot entries into the train split
  std::vector<std::size_t> test_indices;      // 20*way entries into the test split
  std::uint64_t seed = 0;
};

// K-way N-shot: uniformly pick `way` classes, then `shot` train samples and 20
// test samples per class, all seeded. Short classes raise invalid_argument
// naming the class.
FewShotEpisode sample_kway_nshot(const std::vector<std::size_t>& train_labels,
                                 const std::vector<std::size_t>& test_labels,
                                 std::size_t classes, std::size_t way, std::size_t shot,
                                 std::uint64_t seed);

// 16 train samples from every class; the full test split is retained.
FewShotEpisode sample_16shot(const std::vector<std::size_t>& train_labels,
                             const std::vector<std::size_t>& test_labels,
                             std::size_t classes, std::uint64_t seed);

// Materialize episode datasets with labels remapped to 0..way-1.
std::pair<Dataset, Dataset> make_episode_datasets(const Dataset& train_set,
                                                  const Dataset& test_set,
                                                  const FewShotEpisode& episode);

}  // namespace epcl
