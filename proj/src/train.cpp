#include "epcl/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "epcl/errors.hpp"
#include "epcl/ops.hpp"

namespace epcl {

namespace o = ops;

namespace {

constexpr std::size_t kTestPerClass = 20;  // few-shot evaluation pool per class

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  return idx;
}

// First trainable tensor holding a non-finite value, for NaN diagnostics.
std::string find_nonfinite_tensor(const WeightContainer& c) {
  for (const auto& name : c.names()) {
    if (c.is_frozen(name)) continue;
    for (float v : c.get(name).data())
      if (!std::isfinite(v)) return name;
  }
  return "(no parameter is non-finite; the loss graph itself overflowed)";
}

void abort_on_nonfinite(float loss, const WeightContainer& c, std::size_t epoch,
                        std::size_t step, float lr) {
  if (std::isfinite(loss)) return;
  throw NumericError("training aborted: loss is non-finite at epoch " +
                     std::to_string(epoch) + ", step " + std::to_string(step) +
                     ", lr " + std::to_string(lr) + "; first suspect tensor: " +
                     find_nonfinite_tensor(c));
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

float epoch_lr(const TrainOptions& options, std::size_t epoch) {
  if (!options.cosine_lr || options.epochs <= 1) return options.opt.lr;
  double progress = double(epoch - 1) / double(options.epochs);
  return static_cast<float>(options.opt.lr * 0.5 * (1.0 + std::cos(progress * M_PI)));
}

void record(TrainReport& r, std::size_t epoch, const std::string& split,
            const std::string& metric, double value) {
  r.records.push_back({epoch, split, metric, value});
}

}  // namespace

double TrainReport::last(const std::string& split, const std::string& metric) const {
  for (auto it = records.rbegin(); it != records.rend(); ++it)
    if (it->split == split && it->metric == metric) return it->value;
  throw std::out_of_range("no record for " + split + "/" + metric);
}

void write_report_csv(const TrainReport& r, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  f << "epoch,split,metric,value\n";
  f << std::setprecision(10);
  for (const auto& rec : r.records)
    f << rec.epoch << ',' << rec.split << ',' << rec.metric << ',' << rec.value << '\n';
  if (!f) throw DataError("write to '" + path + "' failed");
}

double overall_accuracy(const std::vector<std::size_t>& pred,
                        const std::vector<std::size_t>& truth) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("prediction/truth length mismatch");
  if (pred.empty()) throw std::invalid_argument("evaluation split is empty");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
  return double(hits) / double(pred.size());
}

double mean_class_accuracy(const std::vector<std::size_t>& pred,
                           const std::vector<std::size_t>& truth, std::size_t classes) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("prediction/truth length mismatch");
  if (pred.empty()) throw std::invalid_argument("evaluation split is empty");
  std::vector<std::size_t> hits(classes, 0), totals(classes, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++totals[truth[i]];
    if (pred[i] == truth[i]) ++hits[truth[i]];
  }
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < classes; ++k) {
    if (totals[k] == 0) continue;
    sum += double(hits[k]) / double(totals[k]);
    ++present;
  }
  return present ? sum / double(present) : 0.0;
}

double instance_miou(const std::vector<std::vector<std::size_t>>& pred,
                     const std::vector<std::vector<std::size_t>>& truth,
                     std::size_t classes) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("prediction/truth instance count mismatch");
  if (pred.empty()) throw std::invalid_argument("evaluation split is empty");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != truth[i].size())
      throw std::invalid_argument("instance " + std::to_string(i) + " length mismatch");
    std::vector<std::size_t> inter(classes, 0), uni(classes, 0);
    for (std::size_t p = 0; p < pred[i].size(); ++p) {
      std::size_t a = pred[i][p], b = truth[i][p];
      if (a == b) {
        ++inter[a];
        ++uni[a];
      } else {
        ++uni[a];
        ++uni[b];
      }
    }
    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t k = 0; k < classes; ++k) {
      if (uni[k] == 0) continue;
      sum += double(inter[k]) / double(uni[k]);
      ++present;
    }
    total += present ? sum / double(present) : 1.0;
  }
  return total / double(pred.size());
}

double evaluate_classification(const ClassificationModel& m, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("evaluation split is empty");
  NoGradGuard off;
  Rng unused(0);
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  TensorF cls = batch_cls_features(m, data.clouds, all, unused, false);
  std::vector<std::size_t> pred = o::argmax_rows(head_logits(m.head, cls, unused, false));
  return overall_accuracy(pred, data.labels);
}

TrainReport train_classifier(WeightContainer& c, ClassificationModel& model,
                             const Dataset& train_set, const Dataset& test_set,
                             const TrainOptions& options, const TextFeatureBank* bank) {
  if (options.lambda > 0.0f && bank == nullptr)
    throw ConfigError("contrastive weight " + std::to_string(options.lambda) +
                      " > 0 but no text feature bank is loaded");
  if (train_set.size() == 0) throw std::invalid_argument("training split is empty");

  AdamW optimizer(c, options.opt);
  Rng rng(options.seed);
  TrainReport report;

  record(report, 0, "test", "accuracy", evaluate_classification(model, test_set));
  report.backbone_hashes.push_back(combined_backbone_hash(c));

  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    auto epoch_start = std::chrono::steady_clock::now();
    optimizer.set_lr(epoch_lr(options, epoch));
    std::vector<std::size_t> order = shuffled_indices(train_set.size(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;

    for (std::size_t b0 = 0; b0 < order.size(); b0 += options.batch_size) {
      std::size_t b1 = std::min(order.size(), b0 + options.batch_size);
      std::vector<std::size_t> batch(order.begin() + b0, order.begin() + b1);
      std::vector<std::size_t> batch_labels(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i)
        batch_labels[i] = train_set.labels[batch[i]];

      TensorF cls = batch_cls_features(model, train_set.clouds, batch, rng, true);
      TensorF logits = head_logits(model.head, cls, rng, true);
      TensorF contrastive;
      if (bank && options.lambda > 0.0f)
        contrastive = contrastive_loss(head_projections(model.head, cls), batch_labels,
                                       *bank, options.temperature);
      TensorF loss =
          total_classification_loss(logits, batch_labels, contrastive, options.lambda);

      abort_on_nonfinite(loss.item(), c, epoch, optimizer.steps_taken() + 1,
                         optimizer.lr());
      optimizer.zero_grads();
      loss.backward();
      optimizer.step();
      loss_sum += loss.item();
      ++batches;
    }

    record(report, epoch, "train", "loss", loss_sum / double(batches));
    record(report, epoch, "test", "accuracy", evaluate_classification(model, test_set));
    report.backbone_hashes.push_back(combined_backbone_hash(c));
    report.epoch_seconds.push_back(seconds_since(epoch_start));
  }
  return report;
}

SegMetrics evaluate_segmentation(const SegmentationModel& m, const Dataset& data,
                                 std::size_t classes) {
  if (data.size() == 0) throw std::invalid_argument("evaluation split is empty");
  NoGradGuard off;
  Rng unused(0);
  std::vector<std::vector<std::size_t>> pred(data.size()), truth(data.size());
  std::vector<std::size_t> flat_pred, flat_truth;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const PointCloud& cloud = data.clouds[i];
    TensorF logits = segment(m.head, m.backbone, cloud, unused, false);
    pred[i] = o::argmax_rows(logits);
    truth[i].assign(cloud.labels.begin(), cloud.labels.end());
    flat_pred.insert(flat_pred.end(), pred[i].begin(), pred[i].end());
    flat_truth.insert(flat_truth.end(), truth[i].begin(), truth[i].end());
  }
  SegMetrics out;
  out.point_accuracy = overall_accuracy(flat_pred, flat_truth);
  out.mean_class_accuracy = mean_class_accuracy(flat_pred, flat_truth, classes);
  out.instance_miou = instance_miou(pred, truth, classes);
  return out;
}

TrainReport train_segmenter(WeightContainer& c, SegmentationModel& model,
                            const Dataset& train_set, const Dataset& test_set,
                            std::size_t classes, const TrainOptions& options) {
  if (train_set.size() == 0) throw std::invalid_argument("training split is empty");

  AdamW optimizer(c, options.opt);
  Rng rng(options.seed);
  TrainReport report;

  SegMetrics initial = evaluate_segmentation(model, test_set, classes);
  record(report, 0, "test", "point_accuracy", initial.point_accuracy);
  record(report, 0, "test", "mean_class_accuracy", initial.mean_class_accuracy);
  record(report, 0, "test", "instance_miou", initial.instance_miou);
  report.backbone_hashes.push_back(combined_backbone_hash(c));

  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    auto epoch_start = std::chrono::steady_clock::now();
    optimizer.set_lr(epoch_lr(options, epoch));
    std::vector<std::size_t> order = shuffled_indices(train_set.size(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;

    for (std::size_t b0 = 0; b0 < order.size(); b0 += options.batch_size) {
      std::size_t b1 = std::min(order.size(), b0 + options.batch_size);
      TensorF loss;
      for (std::size_t i = b0; i < b1; ++i) {
        const PointCloud& cloud = train_set.clouds[order[i]];
        std::vector<std::size_t> point_labels(cloud.labels.begin(), cloud.labels.end());
        TensorF logits = segment(model.head, model.backbone, cloud, rng, true);
        TensorF ce = o::cross_entropy(logits, point_labels);
        loss = loss.defined() ? o::add(loss, ce) : ce;
      }
      loss = o::scale(loss, 1.0f / float(b1 - b0));

      abort_on_nonfinite(loss.item(), c, epoch, optimizer.steps_taken() + 1,
                         optimizer.lr());
      optimizer.zero_grads();
      loss.backward();
      optimizer.step();
      loss_sum += loss.item();
      ++batches;
    }

    SegMetrics m2 = evaluate_segmentation(model, test_set, classes);
    record(report, epoch, "train", "loss", loss_sum / double(batches));
    record(report, epoch, "test", "point_accuracy", m2.point_accuracy);
    record(report, epoch, "test", "mean_class_accuracy", m2.mean_class_accuracy);
    record(report, epoch, "test", "instance_miou", m2.instance_miou);
    report.backbone_hashes.push_back(combined_backbone_hash(c));
    report.epoch_seconds.push_back(seconds_since(epoch_start));
  }
  return report;
}

namespace {

std::vector<std::vector<std::size_t>> pools_by_class(const std::vector<std::size_t>& labels,
                                                     std::size_t classes) {
  std::vector<std::vector<std::size_t>> pools(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes)
      throw std::out_of_range("label " + std::to_string(labels[i]) + " out of range");
    pools[labels[i]].push_back(i);
  }
  return pools;
}

std::vector<std::size_t> draw(std::vector<std::size_t> pool, std::size_t n, Rng& rng) {
  rng.shuffle(pool);
  pool.resize(n);
  return pool;
}

}  // namespace

FewShotEpisode sample_kway_nshot(const std::vector<std::size_t>& train_labels,
                                 const std::vector<std::size_t>& test_labels,
                                 std::size_t classes, std::size_t way, std::size_t shot,
                                 std::uint64_t seed) {
  if (way == 0 || shot == 0) throw std::invalid_argument("way and shot must be >= 1");
  if (way > classes)
    throw std::invalid_argument("cannot sample " + std::to_string(way) + " ways from " +
                                std::to_string(classes) + " classes");
  Rng rng(seed);
  auto train_pools = pools_by_class(train_labels, classes);
  auto test_pools = pools_by_class(test_labels, classes);

  std::vector<std::size_t> class_order(classes);
  std::iota(class_order.begin(), class_order.end(), 0);
  rng.shuffle(class_order);

  FewShotEpisode ep;
  ep.way = way;
  ep.shot = shot;
  ep.seed = seed;
  for (std::size_t i = 0; i < way; ++i) {
    std::size_t cls = class_order[i];
    if (train_pools[cls].size() < shot)
      throw std::invalid_argument("class " + std::to_string(cls) + " has only " +
                                  std::to_string(train_pools[cls].size()) +
                                  " training samples, need " + std::to_string(shot));
    if (test_pools[cls].size() < kTestPerClass)
      throw std::invalid_argument("class " + std::to_string(cls) + " has only " +
                                  std::to_string(test_pools[cls].size()) +
                                  " test samples, need " + std::to_string(kTestPerClass));
    ep.selected_classes.push_back(cls);
    for (std::size_t idx : draw(train_pools[cls], shot, rng)) ep.train_indices.push_back(idx);
    for (std::size_t idx : draw(test_pools[cls], kTestPerClass, rng))
      ep.test_indices.push_back(idx);
  }
  return ep;
}

FewShotEpisode sample_16shot(const std::vector<std::size_t>& train_labels,
                             const std::vector<std::size_t>& test_labels,
                             std::size_t classes, std::uint64_t seed) {
  constexpr std::size_t kShot = 16;
  Rng rng(seed);
  auto train_pools = pools_by_class(train_labels, classes);

  FewShotEpisode ep;
  ep.way = classes;
  ep.shot = kShot;
  ep.seed = seed;
  for (std::size_t cls = 0; cls < classes; ++cls) {
    if (train_pools[cls].size() < kShot)
      throw std::invalid_argument("class " + std::to_string(cls) + " has only " +
                                  std::to_string(train_pools[cls].size()) +
                                  " training samples, need " + std::to_string(kShot));
    ep.selected_classes.push_back(cls);
    for (std::size_t idx : draw(train_pools[cls], kShot, rng)) ep.train_indices.push_back(idx);
  }
  ep.test_indices.resize(test_labels.size());
  std::iota(ep.test_indices.begin(), ep.test_indices.end(), 0);
  return ep;
}

std::pair<Dataset, Dataset> make_episode_datasets(const Dataset& train_set,
                                                  const Dataset& test_set,
                                                  const FewShotEpisode& episode) {
  std::size_t id_bound = train_set.classes();
  for (std::size_t cls : episode.selected_classes) id_bound = std::max(id_bound, cls + 1);
  std::vector<std::size_t> remap(id_bound, SIZE_MAX);
  Dataset tr, te;
  for (std::size_t i = 0; i < episode.selected_classes.size(); ++i) {
    std::size_t cls = episode.selected_classes[i];
    remap[cls] = i;
    tr.class_names.push_back(cls < train_set.class_names.size()
                                 ? train_set.class_names[cls]
                                 : "class_" + std::to_string(cls));
  }
  te.class_names = tr.class_names;
  for (std::size_t idx : episode.train_indices) {
    tr.clouds.push_back(train_set.clouds[idx]);
    tr.labels.push_back(remap[train_set.labels[idx]]);
  }
  for (std::size_t idx : episode.test_indices) {
    te.clouds.push_back(test_set.clouds[idx]);
    te.labels.push_back(remap[test_set.labels[idx]]);
  }
  return {std::move(tr), std::move(te)};
}

}  // namespace epcl
