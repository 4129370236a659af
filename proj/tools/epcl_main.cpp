// Command-line surface for the whole pipeline: dataset generation, training
// with a frozen or finetuned backbone, evaluation, few-shot episodes,
// cross-modal alignment, embedding export, and checkpoint inspection.
//
// Every job is single-threaded and fully seeded: identical seed and config
// produce byte-identical output directories. Exit codes: 0 success, 2 config
// or usage error, 3 data error, 4 numerical abort.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "epcl/analysis.hpp"
#include "epcl/dataio.hpp"
#include "epcl/errors.hpp"
#include "epcl/model.hpp"
#include "epcl/synthetic.hpp"
#include "epcl/train.hpp"
#include "epcl/weights.hpp"

namespace fs = std::filesystem;
using namespace epcl;

namespace {

// --- shared flag bundles ----------------------------------------------------

struct ModelFlags {
  std::size_t width = 128;
  std::size_t layers = 4;
  std::size_t heads = 4;
  float mlp_ratio = 4.0f;
  float input_dropout = 0.3f;
  std::size_t patches = 64;
  std::size_t neighbors = 0;  // 0 = task default (32 classify, 16 segment)
  std::size_t task_tokens = 1;
  std::size_t text_width = 0;
  std::string weights;  // load instead of random init when set
};

struct JobFlags {
  std::string data;
  std::string out;
  std::string task = "classify";
  std::uint64_t seed = 0;
};

struct TrainFlags {
  std::size_t epochs = 0;
  std::size_t batch_size = 32;
  float lr = 3e-4f;
  float weight_decay = 0.04f;
  bool cosine_lr = false;
  float lambda = 0.0f;
  float temperature = 0.07f;
  std::string text_bank;
  std::string freeze = "frozen-backbone";
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--width", f.width, "Token width of the backbone")
      ->capture_default_str();
  cmd->add_option("--layers", f.layers, "Transformer depth")->capture_default_str();
  cmd->add_option("--heads", f.heads, "Attention heads per block")
      ->capture_default_str();
  cmd->add_option("--mlp-ratio", f.mlp_ratio, "Feed-forward expansion factor")
      ->capture_default_str();
  cmd->add_option("--input-dropout", f.input_dropout,
                  "Dropout on the token sequence during training")
      ->capture_default_str();
  cmd->add_option("--patches", f.patches, "Point patches per cloud")
      ->capture_default_str();
  cmd->add_option("--neighbors", f.neighbors,
                  "Points per patch (0 = task default: 32 classify, 16 segment)")
      ->capture_default_str();
  cmd->add_option("--task-tokens", f.task_tokens, "Task token count")
      ->capture_default_str();
  cmd->add_option("--text-width", f.text_width,
                  "Projection width of the text-alignment branch (0 = off)")
      ->capture_default_str();
  cmd->add_option("--weights", f.weights, "Checkpoint to start from instead of random init");
}

void add_job_flags(CLI::App* cmd, JobFlags& f, bool need_out) {
  cmd->add_option("--data", f.data, "Dataset manifest file")->required();
  auto* out = cmd->add_option("--out", f.out, "Output directory");
  if (need_out) out->required();
  cmd->add_option("--task", f.task, "Job task")
      ->check(CLI::IsMember({"classify", "segment"}))
      ->capture_default_str();
  cmd->add_option("--seed", f.seed, "Random seed (mandatory for reproducibility)")
      ->required();
}

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--epochs", f.epochs, "Training epochs (0 = init/evaluate only)")
      ->capture_default_str();
  cmd->add_option("--batch-size", f.batch_size, "Minibatch size")->capture_default_str();
  cmd->add_option("--lr", f.lr, "Learning rate")->capture_default_str();
  cmd->add_option("--weight-decay", f.weight_decay, "Decoupled weight decay")
      ->capture_default_str();
  cmd->add_flag("--cosine-lr", f.cosine_lr, "Cosine-decay the learning rate per epoch");
  cmd->add_option("--lambda", f.lambda, "Weight of the text-alignment loss term")
      ->capture_default_str();
  cmd->add_option("--temperature", f.temperature, "Similarity temperature")
      ->capture_default_str();
  cmd->add_option("--text-bank", f.text_bank, "Text feature bank file");
  cmd->add_option("--freeze", f.freeze, "Freeze policy")
      ->check(CLI::IsMember({"frozen-backbone", "full-finetune", "all-frozen"}))
      ->capture_default_str();
}

std::size_t neighbors_or_default(const ModelFlags& f, const std::string& task) {
  if (f.neighbors != 0) return f.neighbors;
  return task == "segment" ? 16 : 32;
}

// --- container assembly -----------------------------------------------------

WeightContainer make_container(const ModelFlags& mf, const JobFlags& jf,
                               std::size_t classes, const std::string& freeze) {
  WeightContainer c;
  if (!mf.weights.empty()) {
    c = load_weights(mf.weights);
  } else {
    TransformerConfig bb;
    bb.width = mf.width;
    bb.layers = mf.layers;
    bb.heads = mf.heads;
    bb.mlp_ratio = mf.mlp_ratio;
    Rng rng(jf.seed);
    if (jf.task == "segment") {
      SegModelConfig cfg;
      cfg.classes = classes;
      cfg.neighbors = neighbors_or_default(mf, jf.task);
      cfg.task_tokens = mf.task_tokens;
      cfg.backbone = bb;
      c = init_segmentation_container(rng, cfg);
    } else {
      ClassModelConfig cfg;
      cfg.classes = classes;
      cfg.patches = mf.patches;
      cfg.neighbors = neighbors_or_default(mf, jf.task);
      cfg.task_tokens = mf.task_tokens;
      cfg.text_width = mf.text_width;
      cfg.backbone = bb;
      c = init_classification_container(rng, cfg);
    }
  }
  freeze_partition(c, parse_freeze_policy(freeze));
  return c;
}

void check_head_classes(std::size_t model_classes, std::size_t data_classes) {
  if (model_classes != data_classes)
    throw ConfigError("checkpoint head has " + std::to_string(model_classes) +
                      " classes but the dataset declares " +
                      std::to_string(data_classes));
}

// --- artifact writers ---------------------------------------------------------

void write_metrics_file(const std::vector<std::pair<std::string, double>>& metrics,
                        const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  f << "metric,value\n" << std::setprecision(10);
  for (const auto& [name, value] : metrics) f << name << ',' << value << '\n';
}

void print_metrics(const std::vector<std::pair<std::string, double>>& metrics) {
  std::cout << std::setprecision(6);
  for (const auto& [name, value] : metrics) std::cout << name << ' ' << value << '\n';
}

// --- subcommand bodies --------------------------------------------------------

struct GenFlags {
  std::size_t classes = 4;
  std::size_t per_class = 100;
  std::size_t points = 512;
  float train_fraction = 0.8f;
  std::size_t text_width = 0;
  std::string task = "classify";
  std::string out;
  std::uint64_t seed = 0;
};

void run_gen_synthetic(const GenFlags& f) {
  SyntheticData data;
  if (f.task == "segment") {
    data = gen_plane_segmentation(f.per_class, f.points, f.train_fraction, f.seed);
  } else {
    SyntheticSpec spec;
    spec.classes = f.classes;
    spec.per_class = f.per_class;
    spec.points = f.points;
    spec.train_fraction = f.train_fraction;
    spec.seed = f.seed;
    data = gen_synthetic(spec);
  }

  fs::create_directories(fs::path(f.out) / "clouds");
  DatasetManifest manifest;
  manifest.class_names = data.train.class_names;

  char name[64];
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    std::snprintf(name, sizeof name, "clouds/train_%04zu.xyz", i);
    save_cloud(data.train.clouds[i], (fs::path(f.out) / name).string());
    manifest.train.push_back({name, data.train.labels[i]});
  }
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    std::snprintf(name, sizeof name, "clouds/test_%04zu.xyz", i);
    save_cloud(data.test.clouds[i], (fs::path(f.out) / name).string());
    manifest.test.push_back({name, data.test.labels[i]});
  }
  save_manifest(manifest, (fs::path(f.out) / "manifest.txt").string());

  if (f.text_width > 0)
    save_text_bank(synthetic_text_bank(manifest.class_names, f.text_width, f.seed),
                   (fs::path(f.out) / "textbank.txt").string());

  std::cout << "wrote " << data.train.size() << " train + " << data.test.size()
            << " test clouds (" << manifest.class_names.size() << " classes) to "
            << f.out << '\n';
}

void run_train(const JobFlags& jf, const ModelFlags& mf, const TrainFlags& tf) {
  DatasetManifest manifest = load_manifest(jf.data);
  std::string base = fs::path(jf.data).parent_path().string();
  Dataset train = load_split(manifest, "train", base);
  Dataset test = load_split(manifest, "test", base);

  WeightContainer c = make_container(mf, jf, manifest.class_names.size(), tf.freeze);

  TrainOptions options;
  options.epochs = tf.epochs;
  options.batch_size = tf.batch_size;
  options.opt.lr = tf.lr;
  options.opt.weight_decay = tf.weight_decay;
  options.cosine_lr = tf.cosine_lr;
  options.lambda = tf.lambda;
  options.temperature = tf.temperature;
  options.seed = jf.seed;

  fs::create_directories(jf.out);
  TrainReport report;
  std::vector<std::pair<std::string, double>> final_metrics;

  if (jf.task == "segment") {
    SegmentationModel model = bind_segmentation_model(c, neighbors_or_default(mf, jf.task));
    model.backbone.cfg.input_dropout = mf.input_dropout;
    check_head_classes(model.head.classes(), manifest.class_names.size());
    report = train_segmenter(c, model, train, test, manifest.class_names.size(), options);
    final_metrics = {{"point_accuracy", report.last("test", "point_accuracy")},
                     {"mean_class_accuracy", report.last("test", "mean_class_accuracy")},
                     {"instance_miou", report.last("test", "instance_miou")}};
  } else {
    ClassificationModel model =
        bind_classification_model(c, mf.patches, neighbors_or_default(mf, jf.task));
    model.backbone.cfg.input_dropout = mf.input_dropout;
    check_head_classes(model.head.classes(), manifest.class_names.size());
    TextFeatureBank bank;
    bool have_bank = !tf.text_bank.empty();
    if (have_bank) bank = load_text_bank(tf.text_bank);
    report = train_classifier(c, model, train, test, options,
                              have_bank ? &bank : nullptr);
    final_metrics = {{"accuracy", report.last("test", "accuracy")}};
  }

  save_weights(c, (fs::path(jf.out) / "weights.epcl").string());
  write_report_csv(report, (fs::path(jf.out) / "report.csv").string());
  print_metrics(final_metrics);
}

void run_eval(const JobFlags& jf, const ModelFlags& mf, const std::string& split) {
  if (mf.weights.empty()) throw ConfigError("eval requires --weights");
  DatasetManifest manifest = load_manifest(jf.data);
  Dataset data = load_split(manifest, split, fs::path(jf.data).parent_path().string());
  WeightContainer c = load_weights(mf.weights);

  std::vector<std::pair<std::string, double>> metrics;
  if (jf.task == "segment") {
    SegmentationModel model = bind_segmentation_model(c, neighbors_or_default(mf, jf.task));
    check_head_classes(model.head.classes(), manifest.class_names.size());
    SegMetrics m = evaluate_segmentation(model, data, manifest.class_names.size());
    metrics = {{"point_accuracy", m.point_accuracy},
               {"mean_class_accuracy", m.mean_class_accuracy},
               {"instance_miou", m.instance_miou}};
  } else {
    ClassificationModel model =
        bind_classification_model(c, mf.patches, neighbors_or_default(mf, jf.task));
    check_head_classes(model.head.classes(), manifest.class_names.size());
    metrics = {{"accuracy", evaluate_classification(model, data)}};
  }

  if (!jf.out.empty()) {
    fs::create_directories(jf.out);
    write_metrics_file(metrics, (fs::path(jf.out) / "metrics.csv").string());
  }
  print_metrics(metrics);
}

struct FewShotFlags {
  std::size_t way = 5;
  std::size_t shot = 10;
  std::string protocol = "kway";
};

void write_episode_file(const FewShotEpisode& ep, const Dataset& train_full,
                        const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  f << "way " << ep.way << "\nshot " << ep.shot << "\nseed " << ep.seed
    << "\ntrain_count " << ep.train_indices.size() << "\ntest_count "
    << ep.test_indices.size() << '\n';
  for (std::size_t cls : ep.selected_classes)
    f << "class " << cls << ' ' << train_full.class_names[cls] << '\n';
  for (std::size_t i : ep.train_indices) f << "train " << i << '\n';
  for (std::size_t i : ep.test_indices) f << "test " << i << '\n';
}

void run_fewshot(const JobFlags& jf, const ModelFlags& mf, const TrainFlags& tf,
                 const FewShotFlags& ff) {
  if (jf.task != "classify") throw ConfigError("fewshot supports only --task classify");
  DatasetManifest manifest = load_manifest(jf.data);
  std::string base = fs::path(jf.data).parent_path().string();
  Dataset train_full = load_split(manifest, "train", base);
  Dataset test_full = load_split(manifest, "test", base);

  FewShotEpisode ep;
  if (ff.protocol == "16shot") {
    ep = sample_16shot(train_full.labels, test_full.labels, manifest.class_names.size(),
                       jf.seed);
  } else {
    ep = sample_kway_nshot(train_full.labels, test_full.labels,
                           manifest.class_names.size(), ff.way, ff.shot, jf.seed);
  }
  auto [train, test] = make_episode_datasets(train_full, test_full, ep);
  std::cout << "episode: " << ep.train_indices.size() << " train / "
            << ep.test_indices.size() << " test samples, " << ep.way << " classes\n";

  JobFlags episode_job = jf;  // same seed drives init, episode, and training
  WeightContainer c = make_container(mf, episode_job, ep.way, tf.freeze);

  TrainOptions options;
  options.epochs = tf.epochs;
  options.batch_size = tf.batch_size;
  options.opt.lr = tf.lr;
  options.opt.weight_decay = tf.weight_decay;
  options.cosine_lr = tf.cosine_lr;
  options.seed = jf.seed;

  ClassificationModel model =
      bind_classification_model(c, mf.patches, neighbors_or_default(mf, jf.task));
  model.backbone.cfg.input_dropout = mf.input_dropout;
  check_head_classes(model.head.classes(), ep.way);
  TrainReport report = train_classifier(c, model, train, test, options, nullptr);

  fs::create_directories(jf.out);
  write_episode_file(ep, train_full, (fs::path(jf.out) / "episode.txt").string());
  write_report_csv(report, (fs::path(jf.out) / "report.csv").string());
  save_weights(c, (fs::path(jf.out) / "weights.epcl").string());
  print_metrics({{"accuracy", report.last("test", "accuracy")}});
}

struct AlignFlags {
  std::size_t raster_size = 32;
  std::size_t img_patch = 8;
  float extent = 2.0f;
  std::string estimator = "pearson";
  std::string split = "test";
};

void run_align(const JobFlags& jf, const ModelFlags& mf, const AlignFlags& af) {
  CorrelationEstimator est = parse_estimator(af.estimator);
  DatasetManifest manifest = load_manifest(jf.data);
  Dataset data =
      load_split(manifest, af.split, fs::path(jf.data).parent_path().string());

  WeightContainer c = make_container(mf, jf, manifest.class_names.size(),
                                     "frozen-backbone");
  ClassificationModel model =
      bind_classification_model(c, mf.patches, neighbors_or_default(mf, jf.task));

  // The image branch rides the same frozen backbone. A checkpoint without
  // image tensors gets a seeded random projection; the curve is then a
  // harness artifact, not an alignment claim.
  ImageTokenizerWeights img_tok;
  if (c.contains("image.proj.w")) {
    img_tok = bind_image_tokenizer(c, af.img_patch);
  } else {
    Rng rng(jf.seed + 1);  // offset so point and image projections differ
    img_tok = init_image_tokenizer(rng, model.tokenizer.width(), af.img_patch,
                                   af.raster_size, af.raster_size, 1);
  }

  std::vector<Image> images;
  images.reserve(data.size());
  for (const auto& cloud : data.clouds)
    images.push_back(render_occupancy(cloud, af.raster_size, af.extent));

  std::vector<TensorF> feats3d = category_mean_point_features(model, data);
  std::vector<TensorF> feats2d = category_mean_image_features(
      img_tok, model.backbone, images, data.labels, manifest.class_names.size());

  fs::create_directories(jf.out);
  char name[64];
  for (std::size_t l = 0; l < feats3d.size(); ++l) {
    AlignmentMatrix m = cross_correlation(feats2d[l], feats3d[l], l, est,
                                          manifest.class_names, manifest.class_names);
    std::snprintf(name, sizeof name, "matrix_layer%02zu.tsv", l);
    write_alignment_matrix(m, (fs::path(jf.out) / name).string());
  }
  AlignmentCurve curve = alignment_curve(feats2d, feats3d, est);
  write_alignment_curve(curve, (fs::path(jf.out) / "curve.csv").string());

  std::cout << std::setprecision(6) << "mean diagonal correlation by depth:";
  for (double v : curve.mean_diagonal) std::cout << ' ' << v;
  std::cout << '\n';
}

void run_export(const JobFlags& jf, const ModelFlags& mf, std::size_t layer,
                bool layer_given, const std::string& split) {
  DatasetManifest manifest = load_manifest(jf.data);
  Dataset data = load_split(manifest, split, fs::path(jf.data).parent_path().string());

  // Without --weights the export describes a freshly seeded model, the same
  // fallback the alignment job uses.
  WeightContainer c =
      make_container(mf, jf, manifest.class_names.size(), "frozen-backbone");
  ClassificationModel model =
      bind_classification_model(c, mf.patches, neighbors_or_default(mf, jf.task));
  if (!layer_given) layer = model.backbone.cfg.layers;

  fs::create_directories(jf.out);
  std::string path = (fs::path(jf.out) / "embeddings.csv").string();
  export_embeddings(model, data, layer, path);
  std::cout << "wrote " << data.size() << " embeddings of width "
            << model.tokenizer.width() << " at depth " << layer << " to " << path
            << '\n';
}

void run_inspect(const std::string& path) {
  WeightContainer c = load_weights(path);
  std::cout << "source_tag: " << c.source_tag << '\n';
  if (c.width != 0)
    std::cout << "backbone: width " << c.width << ", layers " << c.layers << ", heads "
              << c.heads << ", mlp_ratio " << c.mlp_ratio << '\n';
  std::cout << "tensors: " << c.count() << "\n\n";

  std::size_t name_w = 4;
  for (const auto& n : c.names()) name_w = std::max(name_w, n.size());
  std::cout << std::left << std::setw(int(name_w) + 2) << "NAME" << std::setw(16)
            << "SHAPE" << "STATE\n";
  for (const auto& n : c.names()) {
    const TensorF& t = c.get(n);
    std::string shape;
    for (std::size_t i = 0; i < t.rank(); ++i)
      shape += (i ? "x" : "") + std::to_string(t.shape()[i]);
    std::cout << std::setw(int(name_w) + 2) << n << std::setw(16) << shape
              << (c.is_frozen(n) ? "frozen" : "trainable") << '\n';
  }
}

// --- config file expansion ---------------------------------------------------

// Job flags may come from a `key = value` file with `#` comments. The file's
// keys are spliced in as option tokens right after the subcommand name, so
// explicit command-line flags, parsed later under a take-last policy, override
// file values.
std::vector<std::string> expand_config(std::vector<std::string> args,
                                       const std::vector<std::string>& subcommands) {
  std::string path;
  for (std::size_t i = 0; i < args.size();) {
    std::string found;
    std::size_t erase = 0;
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ConfigError("--config expects a file path");
      found = args[i + 1];
      erase = 2;
    } else if (args[i].rfind("--config=", 0) == 0) {
      found = args[i].substr(9);
      erase = 1;
    }
    if (erase == 0) {
      ++i;
      continue;
    }
    if (!path.empty()) throw ConfigError("only one --config file is allowed");
    if (found.empty()) throw ConfigError("--config expects a file path");
    path = found;
    args.erase(args.begin() + long(i), args.begin() + long(i + erase));
  }
  if (path.empty()) return args;

  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML{}.from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(path + ": " + e.what());
  }

  std::vector<std::string> tokens;
  for (const auto& item : items) {
    if (!item.parents.empty())
      throw ConfigError(path + ": sections are not supported, use flat `key = value` lines");
    if (item.name == "config") throw ConfigError(path + ": a config file cannot set `config`");
    if (item.inputs.size() > 1)
      throw ConfigError(path + ": key `" + item.name + "` has more than one value");
    tokens.push_back(item.inputs.empty() ? "--" + item.name
                                         : "--" + item.name + "=" + item.inputs.front());
  }

  auto sub =
      std::find_first_of(args.begin(), args.end(), subcommands.begin(), subcommands.end());
  if (sub == args.end()) throw ConfigError("--config requires a job subcommand");
  args.insert(sub + 1, tokens.begin(), tokens.end());
  return args;
}

// Documents --config in the subcommand's help text. The token itself is
// consumed by expand_config before CLI11 ever parses, so the sink stays empty.
void add_config_stub(CLI::App* cmd) {
  static std::string sink;
  cmd->add_option("--config", sink,
                  "Config file of `key = value` lines; flags override file values");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-cloud learning with a frozen 2D transformer backbone"};
  app.require_subcommand(1);

  GenFlags gen;
  auto* cmd_gen = app.add_subcommand("gen-synthetic", "Generate a synthetic dataset");
  cmd_gen->add_option("--classes", gen.classes, "Class count (classify task)")
      ->capture_default_str();
  cmd_gen->add_option("--per-class", gen.per_class,
                      "Samples per class (classify) or total clouds (segment)")
      ->capture_default_str();
  cmd_gen->add_option("--points", gen.points, "Points per cloud")->capture_default_str();
  cmd_gen->add_option("--train-fraction", gen.train_fraction, "Train split share")
      ->capture_default_str();
  cmd_gen->add_option("--text-width", gen.text_width,
                      "Also write a synthetic text feature bank of this width")
      ->capture_default_str();
  cmd_gen->add_option("--task", gen.task, "Dataset flavor")
      ->check(CLI::IsMember({"classify", "segment"}))
      ->capture_default_str();
  cmd_gen->add_option("--out", gen.out, "Output directory")->required();
  cmd_gen->add_option("--seed", gen.seed, "Random seed")->required();
  add_config_stub(cmd_gen);
  cmd_gen->callback([&] { run_gen_synthetic(gen); });

  JobFlags train_job;
  ModelFlags train_model;
  TrainFlags train_opts;
  auto* cmd_train = app.add_subcommand("train", "Train heads over the frozen backbone");
  add_job_flags(cmd_train, train_job, true);
  add_model_flags(cmd_train, train_model);
  add_train_flags(cmd_train, train_opts);
  add_config_stub(cmd_train);
  cmd_train->callback([&] { run_train(train_job, train_model, train_opts); });

  JobFlags eval_job;
  ModelFlags eval_model;
  std::string eval_split = "test";
  auto* cmd_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  add_job_flags(cmd_eval, eval_job, false);
  add_model_flags(cmd_eval, eval_model);
  cmd_eval->add_option("--split", eval_split, "Dataset split")
      ->check(CLI::IsMember({"train", "test"}))
      ->capture_default_str();
  add_config_stub(cmd_eval);
  cmd_eval->callback([&] { run_eval(eval_job, eval_model, eval_split); });

  JobFlags few_job;
  ModelFlags few_model;
  TrainFlags few_opts;
  FewShotFlags few;
  auto* cmd_few = app.add_subcommand("fewshot", "Sample and train a few-shot episode");
  add_job_flags(cmd_few, few_job, true);
  add_model_flags(cmd_few, few_model);
  add_train_flags(cmd_few, few_opts);
  cmd_few->add_option("--way", few.way, "Classes per episode")->capture_default_str();
  cmd_few->add_option("--shot", few.shot, "Train samples per class")
      ->capture_default_str();
  cmd_few->add_option("--protocol", few.protocol,
                      "kway = way/shot episode; 16shot = 16 per class, full test split")
      ->check(CLI::IsMember({"kway", "16shot"}))
      ->capture_default_str();
  add_config_stub(cmd_few);
  cmd_few->callback([&] { run_fewshot(few_job, few_model, few_opts, few); });

  JobFlags align_job;
  ModelFlags align_model;
  AlignFlags align;
  auto* cmd_align =
      app.add_subcommand("align", "Cross-modal correlation of category features");
  add_job_flags(cmd_align, align_job, true);
  add_model_flags(cmd_align, align_model);
  cmd_align->add_option("--raster-size", align.raster_size, "Occupancy image size")
      ->capture_default_str();
  cmd_align->add_option("--img-patch", align.img_patch, "Image patch size")
      ->capture_default_str();
  cmd_align->add_option("--extent", align.extent, "World half-extent of the render")
      ->capture_default_str();
  cmd_align->add_option("--estimator", align.estimator, "pearson or cosine")
      ->capture_default_str();
  cmd_align->add_option("--split", align.split, "Dataset split")
      ->check(CLI::IsMember({"train", "test"}))
      ->capture_default_str();
  add_config_stub(cmd_align);
  cmd_align->callback([&] { run_align(align_job, align_model, align); });

  JobFlags exp_job;
  ModelFlags exp_model;
  std::size_t exp_layer = 0;
  std::string exp_split = "test";
  auto* cmd_exp =
      app.add_subcommand("export-embeddings", "Dump per-sample features as CSV");
  add_job_flags(cmd_exp, exp_job, true);
  add_model_flags(cmd_exp, exp_model);
  auto* layer_opt = cmd_exp->add_option("--layer", exp_layer,
                                        "Backbone depth to export (default: final)");
  cmd_exp->add_option("--split", exp_split, "Dataset split")
      ->check(CLI::IsMember({"train", "test"}))
      ->capture_default_str();
  add_config_stub(cmd_exp);
  cmd_exp->callback([&] {
    run_export(exp_job, exp_model, exp_layer, layer_opt->count() > 0, exp_split);
  });

  std::string inspect_path;
  auto* cmd_inspect =
      app.add_subcommand("inspect-weights", "List a checkpoint's tensors");
  cmd_inspect->add_option("file", inspect_path, "Checkpoint file")->required();
  cmd_inspect->callback([&] { run_inspect(inspect_path); });

  // A value given both in a config file and as a flag resolves to the flag:
  // expand_config puts file tokens first and take-last keeps the later one.
  for (CLI::App* sc : app.get_subcommands(nullptr))
    for (CLI::Option* o : sc->get_options())
      o->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(std::move(args),
                         {"gen-synthetic", "train", "eval", "fewshot", "align",
                          "export-embeddings", "inspect-weights"});
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    // Contract violations surface as config errors at this boundary.
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
