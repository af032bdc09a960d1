#include "midfea/commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "midfea/classify.hpp"
#include "midfea/config.hpp"
#include "midfea/dataset.hpp"
#include "midfea/matrix_io.hpp"
#include "midfea/pipeline.hpp"
#include "midfea/pnm.hpp"
#include "midfea/synth.hpp"

namespace midfea {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config;
  std::string seed;
  std::size_t threads = 1;
  std::string out;
};

// Stage directories inside a work directory.
struct Layout {
  fs::path root;
  fs::path model() const { return root / "model"; }
  fs::path features() const { return root / "features"; }
  fs::path ns() const { return root / "ns"; }
  fs::path clf_midfea() const { return root / "clf" / "midfea"; }
  fs::path clf_ns() const { return root / "clf" / "ns"; }
  fs::path config() const { return root / "config.txt"; }
};

void require_file(const fs::path& p, const std::string& what, const std::string& producer) {
  if (!fs::exists(p)) {
    throw DataError("missing " + what + " file: " + p.string() + " (run `midfea " + producer + "` first)");
  }
}

void require_model(const Layout& l) {
  require_file(l.model() / "filters.mat", "filter bank", "learn");
  require_file(l.model() / "filters.txt", "filter bank sidecar", "learn");
  require_file(l.model() / "codebook.mat", "codebook", "learn");
  require_file(l.model() / "projection.mat", "projection", "learn");
  require_file(l.model() / "pipeline.txt", "pipeline description", "learn");
}

void require_features(const Layout& l) {
  for (const char* f : {"train.mat", "test.mat", "train_labels.txt", "test_labels.txt", "classes.txt"})
    require_file(l.features() / f, "feature", "extract");
}

bool ns_present(const Layout& l) { return fs::exists(l.ns() / "W.mat"); }

RunConfig resolve_config(const Globals& g, const Layout* layout) {
  RunConfig cfg;
  if (!g.config.empty()) {
    cfg = RunConfig::load(g.config);
  } else if (layout != nullptr && fs::exists(layout->config())) {
    cfg = RunConfig::load(layout->config());
  }
  if (!g.seed.empty()) {
    try {
      std::size_t used = 0;
      cfg.seed = std::stoull(g.seed, &used);
      if (used != g.seed.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw UsageError("--seed expects a non-negative integer, got '" + g.seed + "'");
    }
  }
  return cfg;
}

Layout work_dir(const Globals& g) {
  if (g.out.empty()) throw UsageError("--out DIR is required for this command");
  return Layout{g.out};
}

std::vector<GrayImage> load_images(const std::vector<const DatasetEntry*>& entries) {
  std::vector<GrayImage> images;
  images.reserve(entries.size());
  for (const auto* e : entries) {
    try {
      images.push_back(load_gray(e->path));
    } catch (const PnmError& err) {
      throw DataError(err.what());
    }
  }
  return images;
}

std::vector<std::size_t> label_indices(const DatasetManifest& m, const std::vector<const DatasetEntry*>& entries) {
  std::vector<std::size_t> out;
  for (const auto* e : entries) out.push_back(m.class_index(e->label));
  return out;
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  for (const auto& l : lines) out << l << '\n';
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  std::vector<std::string> lines;
  std::string l;
  while (std::getline(in, l))
    if (!l.empty()) lines.push_back(l);
  return lines;
}

void write_labels(const fs::path& p, const std::vector<std::size_t>& labels) {
  std::vector<std::string> lines;
  for (auto v : labels) lines.push_back(std::to_string(v));
  write_lines(p, lines);
}

std::vector<std::size_t> read_labels(const fs::path& p) {
  std::vector<std::size_t> out;
  for (const auto& l : read_lines(p)) {
    try {
      out.push_back(std::stoul(l));
    } catch (const std::exception&) {
      throw DataError(p.string() + ": bad label '" + l + "'");
    }
  }
  return out;
}

struct FeatureSet {
  Matrix train, test;
  std::vector<std::size_t> train_labels, test_labels;
  std::vector<std::string> classes;
};

FeatureSet load_features(const Layout& l) {
  require_features(l);
  FeatureSet fs_;
  fs_.train = read_matrix(l.features() / "train.mat");
  fs_.test = read_matrix(l.features() / "test.mat");
  fs_.train_labels = read_labels(l.features() / "train_labels.txt");
  fs_.test_labels = read_labels(l.features() / "test_labels.txt");
  fs_.classes = read_lines(l.features() / "classes.txt");
  if (fs_.train.cols() != fs_.train_labels.size() || fs_.test.cols() != fs_.test_labels.size()) {
    throw DataError(l.features().string() + ": feature and label counts differ");
  }
  return fs_;
}

std::string fixed(double v, int digits = 6) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

// --- subcommands -----------------------------------------------------------

int cmd_synth(const Globals& g, const SynthOptions& opts, std::ostream& out) {
  if (g.out.empty()) throw UsageError("synth needs --out DIR");
  if (opts.classes < 2) throw UsageError("--classes must be at least 2");
  const RunConfig cfg = resolve_config(g, nullptr);
  SeededRng rng(cfg.seed);
  const auto m = write_synth_dataset(g.out, opts, rng);
  out << "wrote " << m.entries.size() << " images in " << m.classes.size() << " classes to " << g.out << "\n";
  return kExitOk;
}

int cmd_ingest_check(const std::string& data, std::ostream& out) {
  const DatasetManifest m = ingest(data);
  for (const auto& e : m.entries) {
    try {
      (void)load_gray(e.path);
    } catch (const PnmError& err) {
      throw DataError(err.what());
    }
  }
  out << "dataset " << m.root.string() << ": " << m.entries.size() << " images, " << m.classes.size()
      << " classes\n";
  for (const auto& c : m.classes) {
    std::size_t tr = 0, te = 0;
    for (const auto& e : m.entries)
      if (e.label == c) (e.split == Split::Train ? tr : te)++;
    out << "  " << c << ": " << tr << " train, " << te << " test\n";
  }
  return kExitOk;
}

int cmd_learn(const Globals& g, const std::string& data, std::ostream& out) {
  const Layout l = work_dir(g);
  const RunConfig cfg = resolve_config(g, nullptr);
  const DatasetManifest m = ingest(data);
  const auto train = m.split(Split::Train);
  if (train.empty()) throw DataError("dataset has no training images");
  const auto images = load_images(train);
  const PipelineModel model = learn_pipeline(images, cfg);
  fs::create_directories(l.root);
  model.save(l.model());
  cfg.save(l.config());
  out << "learned " << model.filters.count() << " filters, " << model.codebook.size()
      << " codewords, projection " << model.projection.cols() << " -> " << model.projection.rows()
      << " into " << l.model().string() << "\n";
  return kExitOk;
}

int cmd_extract(const Globals& g, const std::string& data, std::ostream& out) {
  const Layout l = work_dir(g);
  require_model(l);
  const PipelineModel model = PipelineModel::load(l.model());
  const DatasetManifest m = ingest(data);
  fs::create_directories(l.features());
  for (Split s : {Split::Train, Split::Test}) {
    const auto entries = m.split(s);
    if (entries.empty()) throw DataError("dataset has no " + to_string(s) + " images");
    const auto images = load_images(entries);
    const Matrix feats = extract_features(images, model, g.threads);
    write_matrix(l.features() / (to_string(s) + ".mat"), feats);
    write_labels(l.features() / (to_string(s) + "_labels.txt"), label_indices(m, entries));
    out << "extracted " << feats.cols() << " " << to_string(s) << " features of dim " << feats.rows() << "\n";
  }
  write_lines(l.features() / "classes.txt", m.classes);
  return kExitOk;
}

int cmd_train_ns(const Globals& g, std::ostream& out) {
  const Layout l = work_dir(g);
  const RunConfig cfg = resolve_config(g, &l);
  const FeatureSet f = load_features(l);
  SeededRng root(cfg.seed);
  SeededRng rng = root.fork(4);
  const ns::Problem prob{f.train, f.train_labels, f.classes.size()};
  const ns::TrainResult res = ns::train(prob, cfg.ns, rng);
  res.model.save(l.ns());
  std::ofstream trace(l.ns() / "trace.csv");
  trace << "epoch,objective\n" << std::setprecision(17);
  for (std::size_t e = 0; e < res.epoch_trace.size(); ++e) trace << e + 1 << ',' << res.epoch_trace[e] << '\n';
  out << "trained NS layer: " << res.model.neurons() << " neurons, " << res.epochs_run
      << " epochs, objective " << (res.epoch_trace.empty() ? 0.0 : res.epoch_trace.back()) << "\n";
  return kExitOk;
}

int cmd_train_clf(const Globals& g, std::ostream& out) {
  const Layout l = work_dir(g);
  const RunConfig cfg = resolve_config(g, &l);
  const FeatureSet f = load_features(l);
  const LinearTrainOptions opts{cfg.clf_reg, cfg.clf_epochs};
  SeededRng root(cfg.seed);
  SeededRng rng = root.fork(5);
  train_linear(f.train, f.train_labels, f.classes.size(), opts, rng).save(l.clf_midfea());
  out << "trained MidFea classifier into " << l.clf_midfea().string() << "\n";
  if (ns_present(l)) {
    const ns::Model model = ns::Model::load(l.ns());
    SeededRng ns_rng = root.fork(6);
    train_linear(ns::infer_batch(f.train, model), f.train_labels, f.classes.size(), opts, ns_rng)
        .save(l.clf_ns());
    out << "trained MidFea-NS classifier into " << l.clf_ns().string() << "\n";
  }
  return kExitOk;
}

int cmd_eval(const Globals& g, const std::string& data, std::ostream& out) {
  const Layout l = work_dir(g);
  const RunConfig cfg = resolve_config(g, &l);
  require_file(l.clf_midfea() / "weights.mat", "classifier", "train-clf");
  const FeatureSet f = load_features(l);

  std::vector<std::pair<std::string, double>> report;
  std::vector<double> numeric;
  bool is_numeric = !f.classes.empty();
  for (const auto& c : f.classes) {
    try {
      std::size_t used = 0;
      numeric.push_back(std::stod(c, &used));
      if (used != c.size()) is_numeric = false;
    } catch (const std::exception&) {
      is_numeric = false;
    }
  }
  auto score = [&](const std::string& name, const std::vector<std::size_t>& pred) {
    report.emplace_back(name + "_accuracy", accuracy(pred, f.test_labels));
    out << std::left << std::setw(12) << name << " accuracy " << fixed(accuracy(pred, f.test_labels), 4);
    if (is_numeric) {
      std::vector<double> p, t;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        p.push_back(numeric[pred[i]]);
        t.push_back(numeric[f.test_labels[i]]);
      }
      report.emplace_back(name + "_mae", mae(p, t));
      out << "  MAE " << fixed(mae(p, t), 4);
    }
    out << "\n";
  };

  score("midfea", predict(f.test, LinearClassifier::load(l.clf_midfea())));
  if (ns_present(l)) {
    require_file(l.clf_ns() / "weights.mat", "NS classifier", "train-clf");
    const ns::Model model = ns::Model::load(l.ns());
    score("midfea_ns", predict(ns::infer_batch(f.test, model), LinearClassifier::load(l.clf_ns())));
  }
  if (!data.empty()) {
    const DatasetManifest m = ingest(data);
    const auto tr = m.split(Split::Train), te = m.split(Split::Test);
    const auto tr_img = load_images(tr), te_img = load_images(te);
    SeededRng root(cfg.seed);
    SeededRng rng = root.fork(7);
    const auto clf = train_linear(raw_pixel_features(tr_img), label_indices(m, tr), m.classes.size(),
                                  LinearTrainOptions{cfg.clf_reg, cfg.clf_epochs}, rng);
    const auto pred = predict(raw_pixel_features(te_img), clf);
    report.emplace_back("raw_pixel_accuracy", accuracy(pred, label_indices(m, te)));
    out << std::left << std::setw(12) << "raw_pixel" << " accuracy " << fixed(report.back().second, 4) << "\n";
  }
  std::vector<std::string> lines;
  for (const auto& [k, v] : report) lines.push_back(k + "=" + fixed(v));
  write_lines(l.root / "eval.txt", lines);
  return kExitOk;
}

int cmd_bench(const Globals& g, const std::string& image, const std::string& model_dir,
              std::size_t repeats, std::ostream& out) {
  const Layout l{model_dir};
  require_model(l);
  const PipelineModel model = PipelineModel::load(l.model());
  GrayImage img;
  try {
    img = load_gray(image);
  } catch (const PnmError& e) {
    throw DataError(e.what());
  }
  if (img.height() < model.filters.side() || img.width() < model.filters.side()) {
    throw DataError("image " + image + " is smaller than the " + std::to_string(model.filters.side()) +
                    "x" + std::to_string(model.filters.side()) + " filters");
  }
  std::optional<ns::Model> ns_model;
  if (ns_present(l)) ns_model = ns::Model::load(l.ns());
  const StageTimings t = bench_pipeline(img.pixels(), model, ns_model ? &*ns_model : nullptr, repeats);

  out << "feed-forward timing for " << img.width() << "x" << img.height() << " image, median of " << repeats
      << " run(s)\n";
  out << std::left << std::setw(20) << "stage" << std::right << std::setw(12) << "time (ms)" << "\n";
  for (std::size_t s = 0; s < t.ms.size(); ++s) {
    out << std::left << std::setw(20) << StageTimings::kStageNames[s] << std::right << std::setw(12)
        << fixed(t.ms[s], 3);
    if (s == t.ms.size() - 1 && !ns_model) out << "  (no NS model)";
    out << "\n";
  }
  out << std::left << std::setw(20) << "total" << std::right << std::setw(12) << fixed(t.total(), 3) << "\n";

  const fs::path csv_dir = g.out.empty() ? l.root : fs::path(g.out);
  fs::create_directories(csv_dir);
  std::vector<std::string> lines{"stage,ms"};
  for (std::size_t s = 0; s < t.ms.size(); ++s)
    lines.push_back(std::string(StageTimings::kStageNames[s]) + "," + fixed(t.ms[s], 6));
  lines.push_back("total," + fixed(t.total(), 6));
  write_lines(csv_dir / "bench.csv", lines);
  return kExitOk;
}

int cmd_export_maps(const Globals& g, const std::string& image, const std::string& model_dir,
                    const std::string& stage, std::ostream& out) {
  const auto& names = export_stage_names();
  if (std::find(names.begin(), names.end(), stage) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw UsageError("unknown stage '" + stage + "'; valid stages: " + list);
  }
  if (g.out.empty()) throw UsageError("export-maps needs --out DIR");
  const Layout l{model_dir};
  require_file(l.model() / "filters.mat", "filter bank", "learn");
  require_file(l.model() / "filters.txt", "filter bank sidecar", "learn");
  const FilterBank bank = FilterBank::load(l.model() / "filters");
  GrayImage img;
  try {
    img = load_gray(image);
  } catch (const PnmError& e) {
    throw DataError(e.what());
  }
  if (img.height() < bank.side() || img.width() < bank.side()) throw DataError("image smaller than filters");

  const SoftConvStages st = soft_convolve_stages(img.pixels(), bank);
  std::vector<Matrix> maps;
  bool mean_only = false;
  auto slices = [&](const Tensor3& t) {
    for (std::size_t k = 0; k < t.depth(); ++k) maps.push_back(t.slice(k));
  };
  if (stage == "sconv_raw") slices(st.raw);
  else if (stage == "sconv_norm") slices(st.normalized);
  else if (stage == "sconv_thresh") slices(st.thresholded);
  else if (stage == "sconv_final") slices(st.final_maps);
  else if (stage == "pooled") slices(max_pool_3d(st.final_maps));
  else {
    slices(assemble_descriptors(max_pool_3d(st.final_maps)).values());
    mean_only = true;
  }

  Matrix mean(maps.front().rows(), maps.front().cols());
  for (const auto& m : maps)
    for (std::size_t i = 0; i < m.size(); ++i) mean.data()[i] += m.data()[i];
  for (double& v : mean.data()) v /= static_cast<double>(maps.size());
  if (mean_only) maps.clear();

  // One linear map for the whole stage keeps the written files comparable.
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto* m : {&mean}) for (double v : m->data()) lo = std::min(lo, v), hi = std::max(hi, v);
  for (const auto& m : maps)
    for (double v : m.data()) lo = std::min(lo, v), hi = std::max(hi, v);
  auto rescale = [&](Matrix m) {
    for (double& v : m.data()) v = hi > lo ? 255.0 * (v - lo) / (hi - lo) : 0.0;
    return m;
  };

  const fs::path dir = g.out;
  fs::create_directories(dir);
  char name[64];
  for (std::size_t k = 0; k < maps.size(); ++k) {
    std::snprintf(name, sizeof name, "%s_%03zu.pgm", stage.c_str(), k);
    write_pgm(dir / name, rescale(maps[k]));
  }
  write_pgm(dir / (stage + "_mean.pgm"), rescale(mean));
  out << "wrote " << maps.size() + 1 << " map(s) for stage " << stage << " to " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

const std::vector<std::string>& export_stage_names() {
  static const std::vector<std::string> names = {"sconv_raw", "sconv_norm", "sconv_thresh",
                                                 "sconv_final", "pooled", "descriptor_mean"};
  return names;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MidFea mid-level feature extraction and neuron-selectivity toolkit", "midfea"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "Run configuration file (key = value)");
  app.add_option("--seed", g.seed, "Override the configured random seed");
  app.add_option("--threads", g.threads, "Worker threads for feature extraction")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output or work directory");

  SynthOptions synth_opts;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic oriented-texture dataset");
  synth->add_option("--classes", synth_opts.classes, "Number of classes");
  synth->add_option("--per-class", synth_opts.per_class, "Images per class");
  synth->add_option("--size", synth_opts.size, "Image side in pixels");

  std::string data;
  auto* check = app.add_subcommand("ingest-check", "Validate a dataset directory or manifest");
  check->add_option("--data", data, "Dataset root or manifest file")->required();

  auto* learn = app.add_subcommand("learn", "Learn filters, codebook and projection");
  learn->add_option("--data", data, "Dataset root or manifest file")->required();

  auto* extract = app.add_subcommand("extract", "Extract MidFeatures for both splits");
  extract->add_option("--data", data, "Dataset root or manifest file")->required();

  auto* train_ns = app.add_subcommand("train-ns", "Train the neuron-selectivity layer");
  auto* train_clf = app.add_subcommand("train-clf", "Train linear classifiers");

  auto* eval = app.add_subcommand("eval", "Report test accuracy (and MAE for numeric labels)");
  eval->add_option("--data", data, "Dataset, to add a raw-pixel baseline");

  std::string image, model_dir, stage;
  std::size_t repeats = 9;
  auto* bench = app.add_subcommand("bench", "Time every feed-forward stage on one image");
  bench->add_option("--image", image, "Input image (.pgm/.ppm)")->required();
  bench->add_option("--model", model_dir, "Work directory holding model/ (and ns/)")->required();
  bench->add_option("--repeats", repeats, "Runs to take the median over")->check(CLI::PositiveNumber);

  auto* exportm = app.add_subcommand("export-maps", "Write intermediate feature maps as images");
  exportm->add_option("--image", image, "Input image (.pgm/.ppm)")->required();
  exportm->add_option("--model", model_dir, "Work directory holding model/")->required();
  exportm->add_option("--stage", stage, "sconv_raw|sconv_norm|sconv_thresh|sconv_final|pooled|descriptor_mean")
      ->required();

  std::vector<std::string> argv_store{"midfea"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(g, synth_opts, out);
    if (*check) return cmd_ingest_check(data, out);
    if (*learn) return cmd_learn(g, data, out);
    if (*extract) return cmd_extract(g, data, out);
    if (*train_ns) return cmd_train_ns(g, out);
    if (*train_clf) return cmd_train_clf(g, out);
    if (*eval) return cmd_eval(g, data, out);
    if (*bench) return cmd_bench(g, image, model_dir, repeats, out);
    if (*exportm) return cmd_export_maps(g, image, model_dir, stage, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace midfea
