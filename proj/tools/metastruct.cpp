// metastruct: command-line front end for the label-noise toolkit.
//
// Exit codes: 0 success, 1 usage error, 2 data error. All randomness derives from --seed;
// each subcommand hashes its own name into a sub-seed.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "metastruct/metastruct.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace metastruct;

namespace {

struct DataError : Error {
  using Error::Error;
};

void print_config(const std::string& command, const json& config) {
  std::cout << "config " << json{{"command", command}, {"options", config}}.dump() << "\n";
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError(dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pgm" || ext == ".png") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError("no .pgm or .png images in " + dir.string());
  return out;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

// ---------------------------------------------------------------------------------------

struct FixtureArgs {
  std::string kind = "circle";
  int size = 256;
  int radius = 64;
  std::uint64_t seed = 0;
  std::string out, intensity_out;
};

int run_fixture(const FixtureArgs& a) {
  static const std::map<std::string, FixtureKind> kinds = {
      {"circle", FixtureKind::CircleInRectangle},
      {"stripes3", FixtureKind::Stripes3},
      {"blobs", FixtureKind::Blobs}};
  FixtureSpec spec;
  spec.kind = kinds.at(a.kind);
  spec.size = a.size;
  spec.circle_radius = a.radius;
  spec.seed = derive_seed(Seed{a.seed}, "fixture");
  print_config("fixture", {{"kind", a.kind}, {"size", a.size}, {"radius", a.radius},
                           {"seed", a.seed}, {"out", a.out}, {"intensity_out", a.intensity_out}});
  const auto f = gen_fixture(spec);
  ensure_parent(a.out);
  io::write_mask(a.out, f.mask);
  if (!a.intensity_out.empty()) {
    if (!f.intensity) throw DataError("--intensity-out is only available for --kind blobs");
    ensure_parent(a.intensity_out);
    io::write_intensity(a.intensity_out, *f.intensity);
  }
  return 0;
}

// ---------------------------------------------------------------------------------------

struct CorruptArgs {
  std::string mask, out, ntm, ntm_out;
  std::optional<double> flip, sample, rl;
  std::vector<double> pair;
  bool dilate = false, erode = false, skeleton = false;
  int radius = 2;
  std::optional<int> num_classes;
  std::uint64_t seed = 0;
};

int run_corrupt(const CorruptArgs& a) {
  const int modes = !a.ntm.empty() + a.flip.has_value() + a.sample.has_value() + !a.pair.empty() +
                    a.rl.has_value() + a.dilate + a.erode + a.skeleton;
  if (modes != 1) {
    throw CLI::ValidationError(
        "corrupt", "exactly one of --ntm, --flip, --sample, --pair, --rl, --dilate, --erode, --skeleton is required");
  }
  json cfg = {{"mask", a.mask}, {"out", a.out}, {"seed", a.seed}};
  const Seed seed = derive_seed(Seed{a.seed}, "corrupt");
  std::optional<Ntm> q;
  if (!a.ntm.empty()) q = io::read_ntm(a.ntm);
  const LabelImage clean = io::read_mask(a.mask, q ? std::optional<int>(q->size()) : a.num_classes);
  if (q && a.num_classes && *a.num_classes != q->size()) {
    throw DataError("--num-classes disagrees with the " + std::to_string(q->size()) + "-class NTM");
  }
  const int m = clean.num_classes();

  LabelImage result = clean;
  if (!a.ntm.empty()) {
    cfg["ntm"] = a.ntm;
  } else if (a.flip) {
    cfg["flip"] = *a.flip;
    q = make_rcl_ntm(rcl::Flip{*a.flip, m});
  } else if (a.sample) {
    cfg["sample"] = *a.sample;
    q = make_rcl_ntm(rcl::Sample{*a.sample, m});
  } else if (!a.pair.empty()) {
    cfg["pair"] = a.pair;
    q = make_rcl_ntm(rcl::Pair{a.pair[0], a.pair[1]});
  }

  if (q) {
    cfg["num_classes"] = q->size();
    print_config("corrupt", cfg);
    result = apply_ntm(result, *q, seed);
    if (!a.ntm_out.empty()) {
      ensure_parent(a.ntm_out);
      io::write_ntm(a.ntm_out, *q);
    }
  } else {
    if (!a.ntm_out.empty()) throw DataError("--ntm-out needs a transition-matrix mode");
    if (a.rl) {
      cfg["rl"] = *a.rl;
      print_config("corrupt", cfg);
      result = generate_rl(clean.height(), clean.width(), *a.rl, seed);
    } else {
      cfg[a.dilate ? "dilate" : a.erode ? "erode" : "skeleton"] = true;
      if (!a.skeleton) cfg["radius"] = a.radius;
      print_config("corrupt", cfg);
      require_binary(clean, "corrupt");
      if (a.skeleton) {
        result = skeletonize(clean);
      } else {
        const StructuringElement se(a.radius);
        result = a.dilate ? dilate(clean, se) : erode(clean, se);
      }
    }
  }
  ensure_parent(a.out);
  io::write_mask(a.out, result);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) changed += clean[i] != result[i];
  std::cout << "changed_pixels " << changed << "\n";
  return 0;
}

// ---------------------------------------------------------------------------------------

struct EmsArgs {
  std::string mask, out;
  int r = 1;
  double p_sample = 0.1;
  std::uint64_t seed = 0;
};

int run_ems(const EmsArgs& a) {
  print_config("ems", {{"mask", a.mask}, {"out", a.out}, {"r", a.r}, {"p_sample", a.p_sample}, {"seed", a.seed}});
  const auto y = io::read_mask(a.mask);
  const auto out = ems_refine(y, {a.r, a.p_sample, derive_seed(Seed{a.seed}, "ems")});
  ensure_parent(a.out);
  io::write_mask(a.out, out);
  return 0;
}

// ---------------------------------------------------------------------------------------

struct SddArgs {
  std::string mask, clean, out_dir, normalization = "local";
  int h = 8;
  std::optional<int> row;
};

json levels_json(const MetaStructureSummary& s) {
  json clusters = json::array();
  for (const auto& c : s.clusters) clusters.push_back({{"level", c.level}, {"share", c.share}});
  return {{"num_semantic_classes", s.num_classes}, {"bandwidth", s.bandwidth}, {"clusters", clusters}};
}

int run_sdd(const SddArgs& a) {
  const auto norm = a.normalization == "global" ? Normalization::GlobalCount : Normalization::LocalFraction;
  const auto y = io::read_mask(a.mask);
  const int row = a.row.value_or(y.height() / 2);
  print_config("analyze-sdd", {{"mask", a.mask}, {"clean", a.clean}, {"h", a.h}, {"row", row},
                               {"normalization", a.normalization}, {"out_dir", a.out_dir}});
  std::optional<LabelImage> clean;
  if (!a.clean.empty()) {
    clean = io::read_mask(a.clean, y.num_classes());
    require_same_shape(*clean, y, "analyze-sdd");
  }
  fs::create_directories(a.out_dir);
  const auto maps = density_maps(y, a.h, norm);
  std::vector<std::vector<double>> curves;
  for (const auto& d : maps) {
    io::write_heatmap(fs::path(a.out_dir) / ("density_" + std::to_string(d.label) + ".png"), d.values);
    curves.push_back(density_curve(d, row));
  }

  std::vector<int> crossings;
  if (clean) crossings = outline_crossings(*clean, row);
  io::CsvWriter csv;
  std::vector<std::string> header = {"x"};
  for (const auto& d : maps) header.push_back("class_" + std::to_string(d.label));
  header.push_back("outline");
  csv.row(header);
  for (int x = 0; x < y.width(); ++x) {
    std::vector<std::string> fields = {std::to_string(x)};
    for (const auto& c : curves) fields.push_back(io::format_real(c[x]));
    fields.push_back(std::find(crossings.begin(), crossings.end(), x) != crossings.end() ? "1" : "0");
    csv.row(fields);
  }
  csv.save(fs::path(a.out_dir) / "density_curve.csv");

  json summary = levels_json(count_semantic_classes(y, a.h));
  summary["row"] = row;
  summary["normalization"] = a.normalization;
  if (clean) {
    const auto dev = cluster_boundary_deviation(*clean, y, a.h);
    summary["outline_crossings"] = crossings;
    summary["boundary_deviation"] = {{"clustered_pixels", dev.clustered_pixels},
                                     {"deviating_pixels", dev.deviating_pixels},
                                     {"outside_2h_band", dev.outside_band}};
  }
  io::write_text(fs::path(a.out_dir) / "summary.json", summary.dump(2) + "\n");
  std::cout << "semantic_classes " << summary["num_semantic_classes"].get<int>() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------------------

int run_crd(const std::string& path) {
  print_config("crd", {{"ntm", path}});
  const Ntm q = io::read_ntm(path);
  const auto table = crd(q);
  std::cout << "d(u,v)";
  for (int v = 0; v < q.size(); ++v) std::cout << "\t" << v;
  std::cout << "\n";
  char buf[32];
  for (int u = 0; u < q.size(); ++u) {
    std::cout << u;
    for (int v = 0; v < q.size(); ++v) {
      std::snprintf(buf, sizeof buf, "%.6g", table(u, v));
      std::cout << "\t" << buf;
    }
    std::cout << "\n";
  }
  std::snprintf(buf, sizeof buf, "%.6g", table.min_distance);
  std::cout << "min d(" << table.min_u << "," << table.min_v << ") = " << buf << "\n";
  std::cout << "rank " << ntm_rank(q) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------------------

struct IgttArgs {
  std::string images, refs, out;
  int k = 30, r = 1, epochs = 30, snapshot_every = 0;
  double p_sample = 0.1, lr = 0.1;
  std::uint64_t seed = 0;
  bool no_ems = false, predict_first = false;
};

int run_igtt(const IgttArgs& a) {
  IgttConfig config;
  config.k = a.k;
  config.ems = {a.r, a.p_sample, Seed{}};
  config.max_iters = a.epochs;
  config.learning_rate = a.lr;
  config.seed = derive_seed(Seed{a.seed}, "igtt");
  config.use_ems = !a.no_ems;
  config.order = a.predict_first ? UpdateOrder::PredictThenFit : UpdateOrder::FitThenPredict;
  print_config("igtt", {{"images", a.images}, {"refs", a.refs}, {"out", a.out}, {"k", a.k}, {"r", a.r},
                        {"p_sample", a.p_sample}, {"epochs", a.epochs}, {"lr", a.lr}, {"seed", a.seed},
                        {"ems", config.use_ems}, {"order", a.predict_first ? "predict-then-fit" : "fit-then-predict"},
                        {"snapshot_every", a.snapshot_every}});
  validate(config);

  const auto paths = list_images(a.images);
  std::vector<ProbImage> images;
  for (const auto& p : paths) images.push_back(io::read_intensity(p));
  std::vector<LabelImage> refs;
  if (!a.refs.empty()) {
    for (const auto& p : paths) {
      const fs::path ref = fs::path(a.refs) / p.filename();
      if (!fs::exists(ref)) throw DataError("missing reference mask " + ref.string());
      refs.push_back(io::read_mask(ref, 2));
    }
  }

  const fs::path out(a.out);
  fs::create_directories(out / "masks");
  io::CsvWriter csv;
  csv.row({"epoch", "dice", "iou", "accuracy", "auc"});
  auto on_epoch = [&](const EpochRecord& rec) {
    if (rec.mean_metrics) {
      const auto& m = *rec.mean_metrics;
      csv.row({std::to_string(rec.epoch), io::format_real(m.dice), io::format_real(m.iou),
               io::format_real(m.accuracy), m.auc ? io::format_real(*m.auc) : ""});
      std::cout << "epoch " << rec.epoch << " dice " << io::format_real(m.dice) << "\n";
    }
    if (a.snapshot_every > 0 && rec.epoch % a.snapshot_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03d", rec.epoch);
      const fs::path dir = out / "snapshots" / name;
      fs::create_directories(dir);
      for (std::size_t i = 0; i < paths.size(); ++i) io::write_mask(dir / paths[i].filename(), rec.y_star[i]);
    }
  };
  auto predictor = make_reference_predictor(config);
  const auto result = igtt_run(images, config, *predictor, refs, on_epoch);
  for (std::size_t i = 0; i < paths.size(); ++i) io::write_mask(out / "masks" / paths[i].filename(), result.final_masks[i]);
  if (!refs.empty()) csv.save(out / "metrics.csv");
  return 0;
}

// ---------------------------------------------------------------------------------------

struct MetricsArgs {
  std::string pred, ref, prob, out;
};

int run_metrics(const MetricsArgs& a) {
  print_config("metrics", {{"pred", a.pred}, {"ref", a.ref}, {"prob", a.prob}, {"out", a.out}});
  std::vector<std::pair<fs::path, fs::path>> pairs;
  if (fs::is_directory(a.pred)) {
    for (const auto& p : list_images(a.pred)) {
      const fs::path r = fs::path(a.ref) / p.filename();
      if (!fs::exists(r)) throw DataError("missing reference mask " + r.string());
      pairs.emplace_back(p, r);
    }
  } else {
    pairs.emplace_back(a.pred, a.ref);
  }
  io::CsvWriter csv;
  csv.row({"name", "dice", "iou", "accuracy", "auc"});
  MetricsReport mean;
  double auc_sum = 0.0;
  int auc_count = 0;
  for (const auto& [p, r] : pairs) {
    const auto pred = io::read_mask(p, 2), ref = io::read_mask(r, 2);
    MetricsReport m = overlap_metrics(pred, ref);
    if (!a.prob.empty()) {
      const fs::path prob = fs::is_directory(a.prob) ? fs::path(a.prob) / p.filename() : fs::path(a.prob);
      m.auc = auc(io::read_intensity(prob), ref);
    }
    mean.dice += m.dice;
    mean.iou += m.iou;
    mean.accuracy += m.accuracy;
    if (m.auc) auc_sum += *m.auc, ++auc_count;
    csv.row({p.filename().string(), io::format_real(m.dice), io::format_real(m.iou),
             io::format_real(m.accuracy), m.auc ? io::format_real(*m.auc) : ""});
  }
  const double n = static_cast<double>(pairs.size());
  csv.row({"mean", io::format_real(mean.dice / n), io::format_real(mean.iou / n),
           io::format_real(mean.accuracy / n), auc_count ? io::format_real(auc_sum / auc_count) : ""});
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    ensure_parent(a.out);
    csv.save(a.out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label-noise analysis: NTM corruption, spatial density, EMS and iGTT"};
  app.require_subcommand(1);

  FixtureArgs fx;
  auto* fixture = app.add_subcommand("fixture", "Write a synthetic mask (and intensity image)");
  fixture->add_option("--kind", fx.kind)->check(CLI::IsMember({"circle", "stripes3", "blobs"}))->capture_default_str();
  fixture->add_option("--size", fx.size)->check(CLI::Range(64, 8192))->capture_default_str();
  fixture->add_option("--radius", fx.radius, "Circle radius")->capture_default_str();
  fixture->add_option("--seed", fx.seed)->capture_default_str();
  fixture->add_option("--out", fx.out)->required();
  fixture->add_option("--intensity-out", fx.intensity_out, "Intensity image (blobs only)");

  CorruptArgs co;
  auto* corrupt = app.add_subcommand("corrupt", "Corrupt a clean mask");
  corrupt->add_option("--mask", co.mask)->required()->check(CLI::ExistingFile);
  corrupt->add_option("--out", co.out)->required();
  corrupt->add_option("--seed", co.seed)->capture_default_str();
  corrupt->add_option("--ntm", co.ntm, "Transition matrix JSON")->check(CLI::ExistingFile);
  corrupt->add_option("--flip", co.flip, "Flip probability, spread over other classes")->check(CLI::Range(0.0, 1.0));
  corrupt->add_option("--sample", co.sample, "Foreground keep probability")->check(CLI::Range(0.0, 1.0));
  corrupt->add_option("--pair", co.pair, "P(0|1) P(1|0)")->expected(2)->check(CLI::Range(0.0, 1.0));
  corrupt->add_option("--rl", co.rl, "Random label with this foreground probability")->check(CLI::Range(0.0, 1.0));
  corrupt->add_flag("--dilate", co.dilate);
  corrupt->add_flag("--erode", co.erode);
  corrupt->add_flag("--skeleton", co.skeleton);
  corrupt->add_option("--radius", co.radius, "Structuring element radius")->check(CLI::PositiveNumber)->capture_default_str();
  corrupt->add_option("--num-classes", co.num_classes)->check(CLI::Range(2, 256));
  corrupt->add_option("--ntm-out", co.ntm_out, "Write the matrix used");

  EmsArgs em;
  auto* ems = app.add_subcommand("ems", "Extract meta-structures from a mask");
  ems->add_option("--mask", em.mask)->required()->check(CLI::ExistingFile);
  ems->add_option("--out", em.out)->required();
  ems->add_option("--r", em.r)->check(CLI::NonNegativeNumber)->capture_default_str();
  ems->add_option("--p-sample", em.p_sample)->capture_default_str();
  ems->add_option("--seed", em.seed)->capture_default_str();

  SddArgs sd;
  auto* sdd = app.add_subcommand("analyze-sdd", "Density heatmaps, density curve and semantic-class count");
  sdd->set_help_flag("--help", "Print this help message and exit");  // --h is the bandwidth
  sdd->add_option("--mask", sd.mask)->required()->check(CLI::ExistingFile);
  sdd->add_option("--clean", sd.clean, "Clean mask for outlines and boundary checks")->check(CLI::ExistingFile);
  sdd->add_option("--h", sd.h, "Window half-width")->check(CLI::PositiveNumber)->capture_default_str();
  sdd->add_option("--row", sd.row, "Row for the density curve (default: middle)");
  sdd->add_option("--normalization", sd.normalization)->check(CLI::IsMember({"local", "global"}))->capture_default_str();
  sdd->add_option("--out-dir", sd.out_dir)->required();

  std::string ntm_path;
  auto* crd_cmd = app.add_subcommand("crd", "Pairwise column distances and rank of an NTM");
  crd_cmd->add_option("--ntm", ntm_path)->required()->check(CLI::ExistingFile);

  IgttArgs ig;
  auto* igtt = app.add_subcommand("igtt", "Unsupervised segmentation by iterative ground-truth training");
  igtt->add_option("--images", ig.images, "Directory of 8-bit intensity images")->required();
  igtt->add_option("--refs", ig.refs, "Directory of reference masks with matching names");
  igtt->add_option("--out", ig.out)->required();
  igtt->add_option("--k", ig.k)->capture_default_str();
  igtt->add_option("--r", ig.r)->capture_default_str();
  igtt->add_option("--p-sample", ig.p_sample)->capture_default_str();
  igtt->add_option("--epochs", ig.epochs)->capture_default_str();
  igtt->add_option("--lr", ig.lr)->capture_default_str();
  igtt->add_option("--seed", ig.seed)->capture_default_str();
  igtt->add_option("--snapshot-every", ig.snapshot_every, "Write Y* every N epochs (0: never)")->capture_default_str();
  igtt->add_flag("--no-ems", ig.no_ems, "Use the selected threshold mask directly as Y*");
  igtt->add_flag("--predict-first", ig.predict_first, "Predict before fitting within an epoch");

  MetricsArgs me;
  auto* metrics = app.add_subcommand("metrics", "Dice, IoU, accuracy and AUC per image pair");
  metrics->add_option("--pred", me.pred, "Mask file or directory")->required()->check(CLI::ExistingPath);
  metrics->add_option("--ref", me.ref, "Mask file or directory")->required()->check(CLI::ExistingPath);
  metrics->add_option("--prob", me.prob, "Probability image file or directory")->check(CLI::ExistingPath);
  metrics->add_option("--out", me.out, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*fixture) return run_fixture(fx);
    if (*corrupt) return run_corrupt(co);
    if (*ems) return run_ems(em);
    if (*sdd) return run_sdd(sd);
    if (*crd_cmd) return run_crd(ntm_path);
    if (*igtt) return run_igtt(ig);
    if (*metrics) return run_metrics(me);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
