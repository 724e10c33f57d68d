#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coinmark/baselines.hpp"
#include "coinmark/evaluation.hpp"
#include "coinmark/landmark.hpp"
#include "coinmark/random.hpp"

namespace fs = std::filesystem;
using namespace coinmark;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

// Which samples of a manifest a command sees. With folds = 0 every sample is
// used; otherwise train uses all folds but `fold` and the other commands use
// only `fold`, so a model can be inspected on images it never trained on.
struct SplitOptions {
  std::size_t folds = 0;
  std::size_t fold = 0;
  std::uint64_t split_seed = 1;
};

void add_split_options(CLI::App* cmd, SplitOptions& s) {
  cmd->add_option("--folds", s.folds, "Partition the manifest into this many class-balanced folds (0 = none)");
  cmd->add_option("--fold", s.fold, "Held-out fold index");
  cmd->add_option("--split-seed", s.split_seed, "Seed of the fold assignment");
}

std::vector<std::size_t> split_indices(const Dataset& ds, const SplitOptions& s, bool training) {
  std::vector<std::size_t> all(ds.samples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (s.folds == 0) return all;
  if (s.fold >= s.folds) throw CLI::ValidationError("--fold", "must be smaller than --folds");
  std::vector<std::size_t> labels;
  for (const auto& smp : ds.samples) labels.push_back(smp.leaf);
  const FoldPlan plan = make_folds(labels, ds.tree.leaf_labels, s.folds, s.split_seed);
  return training ? plan.training_indices(s.fold) : plan.folds[s.fold];
}

std::string split_string(const SplitOptions& s) {
  if (s.folds == 0) return "all samples";
  return "fold " + std::to_string(s.fold) + " of " + std::to_string(s.folds) +
         " (split seed " + std::to_string(s.split_seed) + ")";
}

void print_config(const std::string& command, const std::vector<std::pair<std::string, std::string>>& items) {
  std::cout << "# coinmark " << command << "\n";
  for (const auto& [k, v] : items) std::cout << "#   " << k << " = " << v << "\n";
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

std::size_t resolve_class(const Classifier& model, const Image& image, const std::string& label) {
  if (label.empty()) return model.predict(image);
  const auto& labels = model.labels();
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) fail(ErrorKind::UnknownLabel, "label '" + label + "' is not in the model vocabulary");
  return static_cast<std::size_t>(it - labels.begin());
}

// Images from a manifest, or a single PGM file given directly.
struct Targets {
  std::vector<std::string> ids;
  std::vector<Image> images;
  std::vector<Image> truth;
};

Targets pick_targets(const std::string& image_path, const std::string& manifest, const SplitOptions& split,
                     std::size_t limit, std::uint64_t seed) {
  Targets t;
  if (!image_path.empty()) {
    t.ids.push_back(fs::path(image_path).stem().string());
    t.images.push_back(read_pgm(image_path));
    return t;
  }
  const Dataset ds = load_dataset(manifest);
  auto idx = split_indices(ds, split, false);
  if (limit > 0 && limit < idx.size()) {
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(idx));
    idx.resize(limit);
    std::sort(idx.begin(), idx.end());
  }
  for (auto i : idx) {
    t.ids.push_back(ds.samples[i].id);
    t.images.push_back(ds.samples[i].reverse);
    t.truth.push_back(ds.samples[i].landmark);
  }
  return t;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Characteristic landmark discovery on synthetic coin images"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  // forge
  SyntheticSpec spec;
  fs::path forge_out;
  auto* forge = app.add_subcommand("forge", "Generate the synthetic coin benchmark");
  forge->add_option("--out", forge_out, "Output directory")->required();
  forge->add_option("--parents", spec.num_parents, "Number of parent classes");
  forge->add_option("--leaves-per-parent", spec.leaves_per_parent, "Leaf classes per parent");
  forge->add_option("--images-per-leaf", spec.images_per_leaf, "Images per leaf class");
  forge->add_option("--jitter", spec.jitter, "Glyph placement jitter in pixels");
  forge->add_option("--noise", spec.noise, "Gaussian pixel noise sigma");
  forge->add_option("--distractors", spec.distractors, "Shared distractor glyphs per image");
  forge->add_option("--seed", spec.seed, "Generator seed");

  // train
  std::string train_manifest, train_task = "reverse";
  fs::path train_out;
  TrainConfig tc;
  SplitOptions train_split;
  auto* trainc = app.add_subcommand("train", "Train a classifier and write a checkpoint");
  trainc->add_option("--manifest", train_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  trainc->add_option("--task", train_task, "reverse (leaf labels) or observe (parent labels)")
      ->check(CLI::IsMember({"reverse", "observe"}));
  trainc->add_option("--out", train_out, "Checkpoint path")->required();
  trainc->add_option("--epochs", tc.epochs, "Training epochs");
  trainc->add_option("--lr", tc.learning_rate, "Initial learning rate");
  trainc->add_option("--batch", tc.batch_size, "Mini-batch size");
  trainc->add_option("--seed", tc.seed, "Initialization and shuffling seed");
  add_split_options(trainc, train_split);

  // eval
  std::string eval_manifest;
  std::vector<std::string> eval_tasks{"reverse", "observe", "hierarchy"};
  std::size_t eval_k = 5;
  std::uint64_t eval_seed = 1;
  TrainConfig ec;
  fs::path eval_report;
  auto* evalc = app.add_subcommand("eval", "k-fold evaluation of flat and hierarchical recognition");
  evalc->add_option("--manifest", eval_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  evalc->add_option("--k", eval_k, "Number of folds");
  evalc->add_option("--task", eval_tasks, "Tasks to evaluate")
      ->delimiter(',')
      ->check(CLI::IsMember({"reverse", "observe", "hierarchy"}));
  evalc->add_option("--epochs", ec.epochs, "Training epochs per fold");
  evalc->add_option("--lr", ec.learning_rate, "Initial learning rate");
  evalc->add_option("--seed", eval_seed, "Fold and training seed");
  evalc->add_option("--report", eval_report, "Also write the report to this file");

  // discover
  std::string disc_image, disc_manifest, disc_ckpt, disc_label;
  DiscoveryConfig dc;
  std::size_t disc_window = 11, disc_stride = 3, disc_limit = 0;
  std::uint64_t disc_seed = 1;
  fs::path disc_out;
  SplitOptions disc_split;
  auto* discc = app.add_subcommand("discover", "Find the characteristic landmark mask of images");
  discc->add_option("--checkpoint", disc_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  auto* disc_src = discc->add_option("--image", disc_image, "Single P5 image")->check(CLI::ExistingFile);
  discc->add_option("--manifest", disc_manifest, "Dataset manifest (reverse images)")
      ->check(CLI::ExistingFile)
      ->excludes(disc_src);
  discc->add_option("--class", disc_label, "Target label (default: the model's prediction)");
  discc->add_option("--epsilon", dc.epsilon, "Allowed probability drop, in (0, 1]");
  discc->add_option("--lambda", dc.lambda, "L1 weight");
  discc->add_option("--step", dc.step, "Initial step size");
  discc->add_option("--max-iterations", dc.max_iterations, "Iteration cap");
  discc->add_option("--window", disc_window, "Region window size");
  discc->add_option("--stride", disc_stride, "Region stride");
  discc->add_option("--limit", disc_limit, "Use at most this many manifest images (seeded sample)");
  discc->add_option("--seed", disc_seed, "Seed of the image sample");
  discc->add_option("--out", disc_out, "Output directory for reports and heatmaps")->required();
  add_split_options(discc, disc_split);

  // occlude / saliency
  std::string occ_image, occ_ckpt, occ_label;
  std::size_t occ_patch = 11, occ_stride = 3;
  std::uint64_t occ_seed = 1;
  fs::path occ_out;
  auto* occc = app.add_subcommand("occlude", "Occlusion discrepancy map of one image");
  occc->add_option("--checkpoint", occ_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  occc->add_option("--image", occ_image, "P5 image")->required()->check(CLI::ExistingFile);
  occc->add_option("--class", occ_label, "Target label (default: the model's prediction)");
  occc->add_option("--patch", occ_patch, "Occluder size");
  occc->add_option("--stride", occ_stride, "Occluder stride");
  occc->add_option("--seed", occ_seed, "Accepted for uniformity; the map is deterministic");
  occc->add_option("--out", occ_out, "Output heatmap (P5)")->required();

  std::string sal_image, sal_ckpt, sal_label;
  std::size_t sal_patch = 11;
  std::uint64_t sal_seed = 1;
  fs::path sal_out;
  auto* salc = app.add_subcommand("saliency", "Gradient saliency map of one image");
  salc->add_option("--checkpoint", sal_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  salc->add_option("--image", sal_image, "P5 image")->required()->check(CLI::ExistingFile);
  salc->add_option("--class", sal_label, "Target label (default: the model's prediction)");
  salc->add_option("--patch", sal_patch, "Box-filter size");
  salc->add_option("--seed", sal_seed, "Accepted for uniformity; the map is deterministic");
  salc->add_option("--out", sal_out, "Output heatmap (P5)")->required();

  // compare
  std::string cmp_manifest, cmp_ckpt;
  std::size_t cmp_window = 11, cmp_stride = 3, cmp_limit = 30;
  std::uint64_t cmp_seed = 1;
  fs::path cmp_report;
  SplitOptions cmp_split;
  std::vector<double> cmp_eps{0.1, 0.3, 0.5, 0.7, 1.0};
  auto* cmpc = app.add_subcommand("compare", "Sweep epsilon and compare landmarks with occlusion and ground truth");
  cmpc->add_option("--checkpoint", cmp_ckpt, "Leaf model checkpoint")->required()->check(CLI::ExistingFile);
  cmpc->add_option("--manifest", cmp_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  cmpc->add_option("--epsilon", cmp_eps, "Epsilon values")->delimiter(',');
  cmpc->add_option("--window", cmp_window, "Region window and occluder size");
  cmpc->add_option("--stride", cmp_stride, "Region and occluder stride");
  cmpc->add_option("--limit", cmp_limit, "Number of test images (seeded sample, 0 = all)");
  cmpc->add_option("--seed", cmp_seed, "Seed of the image sample");
  cmpc->add_option("--report", cmp_report, "Also write the table to this file");
  add_split_options(cmpc, cmp_split);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*forge) {
      spec.validate();
      print_config("forge", {{"out", forge_out.string()},
                             {"parents", std::to_string(spec.num_parents)},
                             {"leaves_per_parent", std::to_string(spec.leaves_per_parent)},
                             {"images_per_leaf", std::to_string(spec.images_per_leaf)},
                             {"storage_size", std::to_string(spec.storage_size)},
                             {"disc_radius", fmt(spec.disc_radius)},
                             {"jitter", std::to_string(spec.jitter)},
                             {"noise", fmt(spec.noise)},
                             {"distractors", std::to_string(spec.distractors)},
                             {"seed", std::to_string(spec.seed)}});
      const Dataset ds = generate(spec);
      write_dataset(ds, forge_out);
      write_tree(ds.tree, forge_out / "tree.json");
      std::cout << "wrote " << ds.samples.size() << " image pairs, " << ds.tree.leaf_labels.size()
                << " leaf classes, " << ds.tree.parent_labels.size() << " parent classes to "
                << forge_out.string() << "\n";
    } else if (*trainc) {
      tc.validate();
      print_config("train", {{"manifest", train_manifest},
                             {"task", train_task},
                             {"out", train_out.string()},
                             {"epochs", std::to_string(tc.epochs)},
                             {"lr", fmt(tc.learning_rate)},
                             {"lr_decay", fmt(tc.lr_decay) + " every " + std::to_string(tc.decay_every)},
                             {"batch", std::to_string(tc.batch_size)},
                             {"storage/crop", std::to_string(tc.storage_size) + "/" + std::to_string(tc.crop_size)},
                             {"seed", std::to_string(tc.seed)},
                             {"training split", train_split.folds ? "all but " + split_string(train_split)
                                                                  : split_string(train_split)}});
      const Dataset ds = load_dataset(train_manifest);
      const bool leaf = train_task == "reverse";
      const auto tr_idx = split_indices(ds, train_split, true);
      LabeledImages val;
      if (train_split.folds) {
        const auto te_idx = split_indices(ds, train_split, false);
        val = leaf ? reverse_images(ds, te_idx) : obverse_images(ds, te_idx);
      }
      const LabeledImages tr = leaf ? reverse_images(ds, tr_idx) : obverse_images(ds, tr_idx);
      Classifier model = build_model(leaf ? ds.tree.leaf_labels : ds.tree.parent_labels,
                                     {1, tc.crop_size, tc.crop_size}, tc.seed, tc.storage_size);
      train(model, tr, val, tc, [](std::size_t e, const EpochStats& s) {
        std::printf("epoch %3zu  loss %.5f  train %.4f", e + 1, s.loss, s.train_accuracy);
        if (s.val_accuracy >= 0) std::printf("  held-out %.4f", s.val_accuracy);
        std::printf("\n");
        std::fflush(stdout);
      });
      save_checkpoint(model, train_out);
      std::cout << "wrote " << train_out.string() << "\n";
    } else if (*evalc) {
      std::vector<Task> tasks;
      std::string task_list;
      for (const auto& t : eval_tasks) {
        tasks.push_back(parse_task(t));
        task_list += (task_list.empty() ? "" : ",") + t;
      }
      ec.seed = eval_seed;
      ec.validate();
      print_config("eval", {{"manifest", eval_manifest},
                            {"k", std::to_string(eval_k)},
                            {"tasks", task_list},
                            {"epochs", std::to_string(ec.epochs)},
                            {"lr", fmt(ec.learning_rate)},
                            {"batch", std::to_string(ec.batch_size)},
                            {"seed", std::to_string(eval_seed)}});
      const Dataset ds = load_dataset(eval_manifest);
      const auto reports = kfold_eval(ds, eval_k, tasks, ec, eval_seed);
      const std::string text = format_report(reports, eval_k);
      std::cout << text;
      if (!eval_report.empty()) write_text(eval_report, text);
    } else if (*discc) {
      if (disc_image.empty() && disc_manifest.empty()) {
        throw CLI::RequiredError("--image or --manifest");
      }
      dc.validate();
      print_config("discover", {{"checkpoint", disc_ckpt},
                                {"input", disc_image.empty() ? disc_manifest : disc_image},
                                {"class", disc_label.empty() ? "(model prediction)" : disc_label},
                                {"epsilon", fmt(dc.epsilon)},
                                {"lambda", fmt(dc.lambda)},
                                {"step", fmt(dc.step)},
                                {"max_iterations", std::to_string(dc.max_iterations)},
                                {"tolerance", fmt(dc.tolerance)},
                                {"regions", "grid window " + std::to_string(disc_window) + " stride " +
                                                std::to_string(disc_stride)},
                                {"images", disc_manifest.empty() ? "1" : split_string(disc_split)},
                                {"limit", std::to_string(disc_limit)},
                                {"seed", std::to_string(disc_seed)},
                                {"out", disc_out.string()}});
      if (dc.epsilon >= 1.0) {
        std::cerr << "warning: epsilon = 1 makes the confidence constraint vacuous; "
                     "the mask is limited only by the loss/L1 balance\n";
      }
      const Classifier model = load_checkpoint(disc_ckpt);
      const Targets targets = pick_targets(disc_image, disc_manifest, disc_split, disc_limit, disc_seed);
      fs::create_directories(disc_out);
      int failures = 0;
      for (std::size_t i = 0; i < targets.images.size(); ++i) {
        const Image& img = targets.images[i];
        const RegionSet regions = grid_regions(img.width, img.height, img.channels, disc_window, disc_stride);
        const std::size_t c = resolve_class(model, img, disc_label);
        const std::string& id = targets.ids[i];
        try {
          const LandmarkResult r = discover(model, img, regions, c, dc);
          write_text(disc_out / (id + ".json"), landmark_report(r, dc, c, regions));
          export_heatmap(spread_mask(regions, r.x_star), img.width, img.height, disc_out / (id + "_landmark.pgm"));
          write_pgm(r.masked, disc_out / (id + "_masked.pgm"));
          std::printf("%s  class %s  p0 %.4f  p* %.4f  L1 %.3f / %zu  iterations %zu%s\n", id.c_str(),
                      model.labels()[c].c_str(), r.p0, r.p_final, r.l1(), regions.size(), r.iterations,
                      r.converged ? "" : " (not converged)");
        } catch (const DiscoveryError& e) {
          ++failures;
          std::fprintf(stderr, "%s: %s (after %zu iterations)\n", id.c_str(), e.what(), e.trace().size());
        }
      }
      if (failures) return kExitRuntime;
    } else if (*occc || *salc) {
      const bool occ = occc->parsed();
      const std::string& ck = occ ? occ_ckpt : sal_ckpt;
      const std::string& im = occ ? occ_image : sal_image;
      const fs::path& out = occ ? occ_out : sal_out;
      std::vector<std::pair<std::string, std::string>> items{
          {"checkpoint", ck}, {"image", im}, {"class", (occ ? occ_label : sal_label).empty() ? "(model prediction)" : (occ ? occ_label : sal_label)}};
      if (occ) {
        items.emplace_back("patch", std::to_string(occ_patch));
        items.emplace_back("stride", std::to_string(occ_stride));
      } else {
        items.emplace_back("patch", std::to_string(sal_patch));
      }
      items.emplace_back("seed", std::to_string(occ ? occ_seed : sal_seed));
      items.emplace_back("out", out.string());
      print_config(occ ? "occlude" : "saliency", items);
      const Classifier model = load_checkpoint(ck);
      const Image img = read_pgm(im);
      const std::size_t c = resolve_class(model, img, occ ? occ_label : sal_label);
      const Heatmap h = occ ? occlusion_map(model, img, c, occ_patch, occ_stride)
                            : saliency_map(model, img, c, sal_patch);
      export_heatmap(h.values, h.width, h.height, out);
      std::printf("class %s  model evaluations %zu  wrote %s\n", model.labels()[c].c_str(), h.model_evaluations,
                  out.string().c_str());
    } else if (*cmpc) {
      std::vector<std::string> eps_str;
      for (double e : cmp_eps) {
        if (!(e > 0.0 && e <= 1.0)) throw CLI::ValidationError("--epsilon", "values must lie in (0, 1]");
        eps_str.push_back(fmt(e));
      }
      std::string eps_list;
      for (const auto& e : eps_str) eps_list += (eps_list.empty() ? "" : ",") + e;
      print_config("compare", {{"checkpoint", cmp_ckpt},
                               {"manifest", cmp_manifest},
                               {"epsilon", eps_list},
                               {"regions", "grid window " + std::to_string(cmp_window) + " stride " +
                                               std::to_string(cmp_stride)},
                               {"images", split_string(cmp_split)},
                               {"limit", std::to_string(cmp_limit)},
                               {"seed", std::to_string(cmp_seed)}});
      const Classifier model = load_checkpoint(cmp_ckpt);
      const Dataset ds = load_dataset(cmp_manifest);
      const Targets targets = pick_targets("", cmp_manifest, cmp_split, cmp_limit, cmp_seed);
      const Image disc = disc_mask(ds.spec);
      const RegionSet regions = grid_regions(ds.spec.storage_size, ds.spec.storage_size, 1, cmp_window, cmp_stride);

      std::vector<std::size_t> classes;
      std::vector<Heatmap> occlusion;
      double chance = 0.0, occ_evals = 0.0;
      for (std::size_t i = 0; i < targets.images.size(); ++i) {
        classes.push_back(model.predict(targets.images[i]));
        occlusion.push_back(occlusion_map(model, targets.images[i], classes.back(), cmp_window, cmp_stride));
        occ_evals += static_cast<double>(occlusion.back().model_evaluations);
        chance += chance_level(targets.truth[i], disc);
      }
      const double n_img = static_cast<double>(targets.images.size());
      chance /= n_img;
      occ_evals /= n_img;

      std::ostringstream table;
      char line[256];
      std::snprintf(line, sizeof(line), "%-7s %5s %9s %9s %8s %9s %10s %9s %9s %7s\n", "epsilon", "runs", "mean_L1",
                    "mean_p0", "mean_p*", "med_iter", "mean_evals", "rho>0", "mean_rho", "loc");
      table << line;
      for (double e : cmp_eps) {
        DiscoveryConfig cfg;
        cfg.epsilon = e;
        double l1 = 0, p0 = 0, pf = 0, rho = 0, loc = 0, evals = 0;
        std::size_t ok = 0, positive = 0;
        std::vector<double> its;
        for (std::size_t i = 0; i < targets.images.size(); ++i) {
          try {
            const LandmarkResult r = discover(model, targets.images[i], regions, classes[i], cfg);
            ++ok;
            l1 += r.l1();
            p0 += r.p0;
            pf += r.p_final;
            evals += static_cast<double>(r.model_evaluations);
            its.push_back(static_cast<double>(r.iterations));
            const Agreement a = rank_agreement(spread_mask(regions, r.x_star), occlusion[i].values);
            rho += a.rho;
            if (a.rho > 0) ++positive;
            loc += localization_score(r.x_star, regions, targets.truth[i], disc,
                                      chance_level(targets.truth[i], disc));
          } catch (const DiscoveryError&) {
          }
        }
        const double k = ok ? static_cast<double>(ok) : 1.0;
        std::snprintf(line, sizeof(line), "%-7s %5zu %9.3f %9.4f %8.4f %9.1f %10.1f %4zu/%-4zu %9.4f %7.4f\n",
                      fmt(e).c_str(), ok, l1 / k, p0 / k, pf / k, median(its), evals / k, positive, ok, rho / k,
                      loc / k);
        table << line;
      }
      std::snprintf(line, sizeof(line), "regions K = %zu; occlusion evaluations per image %.1f; chance localization %.4f\n",
                    regions.size(), occ_evals, chance);
      table << line;
      std::cout << table.str();
      if (!cmp_report.empty()) write_text(cmp_report, table.str());
    }
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
