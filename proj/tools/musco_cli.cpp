/* Copyright 2026 The musco-cpp Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// musco: command-line front end for analysis, compression and data tools.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "musco/musco.hpp"

namespace fs = std::filesystem;
using namespace musco;

namespace {

ModelGraph zoo_model(const std::string& name, std::size_t image, std::size_t classes) {
  if (name == "vgg16") return vgg16_conv_stack(image ? image : 224);
  if (name == "resnet-stem") return resnet_stem(image ? image : 224);
  if (name == "toy") return toy_cnn(image ? image : 28, 32, 128, classes);
  throw std::invalid_argument("unknown zoo model '" + name + "' (vgg16, resnet-stem, toy)");
}

void write_text(const std::string& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void check_input_shape(const ModelGraph& g, const Dataset& d, const std::string& what) {
  if (g.input.h != d.shape.h || g.input.w != d.shape.w || g.input.c != d.shape.c)
    throw std::invalid_argument(what + " has images of " + act_string(d.shape) + ", model expects " +
                                act_string(g.input));
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw std::invalid_argument(what + " not given");
  if (!fs::is_regular_file(path)) throw std::runtime_error(what + " '" + path + "' does not exist");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative low-rank compression of convolutional networks"};
  app.require_subcommand(1);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Per-layer parameter and MAC table");
  std::string an_model, an_zoo;
  std::size_t an_image = 0;
  bool an_json = false;
  auto* an_model_opt = analyze->add_option("--model", an_model, "Model manifest");
  analyze->add_option("--zoo", an_zoo, "Built-in model: vgg16, resnet-stem, toy")->excludes(an_model_opt);
  analyze->add_option("--image", an_image, "Input size for built-in models");
  analyze->add_flag("--json", an_json, "Machine-readable output");

  // compress
  auto* compress = app.add_subcommand("compress", "Run the multi-stage compress / fine-tune loop");
  std::string cp_config, cp_model, cp_out_dir;
  std::optional<std::uint64_t> cp_seed;
  compress->add_option("--config", cp_config, "Run configuration (JSON)")->required();
  compress->add_option("--model", cp_model, "Input model manifest")->required();
  compress->add_option("--seed", cp_seed, "Overrides the config seed");
  compress->add_option("--out-dir", cp_out_dir, "Directory for the compressed model and report");

  // evbmf
  auto* evbmf = app.add_subcommand("evbmf", "Rank estimate of a matrix");
  std::string ev_matrix;
  bool ev_json = false;
  evbmf->add_option("--matrix", ev_matrix, "Text matrix: 'rows cols' then entries")->required();
  evbmf->add_flag("--json", ev_json, "Machine-readable output");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic IDX image classification set");
  SyntheticSpec gs;
  std::uint64_t gen_seed = 0;
  std::string gen_dir = ".", gen_prefix = "train";
  gen->add_option("--out-dir", gen_dir, "Output directory");
  gen->add_option("--prefix", gen_prefix, "File prefix: <prefix>-images.idx, <prefix>-labels.idx");
  gen->add_option("--classes", gs.classes)->check(CLI::Range(1, 256));
  gen->add_option("--samples", gs.samples)->check(CLI::PositiveNumber);
  gen->add_option("--size", gs.size, "Image side length")->check(CLI::PositiveNumber);
  gen->add_option("--contrast", gs.contrast);
  gen->add_option("--noise", gs.noise);
  gen->add_option("--split", gs.split, "Split index; splits share class templates");
  gen->add_option("--seed", gen_seed);

  // eval
  auto* eval = app.add_subcommand("eval", "Accuracy of a model on an IDX set");
  std::string ev_model, ev_images, ev_labels;
  bool ev_out_json = false;
  eval->add_option("--model", ev_model)->required();
  eval->add_option("--images", ev_images)->required();
  eval->add_option("--labels", ev_labels)->required();
  eval->add_flag("--json", ev_out_json);

  // init-model
  auto* init = app.add_subcommand("init-model", "Write a randomly initialized built-in model");
  std::string in_zoo = "toy", in_out;
  std::size_t in_image = 0, in_classes = 10;
  std::uint64_t in_seed = 0;
  init->add_option("--zoo", in_zoo);
  init->add_option("--image", in_image);
  init->add_option("--classes", in_classes);
  init->add_option("--seed", in_seed);
  init->add_option("--out", in_out, "Output manifest")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a model with momentum SGD");
  std::string tr_model, tr_images, tr_labels, tr_eval_images, tr_eval_labels, tr_out;
  TrainConfig tc;
  tc.epochs = 5;
  train->add_option("--model", tr_model)->required();
  train->add_option("--images", tr_images)->required();
  train->add_option("--labels", tr_labels)->required();
  train->add_option("--eval-images", tr_eval_images);
  train->add_option("--eval-labels", tr_eval_labels);
  train->add_option("--epochs", tc.epochs);
  train->add_option("--lr", tc.learning_rate);
  train->add_option("--momentum", tc.momentum);
  train->add_option("--batch-size", tc.batch_size);
  train->add_option("--weight-decay", tc.weight_decay);
  train->add_option("--patience", tc.patience);
  train->add_option("--seed", tc.seed);
  train->add_option("--out", tr_out, "Output manifest")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*analyze) {
      if (an_model.empty() && an_zoo.empty()) throw std::invalid_argument("analyze needs --model or --zoo");
      const ModelGraph g = an_zoo.empty() ? load_model(an_model) : zoo_model(an_zoo, an_image, 10);
      const nlohmann::json a = analyze_model(g);
      std::cout << (an_json ? a.dump(2) + "\n" : format_analysis(a));
    } else if (*compress) {
      // Everything is read before anything is written.
      RunConfig rc = load_run_config(cp_config);
      if (cp_seed) {
        rc.musco.finetune.seed = *cp_seed;
        rc.musco.cp.seed = *cp_seed;
      }
      if (!cp_out_dir.empty()) {
        rc.output_model = (fs::path(cp_out_dir) / fs::path(rc.output_model).filename()).string();
        rc.output_report = (fs::path(cp_out_dir) / fs::path(rc.output_report).filename()).string();
      }
      const ModelGraph model = load_model(cp_model);
      Dataset train_set, eval_set;
      if (rc.musco.finetune.epochs > 0) {
        require_file(rc.train_images, "train_images");
        require_file(rc.train_labels, "train_labels");
      }
      if (!rc.train_images.empty() || !rc.train_labels.empty()) {
        require_file(rc.train_images, "train_images");
        require_file(rc.train_labels, "train_labels");
        train_set = load_idx(rc.train_images, rc.train_labels);
        check_input_shape(model, train_set, "train set");
      }
      if (!rc.eval_images.empty() || !rc.eval_labels.empty()) {
        require_file(rc.eval_images, "eval_images");
        require_file(rc.eval_labels, "eval_labels");
        eval_set = load_idx(rc.eval_images, rc.eval_labels);
        check_input_shape(model, eval_set, "eval set");
      }
      if (rc.musco.finetune.epochs > 0 && eval_set.size() == 0) eval_set = train_set;

      const MuscoResult r = musco_run(model, train_set, eval_set, rc.musco);
      for (const auto& p : {rc.output_model, rc.output_report}) {
        const fs::path dir = fs::path(p).parent_path();
        if (!dir.empty()) fs::create_directories(dir);
      }
      save_model(r.graph, rc.output_model);
      write_text(rc.output_report, report_to_json(r.report).dump(2) + "\n");
      std::printf("%s: %zu -> %zu params (%.2fx), %zu -> %zu MACs (%.2fx), stop: %s\n",
                  r.report.run_name.c_str(), r.report.original_params, r.report.final_params,
                  r.report.global_param_ratio(), r.report.original_macs, r.report.final_macs,
                  r.report.global_flop_ratio(), r.report.stop_reason.c_str());
      if (r.report.final_accuracy)
        std::printf("accuracy: %.4f -> %.4f\n", *r.report.baseline_accuracy, *r.report.final_accuracy);
      std::printf("wrote %s, %s\n", rc.output_model.c_str(), rc.output_report.c_str());
    } else if (*evbmf) {
      const EVBMFEstimate e = evbmf_rank(read_matrix_text(ev_matrix));
      if (ev_json)
        std::cout << evbmf_to_json(e).dump(2) << "\n";
      else
        std::printf("rank %zu\nnoise_variance %.6g\nthreshold %.6g\n", e.rank, e.noise_variance, e.threshold);
    } else if (*gen) {
      fs::create_directories(gen_dir);
      const std::string img = (fs::path(gen_dir) / (gen_prefix + "-images.idx")).string();
      const std::string lab = (fs::path(gen_dir) / (gen_prefix + "-labels.idx")).string();
      write_synthetic(gen_synthetic(gs, gen_seed), img, lab);
      std::printf("wrote %zu samples of %zux%zu, %zu classes: %s %s\n", gs.samples, gs.size, gs.size,
                  gs.classes, img.c_str(), lab.c_str());
    } else if (*eval) {
      const ModelGraph g = load_model(ev_model);
      const Dataset d = load_idx(ev_images, ev_labels);
      check_input_shape(g, d, "eval set");
      const EvalResult r = evaluate(g, d);
      if (ev_out_json)
        std::cout << nlohmann::json{{"accuracy", r.accuracy}, {"loss", r.loss}, {"samples", d.size()}}.dump(2)
                  << "\n";
      else
        std::printf("accuracy %.4f\nloss %.6f\nsamples %zu\n", r.accuracy, r.loss, d.size());
    } else if (*init) {
      ModelGraph g = zoo_model(in_zoo, in_image, in_classes);
      init_weights(g, in_seed);
      save_model(g, in_out);
      std::printf("wrote %s (%zu params)\n", in_out.c_str(), count_params(g).total());
    } else if (*train) {
      const ModelGraph g = load_model(tr_model);
      const Dataset d = load_idx(tr_images, tr_labels);
      check_input_shape(g, d, "train set");
      const Dataset e = tr_eval_images.empty() ? d : load_idx(tr_eval_images, tr_eval_labels);
      check_input_shape(g, e, "eval set");
      const FineTuneResult r = fine_tune(g, d, e, tc);
      for (std::size_t k = 0; k < r.history.epochs(); ++k)
        std::printf("epoch %zu  loss %.4f  train %.4f  eval %.4f\n", k + 1, r.history.train_loss[k],
                    r.history.train_accuracy[k], r.history.eval_accuracy[k]);
      save_model(r.graph, tr_out);
      std::printf("wrote %s (eval accuracy %.4f)\n", tr_out.c_str(), evaluate(r.graph, e).accuracy);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
