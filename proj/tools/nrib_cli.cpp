// Command-line front end. Talks to the library exclusively through the
// public C API; structured records go to stdout (one JSON per line), human
// summaries to stderr.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nrib/nrib.h"

namespace {

using nlohmann::json;

[[noreturn]] void die(const std::string& what) {
  std::fprintf(stderr, "error: %s: %s\n", what.c_str(), nrib_last_error());
  std::exit(1);
}

std::string take_string(char* s) {
  std::string out = s ? s : "";
  nrib_string_free(s);
  return out;
}

struct DatasetHandle {
  nrib_dataset* ptr = nullptr;
  ~DatasetHandle() { nrib_dataset_free(ptr); }
};

struct ModelHandle {
  nrib_model* ptr = nullptr;
  ~ModelHandle() { nrib_model_free(ptr); }
};

void print_dataset_info(const nrib_dataset* ds) {
  char* info = nullptr;
  if (nrib_dataset_info(ds, &info) != NRIB_OK) die("dataset info");
  std::string text = take_string(info);
  std::printf("%s\n", text.c_str());
  json j = json::parse(text);
  std::fprintf(stderr, "%s dataset: %lld examples, %d classes, %lld train / %lld val / %lld test",
               j["mode"].get<std::string>().c_str(), j["num_examples"].get<long long>(),
               j["num_classes"].get<int>(), j["train"].get<long long>(),
               j["val"].get<long long>(), j["test"].get<long long>());
  if (j["train_noise_rate"].get<double>() > 0) {
    std::fprintf(stderr, ", %.1f%% train noise", 100.0 * j["train_noise_rate"].get<double>());
  }
  std::fprintf(stderr, "\n");
}

std::vector<double> parse_epsilons(const std::string& csv) {
  std::vector<double> out;
  size_t pos = 0;
  while (pos < csv.size()) {
    size_t comma = csv.find(',', pos);
    if (comma == std::string::npos) comma = csv.size();
    out.push_back(std::stod(csv.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nrib: dual-encoder information-bottleneck training under label noise"};
  app.require_subcommand(1);

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "synthesize a blobs or SBM dataset");
  std::string gen_kind = "blobs", gen_out;
  int gen_classes = 4, gen_dim = 8, gen_n = 2000, gen_comms = 4, gen_npc = 100;
  double gen_sep = 4.5, gen_pin = 0.1, gen_pout = 0.01;
  unsigned long long gen_seed = 1;
  gen->add_option("--kind", gen_kind, "blobs|sbm")->check(CLI::IsMember({"blobs", "sbm"}));
  gen->add_option("--classes", gen_classes, "classes (blobs)");
  gen->add_option("--dim", gen_dim, "feature dimension");
  gen->add_option("--n", gen_n, "examples (blobs)");
  gen->add_option("--separation", gen_sep, "cluster separation (blobs)");
  gen->add_option("--communities", gen_comms, "communities (sbm)");
  gen->add_option("--nodes-per-community", gen_npc, "nodes per community (sbm)");
  gen->add_option("--p-in", gen_pin, "within-community edge probability (sbm)");
  gen->add_option("--p-out", gen_pout, "cross-community edge probability (sbm)");
  gen->add_option("--seed", gen_seed, "rng seed");
  gen->add_option("--out", gen_out, "output dataset path")->required();

  // inject-noise
  auto* inj = app.add_subcommand("inject-noise", "corrupt train labels via a transition matrix");
  std::string inj_kind = "symmetric", inj_in, inj_out;
  double inj_rate = 0.4;
  unsigned long long inj_seed = 1;
  inj->add_option("--kind", inj_kind, "symmetric|pair")
      ->check(CLI::IsMember({"symmetric", "pair"}));
  inj->add_option("--rate", inj_rate, "noise rate")->required();
  inj->add_option("--seed", inj_seed, "rng seed");
  inj->add_option("--in", inj_in, "input dataset")->required();
  inj->add_option("--out", inj_out, "output dataset")->required();

  // train
  auto* tr = app.add_subcommand("train", "run the three-phase training pipeline");
  std::string tr_config, tr_data, tr_outdir, tr_variant = "full", tr_ablate;
  bool tr_dump = false;
  tr->add_option("--config", tr_config, "config file")->required();
  tr->add_option("--data", tr_data, "dataset path")->required();
  tr->add_option("--out-dir", tr_outdir, "output directory")->required();
  tr->add_option("--variant", tr_variant, "full|no-ki|no-rt|baseline");
  tr->add_option("--ablate", tr_ablate, "no-ki|no-rt (shorthand for --variant)");
  tr->add_flag("--dump-selection", tr_dump, "write per-epoch selection masks and scores");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "accuracy of a trained checkpoint");
  std::string ev_model, ev_data, ev_split = "test";
  ev->add_option("--model", ev_model, "checkpoint path")->required();
  ev->add_option("--data", ev_data, "dataset path")->required();
  ev->add_option("--split", ev_split, "train|val|test");

  // attack-eval
  auto* at = app.add_subcommand("attack-eval", "FGSM sweep on the test split");
  std::string at_model, at_data, at_eps = "0.05,0.1,0.2";
  at->add_option("--model", at_model, "checkpoint path")->required();
  at->add_option("--data", at_data, "dataset path")->required();
  at->add_option("--epsilons", at_eps, "comma-separated perturbation strengths");

  // verify-bounds
  auto* vb = app.add_subcommand("verify-bounds", "discrete-oracle bound suite");
  int vb_trials = 1000;
  unsigned long long vb_seed = 1;
  vb->add_option("--trials", vb_trials, "random joints per inequality");
  vb->add_option("--seed", vb_seed, "rng seed");

  // plot
  auto* pl = app.add_subcommand("plot", "render SVG plots from a metric history");
  std::string pl_history, pl_outdir;
  pl->add_option("--history", pl_history, "metrics.jsonl path")->required();
  pl->add_option("--out-dir", pl_outdir, "output directory")->required();

  // experiment
  auto* ex = app.add_subcommand("experiment", "multi-seed benchmark vs the baseline");
  std::string ex_config, ex_kind = "blobs", ex_noise_kind = "symmetric", ex_eps, ex_report;
  int ex_classes = 4, ex_dim = 8, ex_n = 2000, ex_comms = 4, ex_npc = 100, ex_seeds = 5;
  double ex_sep = 4.5, ex_pin = 0.1, ex_pout = 0.01, ex_rate = 0.4;
  bool ex_ablations = false;
  ex->add_option("--config", ex_config, "config file")->required();
  ex->add_option("--data-kind", ex_kind, "blobs|sbm")->check(CLI::IsMember({"blobs", "sbm"}));
  ex->add_option("--classes", ex_classes, "classes (blobs)");
  ex->add_option("--dim", ex_dim, "feature dimension");
  ex->add_option("--n", ex_n, "examples (blobs)");
  ex->add_option("--separation", ex_sep, "cluster separation (blobs)");
  ex->add_option("--communities", ex_comms, "communities (sbm)");
  ex->add_option("--nodes-per-community", ex_npc, "nodes per community (sbm)");
  ex->add_option("--p-in", ex_pin, "within-community edge probability (sbm)");
  ex->add_option("--p-out", ex_pout, "cross-community edge probability (sbm)");
  ex->add_option("--noise-kind", ex_noise_kind, "symmetric|pair");
  ex->add_option("--noise-rate", ex_rate, "train label noise rate");
  ex->add_option("--seeds", ex_seeds, "number of seeds");
  ex->add_flag("--ablations", ex_ablations, "also run no-ki / no-rt variants");
  ex->add_option("--epsilons", ex_eps, "optional FGSM sweep, comma-separated");
  ex->add_option("--report", ex_report, "optional path for the JSON report");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    DatasetHandle ds;
    int rc = gen_kind == "blobs"
                 ? nrib_generate_blobs(gen_classes, gen_dim, gen_n, gen_sep, gen_seed, &ds.ptr)
                 : nrib_generate_sbm(gen_comms, gen_npc, gen_pin, gen_pout, gen_dim, gen_seed,
                                     &ds.ptr);
    if (rc != NRIB_OK) die("generate-data");
    if (nrib_dataset_save(ds.ptr, gen_out.c_str()) != NRIB_OK) die("save dataset");
    print_dataset_info(ds.ptr);
    std::fprintf(stderr, "wrote %s\n", gen_out.c_str());
    return 0;
  }

  if (inj->parsed()) {
    DatasetHandle ds;
    if (nrib_dataset_load(inj_in.c_str(), &ds.ptr) != NRIB_OK) die("load dataset");
    if (nrib_inject_noise(ds.ptr, inj_kind.c_str(), inj_rate, inj_seed) != NRIB_OK) {
      die("inject-noise");
    }
    if (nrib_dataset_save(ds.ptr, inj_out.c_str()) != NRIB_OK) die("save dataset");
    print_dataset_info(ds.ptr);
    std::fprintf(stderr, "wrote %s\n", inj_out.c_str());
    return 0;
  }

  if (tr->parsed()) {
    if (!tr_ablate.empty()) tr_variant = tr_ablate;
    DatasetHandle ds;
    if (nrib_dataset_load(tr_data.c_str(), &ds.ptr) != NRIB_OK) die("load dataset");
    char* summary = nullptr;
    if (nrib_train(ds.ptr, tr_config.c_str(), tr_variant.c_str(), tr_dump ? 1 : 0,
                   tr_outdir.c_str(), &summary) != NRIB_OK) {
      die("train");
    }
    std::string text = take_string(summary);
    std::printf("%s\n", text.c_str());
    json j = json::parse(text);
    std::fprintf(stderr, "trained %s for %lld epochs: test acc S=%.4f T=%.4f (report %s)\n",
                 tr_variant.c_str(), j["epochs"].get<long long>(), j["test_acc_s"].get<double>(),
                 j["test_acc_t"].get<double>(), j["report_branch"].get<std::string>().c_str());
    return 0;
  }

  if (ev->parsed()) {
    DatasetHandle ds;
    ModelHandle m;
    if (nrib_dataset_load(ev_data.c_str(), &ds.ptr) != NRIB_OK) die("load dataset");
    if (nrib_model_load(ev_model.c_str(), &m.ptr) != NRIB_OK) die("load model");
    char* out = nullptr;
    if (nrib_evaluate(m.ptr, ds.ptr, ev_split.c_str(), &out) != NRIB_OK) die("evaluate");
    std::string text = take_string(out);
    std::printf("%s\n", text.c_str());
    json j = json::parse(text);
    std::fprintf(stderr, "%s accuracy: S=%.4f T=%.4f report(%s)=%.4f\n", ev_split.c_str(),
                 j["acc_s"].get<double>(), j["acc_t"].get<double>(),
                 j["report_branch"].get<std::string>().c_str(), j["acc_report"].get<double>());
    return 0;
  }

  if (at->parsed()) {
    DatasetHandle ds;
    ModelHandle m;
    if (nrib_dataset_load(at_data.c_str(), &ds.ptr) != NRIB_OK) die("load dataset");
    if (nrib_model_load(at_model.c_str(), &m.ptr) != NRIB_OK) die("load model");
    std::vector<double> eps = parse_epsilons(at_eps);
    if (eps.empty() || eps.front() != 0.0) eps.insert(eps.begin(), 0.0);
    char* out = nullptr;
    if (nrib_attack_eval(m.ptr, ds.ptr, eps.data(), static_cast<int>(eps.size()), &out) !=
        NRIB_OK) {
      die("attack-eval");
    }
    std::string text = take_string(out);
    json j = json::parse(text);
    std::fprintf(stderr, "%-10s %s\n", "epsilon", "accuracy");
    for (const auto& row : j) {
      std::printf("%s\n", row.dump().c_str());
      std::fprintf(stderr, "%-10.3f %.4f\n", row["epsilon"].get<double>(),
                   row["accuracy"].get<double>());
    }
    return 0;
  }

  if (vb->parsed()) {
    char* out = nullptr;
    int rc = nrib_verify_bounds(vb_trials, vb_seed, &out);
    if (out == nullptr) die("verify-bounds");
    std::string text = take_string(out);
    json j = json::parse(text);
    std::fprintf(stderr, "%-28s %-8s %-14s %s\n", "inequality", "trials", "min_slack", "pass");
    for (const auto& row : j) {
      std::printf("%s\n", row.dump().c_str());
      std::fprintf(stderr, "%-28s %-8d %-14.3e %s\n",
                   row["inequality"].get<std::string>().c_str(), row["trials"].get<int>(),
                   row["min_slack"].get<double>(), row["pass"].get<bool>() ? "yes" : "NO");
    }
    return rc == NRIB_OK ? 0 : 1;
  }

  if (pl->parsed()) {
    if (nrib_emit_plots(pl_history.c_str(), pl_outdir.c_str()) != NRIB_OK) die("plot");
    std::fprintf(stderr, "wrote plots to %s\n", pl_outdir.c_str());
    return 0;
  }

  if (ex->parsed()) {
    json spec;
    spec["data_kind"] = ex_kind;
    spec["num_classes"] = ex_classes;
    spec["dim"] = ex_dim;
    spec["n"] = ex_n;
    spec["separation"] = ex_sep;
    spec["communities"] = ex_comms;
    spec["nodes_per_community"] = ex_npc;
    spec["p_in"] = ex_pin;
    spec["p_out"] = ex_pout;
    spec["noise_kind"] = ex_noise_kind;
    spec["noise_rate"] = ex_rate;
    spec["seeds"] = ex_seeds;
    spec["ablations"] = ex_ablations;
    if (!ex_eps.empty()) spec["fgsm_epsilons"] = parse_epsilons(ex_eps);

    char* out = nullptr;
    if (nrib_run_experiment(ex_config.c_str(), spec.dump().c_str(), &out) != NRIB_OK) {
      die("experiment");
    }
    std::string text = take_string(out);
    json j = json::parse(text);
    for (const auto& row : j["rows"]) std::printf("%s\n", row.dump().c_str());
    std::fprintf(stderr, "%-10s %-10s %-10s %s\n", "name", "mean", "std", "n_seeds");
    for (const auto& row : j["rows"]) {
      std::fprintf(stderr, "%-10s %-10.4f %-10.4f %lld\n",
                   row["name"].get<std::string>().c_str(), row["mean"].get<double>(),
                   row["std"].get<double>(), row["n_seeds"].get<long long>());
    }
    if (j.contains("fgsm")) {
      for (const auto& sweep : j["fgsm"]) {
        std::fprintf(stderr, "fgsm %s:", sweep["name"].get<std::string>().c_str());
        for (const auto& pt : sweep["points"]) {
          std::fprintf(stderr, "  eps=%.2f acc=%.4f", pt["epsilon"].get<double>(),
                       pt["mean"].get<double>());
        }
        std::fprintf(stderr, "\n");
      }
    }
    if (!ex_report.empty()) {
      FILE* f = std::fopen(ex_report.c_str(), "w");
      if (!f) {
        std::fprintf(stderr, "error: cannot write %s\n", ex_report.c_str());
        return 1;
      }
      std::fputs(j.dump(2).c_str(), f);
      std::fclose(f);
      std::fprintf(stderr, "wrote %s\n", ex_report.c_str());
    }
    return 0;
  }

  return 0;
}
