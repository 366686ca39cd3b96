#include "nrib/nrib.h"

#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "datamodel.hpp"
#include "harness.hpp"
#include "model.hpp"
#include "noisegen.hpp"
#include "rng.hpp"
#include "trainer.hpp"

struct nrib_dataset {
  nrib::Dataset ds;
};

struct nrib_model {
  nrib::model::TrainState state;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const std::invalid_argument& ex) {
    g_last_error = ex.what();
    return NRIB_ERR_INVALID_ARGUMENT;
  } catch (const std::exception& ex) {
    g_last_error = ex.what();
    return NRIB_ERR_RUNTIME;
  }
}

int require_args(bool ok, const char* msg) {
  if (!ok) {
    g_last_error = msg;
    return NRIB_ERR_INVALID_ARGUMENT;
  }
  return NRIB_OK;
}

}  // namespace

extern "C" {

const char* nrib_version(void) { return "0.1.0"; }

const char* nrib_last_error(void) { return g_last_error.c_str(); }

void nrib_string_free(char* s) { delete[] s; }

int nrib_generate_blobs(int num_classes, int dim, int n, double separation,
                        unsigned long long seed, nrib_dataset** out) {
  if (int rc = require_args(out != nullptr, "out must not be null")) return rc;
  return guarded([&] {
    auto* h = new nrib_dataset{nrib::harness::generate_blobs(num_classes, dim, n, separation,
                                                             seed)};
    *out = h;
    return NRIB_OK;
  });
}

int nrib_generate_sbm(int communities, int nodes_per_community, double p_in, double p_out,
                      int feature_dim, unsigned long long seed, nrib_dataset** out) {
  if (int rc = require_args(out != nullptr, "out must not be null")) return rc;
  return guarded([&] {
    auto* h = new nrib_dataset{nrib::harness::generate_sbm_graph(
        communities, nodes_per_community, p_in, p_out, feature_dim, seed)};
    *out = h;
    return NRIB_OK;
  });
}

int nrib_dataset_load(const char* path, nrib_dataset** out) {
  if (int rc = require_args(path && out, "path and out must not be null")) return rc;
  return guarded([&] {
    auto* h = new nrib_dataset{nrib::load_dataset(path)};
    *out = h;
    return NRIB_OK;
  });
}

int nrib_dataset_save(const nrib_dataset* ds, const char* path) {
  if (int rc = require_args(ds && path, "dataset and path must not be null")) return rc;
  return guarded([&] {
    nrib::save_dataset(ds->ds, path);
    return NRIB_OK;
  });
}

int nrib_dataset_info(const nrib_dataset* ds, char** json_out) {
  if (int rc = require_args(ds && json_out, "dataset and json_out must not be null")) return rc;
  return guarded([&] {
    nlohmann::json j;
    j["mode"] = nrib::mode_name(ds->ds.mode);
    j["num_examples"] = ds->ds.num_examples();
    j["feature_dim"] = ds->ds.feature_dim();
    j["num_classes"] = ds->ds.num_classes;
    j["num_edges"] = ds->ds.edges.size();
    j["train"] = ds->ds.train_indices().size();
    j["val"] = ds->ds.val_indices().size();
    j["test"] = ds->ds.test_indices().size();
    nrib::harness::NoiseStats st = nrib::harness::dataset_noise_stats(ds->ds);
    j["noisy_train_examples"] = st.noisy_train_examples;
    j["train_noise_rate"] = st.noise_rate;
    *json_out = dup_string(j.dump());
    return NRIB_OK;
  });
}

int nrib_inject_noise(nrib_dataset* ds, const char* kind, double rate, unsigned long long seed) {
  if (int rc = require_args(ds && kind, "dataset and kind must not be null")) return rc;
  return guarded([&] {
    auto tm = nrib::noisegen::build_transition_matrix(kind, rate, ds->ds.num_classes);
    nrib::noisegen::inject_noise(ds->ds, tm, seed);
    return NRIB_OK;
  });
}

void nrib_dataset_free(nrib_dataset* ds) { delete ds; }

int nrib_train(const nrib_dataset* ds, const char* config_path, const char* variant,
               int dump_selection, const char* out_dir, char** summary_json_out) {
  if (int rc = require_args(ds && config_path && variant && out_dir,
                            "dataset, config_path, variant and out_dir must not be null")) {
    return rc;
  }
  return guarded([&] {
    nrib::Config cfg = nrib::load_config(config_path);
    nrib::trainer::Variant var = nrib::trainer::variant_from_name(variant);
    nrib::trainer::TrainResult res = nrib::trainer::train(ds->ds, cfg, var);
    nrib::harness::enrich_history(res.history, ds->ds);

    std::filesystem::create_directories(out_dir);
    const std::string checkpoint = std::string(out_dir) + "/checkpoint.nrib";
    const std::string metrics = std::string(out_dir) + "/metrics.jsonl";
    nrib::model::save_checkpoint(res.state, checkpoint);
    nrib::harness::write_history(res.history, metrics);
    if (dump_selection) {
      nrib::harness::write_selection_dump(res.history, std::string(out_dir) + "/selection.jsonl");
    }

    if (summary_json_out) {
      nlohmann::json j;
      j["variant"] = variant;
      j["epochs"] = res.history.size();
      j["checkpoint"] = checkpoint;
      j["metrics"] = metrics;
      nrib::harness::EvalResult ev = nrib::harness::evaluate(res.state, ds->ds, "test");
      j["test_acc_s"] = ev.acc_s;
      j["test_acc_t"] = ev.acc_t;
      j["test_acc_report"] = ev.acc_report;
      j["report_branch"] = ev.report_branch;
      *summary_json_out = dup_string(j.dump());
    }
    return NRIB_OK;
  });
}

int nrib_model_load(const char* path, nrib_model** out) {
  if (int rc = require_args(path && out, "path and out must not be null")) return rc;
  return guarded([&] {
    auto* h = new nrib_model{nrib::model::load_checkpoint(path)};
    *out = h;
    return NRIB_OK;
  });
}

int nrib_model_save(const nrib_model* m, const char* path) {
  if (int rc = require_args(m && path, "model and path must not be null")) return rc;
  return guarded([&] {
    nrib::model::save_checkpoint(m->state, path);
    return NRIB_OK;
  });
}

void nrib_model_free(nrib_model* m) { delete m; }

int nrib_evaluate(nrib_model* m, const nrib_dataset* ds, const char* split, char** json_out) {
  if (int rc = require_args(m && ds && split && json_out,
                            "model, dataset, split and json_out must not be null")) {
    return rc;
  }
  return guarded([&] {
    nrib::harness::EvalResult ev = nrib::harness::evaluate(m->state, ds->ds, split);
    nlohmann::json j;
    j["split"] = split;
    j["acc_s"] = ev.acc_s;
    j["acc_t"] = ev.acc_t;
    j["acc_report"] = ev.acc_report;
    j["report_branch"] = ev.report_branch;
    *json_out = dup_string(j.dump());
    return NRIB_OK;
  });
}

int nrib_attack_eval(nrib_model* m, const nrib_dataset* ds, const double* epsilons, int n_eps,
                     char** json_out) {
  if (int rc = require_args(m && ds && epsilons && n_eps > 0 && json_out,
                            "model, dataset, epsilons and json_out must not be null")) {
    return rc;
  }
  return guarded([&] {
    std::vector<double> eps(epsilons, epsilons + n_eps);
    auto points = nrib::harness::attack_eval(m->state, ds->ds, eps);
    nlohmann::json j = nlohmann::json::array();
    for (const auto& p : points) {
      j.push_back({{"epsilon", p.epsilon}, {"accuracy", p.accuracy}});
    }
    *json_out = dup_string(j.dump());
    return NRIB_OK;
  });
}

int nrib_verify_bounds(int trials, unsigned long long seed, char** json_out) {
  if (int rc = require_args(json_out != nullptr, "json_out must not be null")) return rc;
  return guarded([&]() -> int {
    auto checks = nrib::harness::verify_bounds(trials, seed);
    nlohmann::json j = nlohmann::json::array();
    bool all_pass = true;
    for (const auto& c : checks) {
      j.push_back({{"inequality", c.name},
                   {"trials", c.trials},
                   {"min_slack", c.min_slack},
                   {"pass", c.pass}});
      all_pass = all_pass && c.pass;
    }
    *json_out = dup_string(j.dump());
    if (!all_pass) {
      g_last_error = "one or more bound checks failed";
      return NRIB_ERR_RUNTIME;
    }
    return NRIB_OK;
  });
}

int nrib_emit_plots(const char* history_path, const char* out_dir) {
  if (int rc = require_args(history_path && out_dir,
                            "history_path and out_dir must not be null")) {
    return rc;
  }
  return guarded([&] {
    auto history = nrib::harness::read_history(history_path);
    // Phase boundaries recovered from the records themselves.
    nrib::PhaseSchedule sch{0, 0, 0};
    for (const auto& r : history) {
      if (r.phase == nrib::trainer::Phase::kWarmup) sch.epochs_warmup += 1;
      if (r.phase == nrib::trainer::Phase::kInjection) sch.epochs_injection += 1;
      if (r.phase == nrib::trainer::Phase::kRobust) sch.epochs_robust += 1;
    }
    nrib::harness::emit_plots(history, sch, out_dir);
    return NRIB_OK;
  });
}

int nrib_run_experiment(const char* config_path, const char* spec_json,
                        char** report_json_out) {
  if (int rc = require_args(config_path && spec_json && report_json_out,
                            "config_path, spec_json and report_json_out must not be null")) {
    return rc;
  }
  return guarded([&] {
    nrib::Config cfg = nrib::load_config(config_path);
    nlohmann::json spec = nlohmann::json::parse(spec_json);
    nrib::harness::ExperimentSpec es;
    es.data_kind = spec.value("data_kind", es.data_kind);
    es.num_classes = spec.value("num_classes", es.num_classes);
    es.dim = spec.value("dim", es.dim);
    es.n = spec.value("n", es.n);
    es.separation = spec.value("separation", es.separation);
    es.communities = spec.value("communities", es.communities);
    es.nodes_per_community = spec.value("nodes_per_community", es.nodes_per_community);
    es.p_in = spec.value("p_in", es.p_in);
    es.p_out = spec.value("p_out", es.p_out);
    es.noise_kind = spec.value("noise_kind", es.noise_kind);
    es.noise_rate = spec.value("noise_rate", es.noise_rate);
    es.seeds = spec.value("seeds", es.seeds);
    es.ablations = spec.value("ablations", es.ablations);
    es.fgsm_epsilons = spec.value("fgsm_epsilons", es.fgsm_epsilons);
    nlohmann::json report = nrib::harness::run_experiment(cfg, es);
    *report_json_out = dup_string(report.dump());
    return NRIB_OK;
  });
}

}  // extern "C"
