// chronocon: synthetic-cohort generation, chronological contrastive
// pretraining, fine-tuning, evaluation, and label-efficiency sweeps.
//
// Subcommands: generate, split, pretrain, finetune, predict, evaluate,
// sweep, analyze-embeddings, report, pairing dump, loss eval.
// Global flags: --seed, --jobs, --out-dir. CHRONOCON_THREADS caps internal
// parallelism (bootstrap workers).

#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdint>
#include <deque>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "chronocon/analysis.hpp"
#include "chronocon/cohort.hpp"
#include "chronocon/config.hpp"
#include "chronocon/csv.hpp"
#include "chronocon/losses.hpp"
#include "chronocon/metrics.hpp"
#include "chronocon/model_io.hpp"
#include "chronocon/pairing.hpp"
#include "chronocon/rng.hpp"
#include "chronocon/sweep.hpp"
#include "chronocon/synthetic.hpp"
#include "chronocon/train.hpp"

using namespace chronocon;
using nlohmann::json;

namespace {

void ensure_dir(const std::string& path) {
  if (path.empty()) throw std::runtime_error("empty directory path");
  std::string partial;
  for (size_t i = 0; i < path.size(); ++i) {
    partial.push_back(path[i]);
    if (path[i] == '/' || i + 1 == path.size()) {
      if (partial == "/" || partial.empty()) continue;
      if (::mkdir(partial.c_str(), 0755) != 0 && errno != EEXIST)
        throw std::runtime_error("mkdir failed: " + partial);
    }
  }
}

std::string self_path() {
  char buf[4096];
  const ssize_t n = ::readlink("/proc/self/exe", buf, sizeof(buf) - 1);
  if (n <= 0) throw std::runtime_error("cannot resolve /proc/self/exe");
  buf[n] = '\0';
  return buf;
}

std::optional<Split> parse_split_filter(const std::string& name) {
  if (name == "all") return std::nullopt;
  return split_from_name(name);
}

Config load_optional_config(const std::string& path) {
  return path.empty() ? Config{} : Config::parse_file(path);
}

// Desk-scale training defaults; any --config value overrides.
void apply_desk_defaults(Config& cfg) {
  auto set_default = [&](const std::string& key, const std::string& value) {
    if (!cfg.has(key)) cfg.set(key, value);
  };
  set_default("batch_size", "64");
  set_default("encoder_lr", "0.002");
  set_default("head_lr", "0.002");
  set_default("max_epochs", "40");
  set_default("stage2_max_epochs", "200");
  set_default("head_hidden", "32,32");
}

std::string train_config_text(const TrainConfig& c) {
  std::ostringstream out;
  out << "batch_size = " << c.batch_size << "\n";
  out << "encoder_lr = " << csv::format_double(c.encoder_lr_effective()) << "\n";
  out << "head_lr = " << csv::format_double(c.head_lr_effective()) << "\n";
  out << "weight_decay = " << csv::format_double(c.weight_decay) << "\n";
  out << "stage2_encoder_lr_factor = " << csv::format_double(c.stage2_encoder_lr_factor)
      << "\n";
  out << "dae_weight = " << csv::format_double(c.dae_weight) << "\n";
  out << "dae_noise = " << csv::format_double(c.dae_noise) << "\n";
  out << "early_stop_patience = " << c.early_stop_patience << "\n";
  out << "plateau_patience = " << c.plateau_patience << "\n";
  out << "plateau_factor = " << csv::format_double(c.plateau_factor) << "\n";
  out << "max_epochs = " << c.max_epochs << "\n";
  out << "stage2_max_epochs = " << c.stage2_epochs() << "\n";
  out << "aug_noise = " << csv::format_double(c.aug_noise) << "\n";
  out << "aug_dropout = " << csv::format_double(c.aug_dropout) << "\n";
  std::ostringstream hidden;
  for (size_t i = 0; i < c.encoder_hidden.size(); ++i)
    hidden << (i ? "," : "") << c.encoder_hidden[i];
  out << "encoder_hidden = " << hidden.str() << "\n";
  out << "embed_dim = " << c.embed_dim << "\n";
  out << "activation = " << nonlinearity_name(c.activation) << "\n";
  std::ostringstream heads;
  for (size_t i = 0; i < c.head_hidden.size(); ++i)
    heads << (i ? "," : "") << c.head_hidden[i];
  out << "head_hidden = " << heads.str() << "\n";
  if (c.sim_overridden) {
    out << "sim_kind = "
        << (c.sim.kind == SimilarityMetric::NegL2 ? "neg_l2" : "cosine") << "\n";
    out << "tau = " << csv::format_double(c.sim.temperature) << "\n";
    out << "sim_squared = " << (c.sim.squared ? "on" : "off") << "\n";
  }
  return out.str();
}

void write_pretrain_curve(const std::vector<EpochStats>& curve, const std::string& path) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss,lr\n";
  for (const auto& e : curve)
    out << e.epoch << ',' << csv::format_double(e.train_loss) << ','
        << csv::format_double(e.val_loss) << ',' << csv::format_double(e.lr) << "\n";
  csv::write_file(path, out.str());
}

void write_finetune_curve(const std::vector<FinetuneEpochStats>& curve,
                          const std::string& path) {
  std::ostringstream out;
  out << "epoch,train_mse,val_mae,val_mse,lr\n";
  for (const auto& e : curve)
    out << e.epoch << ',' << csv::format_double(e.train_mse) << ','
        << csv::format_double(e.val_mae) << ',' << csv::format_double(e.val_mse) << ','
        << csv::format_double(e.lr) << "\n";
  csv::write_file(path, out.str());
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

// ---------------------------------------------------------------------------
// sweep orchestration: cells run as child processes (isolated failures, up
// to --jobs concurrent); completion is recorded in cell files + manifest so
// interrupted sweeps resume without redoing finished work.

struct SweepJob {
  std::string id;          // manifest key
  std::vector<std::string> args;
  std::string output_file; // existence marks completion
  std::string variant;     // for fallback error rows (cells only)
  int n_labeled = 0;
  int rep = 0;
  bool is_cell = false;
};

int run_jobs(const std::vector<SweepJob>& jobs, int max_jobs, const std::string& manifest_path) {
  std::map<std::string, std::string> manifest;
  if (csv::file_exists(manifest_path)) {
    const json j = json::parse(csv::read_file(manifest_path));
    for (const auto& [k, v] : j.items()) manifest[k] = v.get<std::string>();
  }
  auto flush_manifest = [&] {
    json j = json::object();
    for (const auto& [k, v] : manifest) j[k] = v;
    csv::write_file(manifest_path, j.dump(2) + "\n");
  };

  const std::string self = self_path();
  std::deque<const SweepJob*> pending;
  for (const auto& job : jobs) {
    if (csv::file_exists(job.output_file)) {
      manifest[job.id] = "done";
      continue;
    }
    pending.push_back(&job);
  }
  flush_manifest();

  std::map<pid_t, const SweepJob*> running;
  int failures = 0;
  auto spawn = [&](const SweepJob* job) {
    std::vector<char*> argv;
    argv.push_back(const_cast<char*>(self.c_str()));
    for (const auto& a : job->args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    const pid_t pid = ::fork();
    if (pid < 0) throw std::runtime_error("fork failed");
    if (pid == 0) {
      ::execv(self.c_str(), argv.data());
      _exit(127);
    }
    running[pid] = job;
  };

  while (!pending.empty() || !running.empty()) {
    while (!pending.empty() && static_cast<int>(running.size()) < std::max(1, max_jobs)) {
      spawn(pending.front());
      pending.pop_front();
    }
    int status = 0;
    const pid_t pid = ::waitpid(-1, &status, 0);
    if (pid < 0) throw std::runtime_error("waitpid failed");
    auto it = running.find(pid);
    if (it == running.end()) continue;
    const SweepJob* job = it->second;
    running.erase(it);
    const bool ok = WIFEXITED(status) && WEXITSTATUS(status) == 0 &&
                    csv::file_exists(job->output_file);
    if (ok) {
      manifest[job->id] = "done";
    } else {
      ++failures;
      const std::string tag =
          "error:exit" + std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1);
      manifest[job->id] = tag;
      if (job->is_cell) {
        // Keep the table complete: record the failed cell so the sweep can
        // continue and reruns skip it deterministically.
        SweepRow row;
        row.variant = job->variant;
        row.n_labeled = job->n_labeled;
        row.rep = job->rep;
        row.status = tag;
        csv::write_file(job->output_file,
                        sweep_csv_header() + "\n" + sweep_row_to_csv(row) + "\n");
      }
      std::cerr << "warning: job " << job->id << " failed (" << tag << ")\n";
    }
    flush_manifest();
  }
  return failures;
}

std::string cell_tag(const std::string& variant, int n, int rep) {
  return variant + "_n" + std::to_string(n) + "_r" + std::to_string(rep);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ChronoCon: chronological contrastive learning on longitudinal cohorts"};
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 0;
  int jobs = 2;
  std::string out_dir;
  app.add_option("--seed", seed, "Global random seed");
  app.add_option("--jobs", jobs, "Concurrent sweep cell processes");
  app.add_option("--out-dir", out_dir, "Output directory (sweep/report/analyze)");

  // generate -------------------------------------------------------------
  auto* gen = app.add_subcommand("generate", "Generate a synthetic longitudinal cohort");
  std::string gen_config, gen_out, gen_truth;
  gen->add_option("--config", gen_config, "CohortConfig key=value file");
  gen->add_option("--out", gen_out, "Cohort CSV path")->required();
  gen->add_option("--truth", gen_truth, "Latent severity CSV path");
  gen->callback([&] {
    Config cfg = load_optional_config(gen_config);
    CohortConfig cc = CohortConfig::from_config(cfg);
    cfg.check_consumed();
    if (app.count("--seed") > 0) cc.seed = seed;
    const GeneratedCohort out = generate(cc);
    save_cohort(out.cohort, gen_out);
    if (!gen_truth.empty()) save_trajectories(out.trajectories, gen_truth);
  });

  // split ------------------------------------------------------------------
  auto* spl = app.add_subcommand("split", "Assign patient-level train/val/test splits");
  std::string spl_cohort, spl_out, spl_fracs = "0.6,0.2,0.2";
  spl->add_option("--cohort", spl_cohort)->required();
  spl->add_option("--out", spl_out)->required();
  spl->add_option("--fractions", spl_fracs, "train,val,test fractions (sum to 1)");
  spl->callback([&] {
    const auto f = csv::split_line(spl_fracs);
    if (f.size() != 3) throw std::runtime_error("--fractions needs three values");
    const Cohort cohort = load_cohort(spl_cohort);
    const Cohort split = split_patients(
        cohort, csv::parse_double(f[0], "fractions"), csv::parse_double(f[1], "fractions"),
        csv::parse_double(f[2], "fractions"), seed);
    save_cohort(split, spl_out);
  });

  // pretrain ---------------------------------------------------------------
  auto* pre = app.add_subcommand("pretrain", "Stage 1: contrastive/DAE pretraining");
  std::string pre_cohort, pre_loss = "chrono", pre_dae = "on", pre_config, pre_out;
  pre->add_option("--cohort", pre_cohort)->required();
  pre->add_option("--loss", pre_loss, "chrono|rnc|rnc-t|ordinal-y|simclr|dae");
  pre->add_option("--dae", pre_dae, "on|off: add the weighted DAE auxiliary");
  pre->add_option("--config", pre_config, "TrainConfig key=value file");
  pre->add_option("--out", pre_out, "Model output path")->required();
  pre->callback([&] {
    Config cfg = load_optional_config(pre_config);
    TrainConfig tc = TrainConfig::from_config(cfg);
    cfg.check_consumed();
    if (app.count("--seed") > 0) tc.seed = seed;
    const LossVariant variant = loss_variant_from_name(pre_loss);
    const bool use_dae = pre_dae == "on" || variant == LossVariant::DaeOnly;
    const Cohort cohort = load_cohort(pre_cohort);
    PretrainResult result = pretrain(cohort, variant, use_dae, tc);
    ModelBundle bundle;
    bundle.encoder = std::move(result.encoder);
    if (use_dae) bundle.decoder = std::move(result.decoder);
    save_model(bundle, pre_out);
    write_pretrain_curve(result.curve, pre_out + ".curve.csv");
  });

  // finetune -----------------------------------------------------------------
  auto* fin = app.add_subcommand("finetune", "Stage 2: multi-head MSE regression");
  std::string fin_model, fin_cohort, fin_config, fin_out;
  int fin_labeled = -1;
  bool fin_scratch = false;
  fin->add_option("--model", fin_model, "Pretrained model (omit with --scratch)");
  fin->add_option("--cohort", fin_cohort)->required();
  fin->add_option("--labeled-patients", fin_labeled,
                  "Mask labels to this many train patients (default: all)");
  fin->add_flag("--scratch", fin_scratch, "Single-stage baseline: random encoder init");
  fin->add_option("--config", fin_config, "TrainConfig key=value file");
  fin->add_option("--out", fin_out, "Model output path")->required();
  fin->callback([&] {
    Config cfg = load_optional_config(fin_config);
    const bool factor_set = cfg.has("stage2_encoder_lr_factor");
    TrainConfig tc = TrainConfig::from_config(cfg);
    cfg.check_consumed();
    if (app.count("--seed") > 0) tc.seed = seed;
    Cohort cohort = load_cohort(fin_cohort);
    if (fin_labeled >= 0)
      cohort = subsample_labeled_patients(cohort, fin_labeled, derive_seed(tc.seed, 0x3a5c));

    Mlp encoder;
    if (fin_scratch) {
      if (!factor_set) tc.stage2_encoder_lr_factor = 1.0;  // baseline: full rate
      encoder = Mlp({cohort.feature_dim, tc.encoder_hidden, tc.embed_dim, tc.activation});
      encoder.init_random(derive_seed(tc.seed, 0xe2c));
    } else {
      if (fin_model.empty()) throw std::runtime_error("finetune: need --model or --scratch");
      encoder = load_model(fin_model).encoder;
    }
    FinetuneResult result = finetune(encoder, cohort, tc);
    ModelBundle bundle;
    bundle.encoder = std::move(result.encoder);
    bundle.regressor = std::move(result.regressor);
    save_model(bundle, fin_out);
    write_finetune_curve(result.curve, fin_out + ".curve.csv");
  });

  // predict ------------------------------------------------------------------
  auto* prd = app.add_subcommand("predict", "Write prediction and truth tables");
  std::string prd_model, prd_cohort, prd_split = "test", prd_pred, prd_truth;
  prd->add_option("--model", prd_model)->required();
  prd->add_option("--cohort", prd_cohort)->required();
  prd->add_option("--split", prd_split, "train|val|test|all");
  prd->add_option("--out-pred", prd_pred)->required();
  prd->add_option("--out-truth", prd_truth)->required();
  prd->callback([&] {
    const ModelBundle bundle = load_model(prd_model);
    if (!bundle.regressor) throw std::runtime_error("predict: model has no regressor heads");
    const Cohort cohort = load_cohort(prd_cohort);
    const auto filter = parse_split_filter(prd_split);
    const auto predictions = predict_scores(bundle.encoder, *bundle.regressor, cohort);
    ScoreTable pred_table, truth_table;
    pred_table.rows = prediction_rows(cohort, predictions, filter);
    truth_table.rows = truth_rows(cohort, filter);
    save_pred_table(pred_table, prd_pred);
    save_truth_table(truth_table, prd_truth);
  });

  // evaluate -------------------------------------------------------------------
  auto* ev = app.add_subcommand("evaluate", "Metrics with bootstrap CIs -> report.json");
  std::string ev_pred, ev_truth, ev_out, ev_meta, ev_compare, ev_cluster = "on";
  int ev_bootstrap = 2000;
  ev->add_option("--pred", ev_pred)->required();
  ev->add_option("--truth", ev_truth)->required();
  ev->add_option("--out", ev_out)->required();
  ev->add_option("--meta", ev_meta, "Cohort .meta.json for per-score clip ranges");
  ev->add_option("--compare", ev_compare, "Second prediction table for the paired t-test");
  ev->add_option("--bootstrap", ev_bootstrap, "Bootstrap resamples (B)");
  ev->add_option("--cluster", ev_cluster, "on|off: resample whole patients");
  ev->callback([&] {
    EvalOptions opts;
    opts.bootstrap_samples = ev_bootstrap;
    opts.seed = derive_seed(seed, 0xe7a1);
    opts.cluster_by_patient = ev_cluster != "off";
    if (!ev_meta.empty()) {
      const json meta = json::parse(csv::read_file(ev_meta));
      for (const auto& t : meta.at("score_types"))
        opts.clip_max[t.at("name").get<std::string>()] = t.at("max").get<double>();
    }
    const ScoreTable table = load_joined_tables(ev_pred, ev_truth);
    EvalReport report = evaluate_tables(table, opts);

    if (!ev_compare.empty()) {
      const ScoreTable table_b = load_joined_tables(ev_compare, ev_truth);
      const TotalsTable totals_a = aggregate_total(table, opts.clip_max, opts.max_missing_frac);
      const TotalsTable totals_b =
          aggregate_total(table_b, opts.clip_max, opts.max_missing_frac);
      std::map<std::pair<std::string, double>, double> err_b;
      for (const auto& r : totals_b.rows) {
        const double e = r.total_pred - r.total_true;
        err_b[{r.patient, r.timestamp}] = e * e;
      }
      std::vector<double> sq_a, sq_b;
      for (const auto& r : totals_a.rows) {
        auto it = err_b.find({r.patient, r.timestamp});
        if (it == err_b.end()) continue;
        const double e = r.total_pred - r.total_true;
        sq_a.push_back(e * e);
        sq_b.push_back(it->second);
      }
      report.ttest = paired_mse_ttest(sq_a, sq_b);
    }
    csv::write_file(ev_out, report_to_json(report));
    print_warnings(report.warnings);
  });

  // analyze-embeddings ---------------------------------------------------------
  auto* an = app.add_subcommand("analyze-embeddings",
                                "PCA projection and similarity-vs-score-difference tables");
  std::string an_model, an_cohort, an_split = "all";
  an->add_option("--model", an_model)->required();
  an->add_option("--cohort", an_cohort)->required();
  an->add_option("--split", an_split, "train|val|test|all");
  an->callback([&] {
    if (out_dir.empty()) throw std::runtime_error("analyze-embeddings: --out-dir required");
    ensure_dir(out_dir);
    const ModelBundle bundle = load_model(an_model);
    Cohort cohort = load_cohort(an_cohort);
    if (const auto filter = parse_split_filter(an_split)) {
      Cohort filtered = cohort;
      filtered.samples.clear();
      for (int i : split_sample_indices(cohort, *filter))
        filtered.samples.push_back(cohort.samples[i]);
      cohort = std::move(filtered);
    }
    write_embedding_analysis(bundle.encoder, cohort, out_dir);
  });

  // report -----------------------------------------------------------------
  auto* rep = app.add_subcommand("report", "Aggregate a sweep table into plot-ready CSVs");
  std::string rep_sweep;
  rep->add_option("--sweep", rep_sweep, "sweep.csv path")->required();
  rep->callback([&] {
    if (out_dir.empty()) throw std::runtime_error("report: --out-dir required");
    ensure_dir(out_dir);
    emit_report(load_sweep_table(rep_sweep), out_dir);
  });

  // pairing dump -------------------------------------------------------------
  auto* pairing_cmd = app.add_subcommand("pairing", "Pairing debug helpers");
  auto* dump = pairing_cmd->add_subcommand("dump", "Print pairing plans for a batch file");
  std::string dump_batch;
  dump->add_option("--batch", dump_batch, "Cohort CSV treated as one batch")->required();
  dump->callback([&] {
    const Cohort cohort = load_cohort(dump_batch);
    const auto& batch = cohort.samples;
    auto print_plan = [&](const std::string& name, const PairingPlan& plan) {
      std::cout << name << ": " << plan.terms.size() << " terms (forward=" << plan.n_forward
                << ", backward=" << plan.n_backward << ")\n";
      for (const auto& t : plan.terms) {
        std::cout << "  " << pair_direction_name(t.direction) << " a=" << t.anchor
                  << " p=" << t.positive << " neg=[";
        for (size_t i = 0; i < t.negatives.size(); ++i)
          std::cout << (i ? "," : "") << t.negatives[i];
        std::cout << "]\n";
      }
    };
    print_plan("chrono", chrono_pairs(batch));
    print_plan("rnc-t", rnc_time_pairs(batch));
    bool labeled = true;
    for (const auto& s : batch) labeled &= s.labels.size() == 1;
    if (labeled) {
      print_plan("rnc", rnc_label_pairs(batch));
      print_plan("ordinal-y", ordinal_label_pairs(batch));
    } else {
      std::cout << "rnc/ordinal-y: skipped (batch has samples without exactly one label)\n";
    }
    bool paired = true;
    std::map<std::pair<std::string, double>, int> views;
    for (const auto& s : batch) views[{s.group_id, s.timestamp}]++;
    for (const auto& [k, n] : views) paired &= n == 2;
    if (paired) print_plan("simclr", simclr_pairs(batch));
    else std::cout << "simclr: skipped (observations lack exactly two views)\n";
  });

  // loss eval ------------------------------------------------------------------
  auto* loss_cmd = app.add_subcommand("loss", "Loss debug helpers");
  auto* loss_eval = loss_cmd->add_subcommand("eval", "Evaluate a loss on stored embeddings");
  std::string le_batch, le_emb, le_loss = "chrono", le_sim = "neg_l2";
  double le_tau = 1.0;
  bool le_squared = false;
  loss_eval->add_option("--batch", le_batch)->required();
  loss_eval->add_option("--embeddings", le_emb, "CSV: sample_id,e0..e{d-1}")->required();
  loss_eval->add_option("--loss", le_loss, "chrono|rnc|rnc-t|ordinal-y|simclr");
  loss_eval->add_option("--sim", le_sim, "neg_l2|cosine");
  loss_eval->add_option("--tau", le_tau, "similarity temperature");
  loss_eval->add_flag("--squared", le_squared, "use squared euclidean distance");
  loss_eval->callback([&] {
    const Cohort cohort = load_cohort(le_batch);
    const auto& batch = cohort.samples;

    const std::string text = csv::read_file(le_emb);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(le_emb + ": empty embeddings file");
    const auto header = csv::split_line(line);
    if (header.empty() || header[0] != "sample_id")
      throw std::runtime_error(le_emb + ": first column must be sample_id");
    const int dim = static_cast<int>(header.size()) - 1;
    std::map<std::int64_t, Eigen::VectorXd> by_id;
    size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto f = csv::split_line(line);
      const std::string where = le_emb + ":" + std::to_string(line_no);
      if (static_cast<int>(f.size()) != dim + 1)
        throw std::runtime_error(where + ": wrong field count");
      Eigen::VectorXd v(dim);
      for (int d = 0; d < dim; ++d) v[d] = csv::parse_double(f[d + 1], where);
      by_id[csv::parse_int(f[0], where)] = std::move(v);
    }
    EmbeddingMatrix emb(batch.size(), dim);
    for (size_t i = 0; i < batch.size(); ++i) {
      auto it = by_id.find(batch[i].sample_id);
      if (it == by_id.end())
        throw std::runtime_error("no embedding for sample " +
                                 std::to_string(batch[i].sample_id));
      emb.row(static_cast<Eigen::Index>(i)) = it->second.transpose();
    }

    SimilarityKind sim;
    sim.kind = le_sim == "cosine" ? SimilarityMetric::Cosine : SimilarityMetric::NegL2;
    sim.temperature = le_tau;
    sim.squared = le_squared;
    const LossVariant variant = loss_variant_from_name(le_loss);
    PairingPlan plan;
    LossOutput out;
    switch (variant) {
      case LossVariant::Chrono: plan = chrono_pairs(batch); out = chronocon_loss(plan, emb, sim); break;
      case LossVariant::RncLabel: plan = rnc_label_pairs(batch); out = rnc_loss(plan, emb, sim); break;
      case LossVariant::RncTime: plan = rnc_time_pairs(batch); out = rnc_time_loss(plan, emb, sim); break;
      case LossVariant::OrdinalY: plan = ordinal_label_pairs(batch); out = ordinal_loss(plan, emb, sim); break;
      case LossVariant::SimCLR: plan = simclr_pairs(batch); out = simclr_loss(plan, emb, sim); break;
      case LossVariant::DaeOnly: throw std::runtime_error("loss eval: dae has no pairing plan");
    }
    json j;
    j["loss"] = le_loss;
    j["value"] = out.value;
    j["n_terms"] = plan.terms.size();
    j["n_forward"] = plan.n_forward;
    j["n_backward"] = plan.n_backward;
    j["term_values"] = out.term_values;
    std::cout << j.dump(2) << "\n";
  });

  // sweep-cell (internal) -----------------------------------------------------
  auto* cell = app.add_subcommand("sweep-cell", "Internal: one sweep cell");
  std::string sc_mode = "cell", sc_cohort, sc_variant, sc_config, sc_out, sc_pretrained;
  int sc_n = 0, sc_rep = 0, sc_bootstrap = 2000;
  cell->add_option("--mode", sc_mode, "pretrain|cell");
  cell->add_option("--cohort", sc_cohort)->required();
  cell->add_option("--variant", sc_variant)->required();
  cell->add_option("--n-labeled", sc_n);
  cell->add_option("--rep", sc_rep);
  cell->add_option("--config", sc_config)->required();
  cell->add_option("--out", sc_out)->required();
  cell->add_option("--pretrained", sc_pretrained);
  cell->add_option("--bootstrap", sc_bootstrap);
  cell->callback([&] {
    Config cfg = Config::parse_file(sc_config);
    TrainConfig tc = TrainConfig::from_config(cfg);
    cfg.check_consumed();
    const Cohort cohort = load_cohort(sc_cohort);
    const SweepVariant variant = sweep_variant_from_name(sc_variant);
    if (sc_mode == "pretrain") {
      PretrainResult result = run_sweep_pretrain(cohort, variant, sc_rep, seed, tc);
      ModelBundle bundle;
      bundle.encoder = std::move(result.encoder);
      if (variant.use_dae || variant.pretrain_variant == LossVariant::DaeOnly)
        bundle.decoder = std::move(result.decoder);
      save_model(bundle, sc_out);
      write_pretrain_curve(result.curve, sc_out + ".curve.csv");
      return;
    }
    Mlp pretrained;
    const Mlp* pretrained_ptr = nullptr;
    if (variant.pretrain_variant) {
      if (sc_pretrained.empty())
        throw std::runtime_error("sweep-cell: --pretrained required for " + sc_variant);
      pretrained = load_model(sc_pretrained).encoder;
      pretrained_ptr = &pretrained;
    }
    EvalOptions opts;
    opts.bootstrap_samples = sc_bootstrap;
    const SweepRow row =
        run_sweep_cell(cohort, variant, sc_n, sc_rep, seed, tc, opts, pretrained_ptr);
    csv::write_file(sc_out, sweep_csv_header() + "\n" + sweep_row_to_csv(row) + "\n");
  });

  // sweep ----------------------------------------------------------------------
  auto* sw = app.add_subcommand("sweep", "Label-efficiency sweep over variants and seeds");
  std::string sw_cohort, sw_counts, sw_variants, sw_gen_config, sw_train_config;
  int sw_reps = 5, sw_bootstrap = 2000;
  sw->add_option("--cohort", sw_cohort, "Split cohort CSV (default: generate one)");
  sw->add_option("--counts", sw_counts, "Comma list of labeled-patient counts");
  sw->add_option("--variants", sw_variants, "Comma list of sweep variants");
  sw->add_option("--reps", sw_reps, "Repetitions with distinct seeds");
  sw->add_option("--gen-config", sw_gen_config, "CohortConfig for the generated cohort");
  sw->add_option("--config", sw_train_config, "TrainConfig key=value file");
  sw->add_option("--bootstrap", sw_bootstrap, "Bootstrap resamples per cell");
  sw->callback([&] {
    if (out_dir.empty()) throw std::runtime_error("sweep: --out-dir required");
    ensure_dir(out_dir);
    ensure_dir(out_dir + "/cells");
    ensure_dir(out_dir + "/models");

    // Cohort: reuse the given (already split) one, or generate + split a
    // desk-scale default into the sweep directory.
    std::string cohort_path = sw_cohort;
    if (cohort_path.empty()) {
      cohort_path = out_dir + "/cohort.csv";
      if (!csv::file_exists(cohort_path)) {
        Config gcfg = load_optional_config(sw_gen_config);
        CohortConfig cc = CohortConfig::from_config(gcfg);
        gcfg.check_consumed();
        cc.seed = derive_seed(seed, 0xc040);
        const GeneratedCohort gen_out = generate(cc);
        const Cohort split =
            split_patients(gen_out.cohort, 0.6, 0.2, 0.2, derive_seed(seed, 0x5b1));
        save_cohort(split, cohort_path);
        save_trajectories(gen_out.trajectories, out_dir + "/truth.csv");
      }
    }
    const Cohort cohort = load_cohort(cohort_path);
    int n_train = 0;
    for (const auto& [p, s] : cohort.split_assignment)
      if (s == Split::Train) ++n_train;

    SweepSpec spec;
    spec.seed = seed;
    spec.repetitions = sw_reps;
    if (!sw_counts.empty()) {
      spec.labeled_counts.clear();
      for (const auto& f : csv::split_line(sw_counts))
        spec.labeled_counts.push_back(static_cast<int>(csv::parse_int(f, "--counts")));
    }
    if (!sw_variants.empty()) {
      spec.variants.clear();
      for (const auto& f : csv::split_line(sw_variants)) spec.variants.push_back(f);
    }
    spec.validate(n_train);

    // Effective training config is frozen into the sweep directory so every
    // child runs identical settings (and resumes stay consistent).
    const std::string train_cfg_path = out_dir + "/train.cfg";
    if (!csv::file_exists(train_cfg_path)) {
      Config tcfg = load_optional_config(sw_train_config);
      apply_desk_defaults(tcfg);
      const TrainConfig tc = TrainConfig::from_config(tcfg);
      csv::write_file(train_cfg_path, train_config_text(tc));
    }

    const std::string seed_str = std::to_string(seed);
    const std::string boot_str = std::to_string(sw_bootstrap);
    std::vector<SweepJob> pretrain_jobs, cell_jobs;
    for (const auto& vname : spec.variants) {
      const SweepVariant variant = sweep_variant_from_name(vname);
      for (int rep = 0; rep < spec.repetitions; ++rep) {
        std::string model_path;
        if (variant.pretrain_variant) {
          model_path = out_dir + "/models/pre_" + vname + "_r" + std::to_string(rep) + ".bin";
          SweepJob job;
          job.id = "pretrain:" + vname + ":r" + std::to_string(rep);
          job.output_file = model_path;
          job.args = {"--seed", seed_str, "sweep-cell", "--mode", "pretrain",
                      "--cohort", cohort_path, "--variant", vname,
                      "--rep", std::to_string(rep), "--config", train_cfg_path,
                      "--out", model_path};
          pretrain_jobs.push_back(std::move(job));
        }
        for (int n : spec.labeled_counts) {
          SweepJob job;
          job.id = "cell:" + cell_tag(vname, n, rep);
          job.output_file = out_dir + "/cells/" + cell_tag(vname, n, rep) + ".csv";
          job.variant = vname;
          job.n_labeled = n;
          job.rep = rep;
          job.is_cell = true;
          job.args = {"--seed", seed_str, "sweep-cell", "--mode", "cell",
                      "--cohort", cohort_path, "--variant", vname,
                      "--n-labeled", std::to_string(n), "--rep", std::to_string(rep),
                      "--config", train_cfg_path, "--out", job.output_file,
                      "--bootstrap", boot_str};
          if (!model_path.empty()) {
            job.args.push_back("--pretrained");
            job.args.push_back(model_path);
          }
          cell_jobs.push_back(std::move(job));
        }
      }
    }

    const std::string manifest_path = out_dir + "/manifest.json";
    run_jobs(pretrain_jobs, jobs, manifest_path);
    run_jobs(cell_jobs, jobs, manifest_path);

    // Canonical final table: cells sorted by (variant, n_labeled, rep).
    std::vector<SweepRow> rows;
    for (const auto& job : cell_jobs) {
      const auto cell_rows = load_sweep_table(job.output_file);
      rows.insert(rows.end(), cell_rows.begin(), cell_rows.end());
    }
    std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
      return std::tie(a.variant, a.n_labeled, a.rep) < std::tie(b.variant, b.n_labeled, b.rep);
    });
    std::ostringstream table;
    table << sweep_csv_header() << "\n";
    for (const auto& r : rows) table << sweep_row_to_csv(r) << "\n";
    csv::write_file(out_dir + "/sweep.csv", table.str());
    emit_report(rows, out_dir);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
