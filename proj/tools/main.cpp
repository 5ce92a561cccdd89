// uqeval: reliability and uncertainty evaluation for binary classifiers.
// Subcommands: simulate, evaluate, calibrate, sweep-bands, sweep-T,
// sweep-dropout, compare, figures, protocol.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "uqeval/report.hpp"
#include "uqeval/stochastic.hpp"

using namespace uqeval;
namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

LogFormat parse_format(const std::string& name) {
  auto f = format_from(name);
  if (!f) fail(Errc::validation_error, "unknown format '" + name + "'");
  return *f;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<BandSpec> parse_bands(const std::string& arg) {
  std::vector<BandSpec> bands;
  for (const auto& item : split_list(arg)) {
    auto colon = item.find(':');
    if (colon == std::string::npos)
      fail(Errc::validation_error, "band must be lo:hi, got '" + item + "'");
    BandSpec b;
    b.lower = std::stod(item.substr(0, colon));
    b.upper = std::stod(item.substr(colon + 1));
    if (!(b.lower >= 0.0 && b.lower < b.upper && b.upper <= 1.0))
      fail(Errc::validation_error, "band bounds must satisfy 0 <= lo < hi <= 1");
    bands.push_back(b);
  }
  if (bands.empty()) fail(Errc::validation_error, "no bands given");
  size_t last = 0;
  for (size_t i = 1; i < bands.size(); ++i)
    if (bands[i].upper > bands[last].upper) last = i;
  bands[last].closed_upper = true;
  return bands;
}

std::vector<PartitionSpec> parse_partitions(const std::string& arg) {
  std::vector<PartitionSpec> parts;
  for (const auto& item : split_list(arg)) {
    if (item == "median") {
      parts.push_back(PartitionSpec::median_split());
    } else if (item.size() > 1 && (item[0] == 'q' || item.rfind("top_bottom_", 0) == 0)) {
      std::string digits = item[0] == 'q' ? item.substr(1) : item.substr(11);
      parts.push_back(PartitionSpec::top_bottom(std::stod(digits) / 100.0));
    } else {
      fail(Errc::validation_error, "partition must be median or q<percent>, got '" + item + "'");
    }
  }
  if (parts.empty()) fail(Errc::validation_error, "no partitions given");
  return parts;
}

PredictionLog load_ready(const std::string& path, LogFormat format) {
  PredictionLog log = load_log(path, format);
  if (log.has_mc() && !log.records.front().mc_mean) return summarize_log(log);
  return log;
}

std::string method_label(const PredictionLog& log) {
  auto it = log.meta.find("inference");
  return it != log.meta.end() ? it->second : "log";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uncertainty-aware reliability evaluation for binary classifiers"};
  app.require_subcommand(1);

  uint64_t seed = 42;
  std::string format_name = "jsonl";
  std::string out_dir = ".";
  double threshold = 0.5;
  int ece_bins = 15;
  app.add_option("--seed", seed, "base random seed")->capture_default_str();
  app.add_option("--format", format_name, "log format: jsonl or csv")->capture_default_str();
  app.add_option("--out-dir", out_dir, "output directory")->capture_default_str();
  app.add_option("--threshold", threshold, "decision threshold")->capture_default_str();
  app.add_option("--ece-bins", ece_bins, "calibration bin count")->capture_default_str();

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate data, train, emit prediction logs");
  sim->fallthrough();
  long sim_n = 4000;
  double sim_overlap = 0.5, sim_ood_shift = 1.0, sim_dropout = 0.1;
  int sim_k = 1, sim_t = 20, sim_hidden = 16;
  sim->add_option("--n", sim_n, "dataset size (even)")->capture_default_str();
  sim->add_option("--overlap", sim_overlap, "class overlap (per-class variance)")
      ->capture_default_str();
  sim->add_option("--ood-shift", sim_ood_shift, "OOD mean shift")->capture_default_str();
  sim->add_option("--k", sim_k, "ensemble members to train")->capture_default_str();
  sim->add_option("--t", sim_t, "MC forward passes")->capture_default_str();
  sim->add_option("--dropout-p", sim_dropout, "dropout probability")->capture_default_str();
  sim->add_option("--hidden", sim_hidden, "hidden width")->capture_default_str();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "metric report for one log");
  eval->fallthrough();
  std::string eval_log;
  std::string eval_stratify;
  eval->add_option("--log", eval_log, "prediction log path")->required();
  eval->add_option("--stratify", eval_stratify, "strata key for sub-tables");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "fit temperature on val, apply to a log");
  cal->fallthrough();
  std::string cal_val, cal_apply, cal_out;
  cal->add_option("--val", cal_val, "validation log with logits")->required();
  cal->add_option("--apply", cal_apply, "log to rescale")->required();
  cal->add_option("--out", cal_out, "output log path")->required();

  // sweep-bands
  auto* bands_cmd = app.add_subcommand("sweep-bands", "confidence-band x variance-partition sweep");
  bands_cmd->fallthrough();
  std::string sb_log;
  std::string sb_bands = "0.55:0.65,0.65:0.75,0.75:0.85,0.85:0.95";
  std::string sb_parts = "median,q40,q30,q20";
  long sb_n_band = 0;
  int sb_b = 1000;
  double sb_level = 0.95;
  bool sb_symmetric = false, sb_parallel = false;
  bands_cmd->add_option("--log", sb_log, "MC prediction log")->required();
  bands_cmd->add_option("--bands", sb_bands, "comma list of lo:hi")->capture_default_str();
  bands_cmd->add_option("--partitions", sb_parts, "median or q<percent> list")
      ->capture_default_str();
  bands_cmd->add_option("--n-band", sb_n_band, "fixed per-band size (0 = min population)")
      ->capture_default_str();
  bands_cmd->add_option("--b", sb_b, "bootstrap resamples")->capture_default_str();
  bands_cmd->add_option("--level", sb_level, "CI level")->capture_default_str();
  bands_cmd->add_flag("--symmetric", sb_symmetric, "band on max(mu, 1-mu)");
  bands_cmd->add_flag("--parallel", sb_parallel, "compute cells in parallel");

  // sweep-T
  auto* sweept = app.add_subcommand("sweep-T", "MC sample-size sensitivity via prefix truncation");
  sweept->fallthrough();
  std::string st_log;
  std::string st_values = "1,5,10,20,50";
  sweept->add_option("--log", st_log, "MC prediction log (stores the largest T)")->required();
  sweept->add_option("--t-values", st_values, "comma list of T prefixes")->capture_default_str();

  // sweep-dropout
  auto* sweepd = app.add_subcommand("sweep-dropout", "test-time dropout-rate ablation");
  sweepd->fallthrough();
  std::string sd_model, sd_dataset;
  std::string sd_grid = "0.0,0.1,0.2,0.5";
  std::string sd_split = "test";
  int sd_t = 20;
  sweepd->add_option("--model", sd_model, "trained model json")->required();
  sweepd->add_option("--dataset", sd_dataset, "dataset jsonl")->required();
  sweepd->add_option("--grid", sd_grid, "comma list of dropout rates")->capture_default_str();
  sweepd->add_option("--t", sd_t, "MC forward passes")->capture_default_str();
  sweepd->add_option("--split", sd_split, "split to evaluate")->capture_default_str();

  // compare
  auto* cmp = app.add_subcommand("compare", "paired DeLong test of two logs' ROC-AUC");
  cmp->fallthrough();
  std::string cmp_a, cmp_b, cmp_labels_from = "a", cmp_out;
  cmp->add_option("--a", cmp_a, "reference log")->required();
  cmp->add_option("--b", cmp_b, "comparison log")->required();
  cmp->add_option("--labels-from", cmp_labels_from, "a or b")->capture_default_str();
  cmp->add_option("--out", cmp_out, "optional JSON output path");

  // figures
  auto* figs = app.add_subcommand("figures", "figure data CSVs and static SVGs");
  figs->fallthrough();
  std::string fig_log;
  std::string fig_kinds = "reliability,roc,histogram";
  figs->add_option("--log", fig_log, "prediction log")->required();
  figs->add_option("--kinds", fig_kinds,
                   "reliability,roc,histogram,entropy-correctness,error-roc")
      ->capture_default_str();

  // protocol
  auto* proto = app.add_subcommand("protocol", "full end-to-end run into a directory");
  proto->fallthrough();
  std::string proto_config;
  proto->add_option("--config", proto_config, "protocol config json (defaults when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    LogFormat format = parse_format(format_name);

    if (*sim) {
      SyntheticConfig sc;
      sc.n = sim_n;
      sc.seed = seed;
      sc.overlap = sim_overlap;
      sc.ood_shift = sim_ood_shift;
      auto data = gen_synthetic(sc);
      fs::create_directories(out_dir);
      fs::path dir(out_dir);
      write_dataset(data, (dir / "dataset.jsonl").string());

      TrainConfig tc;
      tc.seed = seed;
      tc.dropout_p = sim_dropout;
      tc.hidden = sim_hidden;
      auto model = train(data, tc).model;
      save_model(model, (dir / "model.json").string());
      write_log(predict_log(model, data, PredictMode::deterministic, 0, std::nullopt, seed),
                (dir / "predictions_det.jsonl").string(), LogFormat::jsonl);
      write_log(predict_log(model, data, PredictMode::mc, sim_t, std::nullopt,
                            derive_seed(seed, 1)),
                (dir / "predictions_mc.jsonl").string(), LogFormat::jsonl);
      if (sim_k > 1) {
        std::vector<uint64_t> seeds;
        for (int k = 0; k < sim_k; ++k) seeds.push_back(derive_seed(seed, 200 + k));
        auto members = train_ensemble(data, tc, seeds);
        for (int k = 0; k < sim_k; ++k) {
          save_model(members[k], (dir / ("model_member_" + std::to_string(k) + ".json")).string());
          write_log(predict_log(members[k], data, PredictMode::ensemble_member, 0, std::nullopt,
                                derive_seed(seed, 300 + k)),
                    (dir / ("predictions_member_" + std::to_string(k) + ".jsonl")).string(),
                    LogFormat::jsonl);
        }
      }
      ordered_json cfg;
      cfg["n"] = sim_n;
      cfg["overlap"] = sim_overlap;
      cfg["ood_shift"] = sim_ood_shift;
      cfg["seed"] = seed;
      cfg["k"] = sim_k;
      cfg["t"] = sim_t;
      cfg["dropout_p"] = sim_dropout;
      cfg["hidden"] = sim_hidden;
      write_manifest(out_dir, "simulate", cfg.dump(2), {});
      std::cout << "simulate: wrote dataset, model and logs to " << out_dir << "\n";
    } else if (*eval) {
      auto log = load_ready(eval_log, format);
      auto rep = metric_report(log, threshold, ece_bins);
      std::vector<MethodMetrics> rows = {{method_label(log), rep}};
      fs::path dir(out_dir);
      fs::create_directories(dir);
      write_metrics_csv(rows, (dir / "metrics.csv").string());
      write_metrics_json(rows, (dir / "metrics.json").string());
      if (!eval_stratify.empty()) {
        std::vector<std::pair<std::string, MethodMetrics>> strat;
        for (const auto& [value, part] : partition_by_stratum(log, eval_stratify))
          strat.push_back({value, {rows[0].method, metric_report(part, threshold, ece_bins)}});
        write_stratified_metrics_csv(
            eval_stratify, strat, (dir / ("metrics_by_" + eval_stratify + ".csv")).string());
      }
      ordered_json cfg;
      cfg["log"] = eval_log;
      cfg["threshold"] = threshold;
      cfg["ece_bins"] = ece_bins;
      write_manifest(out_dir, "evaluate", cfg.dump(2), {eval_log});
      std::cout << "n=" << rep.n << " Acc=" << rep.acc
                << " AUC=" << (rep.auc_defined ? std::to_string(rep.auc) : "NA")
                << " ECE=" << rep.ece << " Brier=" << rep.brier << " NLL=" << rep.nll << "\n";
    } else if (*cal) {
      auto val_log = load_log(cal_val, format);
      auto apply_log = load_log(cal_apply, format);
      auto temp = fit_temperature(val_log);
      auto calibrated = apply_temperature(apply_log, temp);
      if (fs::path(cal_out).has_parent_path())
        fs::create_directories(fs::path(cal_out).parent_path());
      write_log(calibrated, cal_out, format);
      ordered_json j;
      j["tau"] = temp.tau;
      j["alpha"] = temp.alpha;
      j["val_nll_at_tau"] = temp.val_nll_at_tau;
      j["at_bound"] = temp.at_bound;
      std::ofstream tf(cal_out + ".temperature.json");
      tf << j.dump(2) << "\n";
      std::cout << j.dump() << "\n";
    } else if (*bands_cmd) {
      auto log = load_ready(sb_log, format);
      BandSweepConfig bc;
      bc.bands = parse_bands(sb_bands);
      bc.partitions = parse_partitions(sb_parts);
      bc.n_band = sb_n_band;
      bc.bootstrap_b = sb_b;
      bc.level = sb_level;
      bc.seed = seed;
      bc.threshold = threshold;
      bc.symmetric_confidence = sb_symmetric;
      bc.parallel = sb_parallel;
      auto grid = band_sweep(log, bc);
      fs::path dir(out_dir);
      write_band_grid_csv(grid, (dir / "band_sweep.csv").string());
      write_band_grid_json(grid, (dir / "band_sweep.json").string());
      write_band_plot_csv(grid, (dir / "band_effect.csv").string());
      ordered_json cfg;
      cfg["log"] = sb_log;
      cfg["bands"] = sb_bands;
      cfg["partitions"] = sb_parts;
      cfg["n_band"] = sb_n_band;
      cfg["b"] = sb_b;
      cfg["level"] = sb_level;
      cfg["seed"] = seed;
      write_manifest(out_dir, "sweep-bands", cfg.dump(2), {sb_log});
      std::cout << "sweep-bands: " << grid.bands.size() << "x" << grid.partitions.size()
                << " grid written to " << out_dir << "\n";
    } else if (*sweept) {
      auto log = load_log(st_log, format);
      if (!log.has_mc()) fail(Errc::missing_fields, "sweep-T needs an mc_probs log");
      std::vector<TSensitivityRow> rows;
      for (const auto& item : split_list(st_values)) {
        int tv = std::stoi(item);
        auto rep = metric_report(summarize_log(log, tv), threshold, ece_bins);
        rows.push_back({tv, rep.acc, rep.ece, rep.brier});
      }
      fs::path dir(out_dir);
      write_t_sensitivity_csv(rows, (dir / "t_sensitivity.csv").string());
      write_t_sensitivity_json(rows, (dir / "t_sensitivity.json").string());
      std::cout << "sweep-T: " << rows.size() << " rows written to " << out_dir << "\n";
    } else if (*sweepd) {
      auto model = load_model(sd_model);
      auto data = load_dataset(sd_dataset);
      auto split = split_from(sd_split);
      if (!split) fail(Errc::validation_error, "unknown split '" + sd_split + "'");
      std::vector<DropoutAblationRow> rows;
      for (const auto& item : split_list(sd_grid)) {
        double p = std::stod(item);
        auto log = predict_log(model, data, PredictMode::mc, sd_t, p, derive_seed(seed, 400));
        auto summarized = summarize_log(filter_split(log, *split));
        auto rep = metric_report(summarized, threshold, ece_bins);
        double var_sum = 0.0;
        for (const auto& r : summarized.records) var_sum += r.mc_var.value_or(0.0);
        rows.push_back({p, rep.acc, rep.ece, rep.brier,
                        var_sum / static_cast<double>(summarized.size())});
      }
      fs::path dir(out_dir);
      write_dropout_ablation_csv(rows, (dir / "dropout_ablation.csv").string());
      write_dropout_ablation_json(rows, (dir / "dropout_ablation.json").string());
      std::cout << "sweep-dropout: " << rows.size() << " rows written to " << out_dir << "\n";
    } else if (*cmp) {
      auto log_a = load_ready(cmp_a, format);
      auto log_b = load_ready(cmp_b, format);
      if (log_a.size() != log_b.size())
        fail(Errc::length_mismatch, "logs differ in size; DeLong needs paired predictions");
      for (size_t i = 0; i < log_a.size(); ++i)
        if (log_a.records[i].id != log_b.records[i].id)
          fail(Errc::misaligned_members, "logs disagree on id order at index " + std::to_string(i));
      if (cmp_labels_from != "a" && cmp_labels_from != "b")
        fail(Errc::validation_error, "--labels-from must be a or b");
      const auto& label_log = cmp_labels_from == "a" ? log_a : log_b;
      for (size_t i = 0; i < log_a.size(); ++i)
        if (log_a.records[i].label != log_b.records[i].label)
          fail(Errc::validation_error, "labels disagree at id " + log_a.records[i].id);
      auto labels = labels_of(label_log);
      auto result = delong_test(probs_of(log_a), probs_of(log_b), labels);
      std::vector<DeLongRow> rows = {{method_label(log_a) + " vs " + method_label(log_b), true,
                                      result, 0.05}};
      ordered_json o;
      o["AUC_ref"] = result.auc_a;
      o["AUC_cmp"] = result.auc_b;
      o["delta_AUC"] = result.delta;
      o["p"] = result.p_two_sided;
      o["z"] = result.z;
      o["degenerate"] = result.degenerate;
      o["decision"] = result.p_two_sided < 0.05 ? "sig." : "n.s.";
      std::cout << o.dump() << "\n";
      if (!cmp_out.empty()) write_delong_json(rows, cmp_out);
    } else if (*figs) {
      auto log = load_ready(fig_log, format);
      fs::path dir(out_dir);
      fs::create_directories(dir);
      for (const auto& item : split_list(fig_kinds)) {
        auto kind = figure_kind_from(item);
        if (!kind) fail(Errc::validation_error, "unknown figure kind '" + item + "'");
        std::string stem = item;
        std::replace(stem.begin(), stem.end(), '-', '_');
        write_figure(log, *kind, (dir / stem).string(), threshold, ece_bins);
      }
      std::cout << "figures: written to " << out_dir << "\n";
    } else if (*proto) {
      ProtocolConfig cfg;
      std::vector<std::string> inputs;
      if (!proto_config.empty()) {
        std::ifstream in(proto_config);
        if (!in) fail(Errc::io_error, "cannot open " + proto_config);
        std::stringstream ss;
        ss << in.rdbuf();
        cfg = ProtocolConfig::from_json_text(ss.str());
        inputs.push_back(proto_config);
      }
      if (app.count("--seed") > 0) cfg.seed = seed;
      if (app.count("--threshold") > 0) cfg.threshold = threshold;
      if (app.count("--ece-bins") > 0) cfg.ece_bins = ece_bins;
      run_protocol(cfg, out_dir, &std::cout);
      std::cout << "protocol: run directory " << out_dir << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "uqeval: " << e.what() << "\n";
    return e.code() == Errc::io_error ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "uqeval: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
