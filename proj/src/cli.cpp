#include "protomatch/cli.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace protomatch {

namespace {

std::string percent_pair(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%05.2f+-%05.2f", 100.0 * mean, 100.0 * std);
  return buf;
}

Dataset load_source(const RunConfig& cfg) {
  if (cfg.source == DataSource::kFile) return load_dataset(cfg.data_path);
  return synthesize_dataset(cfg.synth);
}

}  // namespace

RunConfig resolve_config(const CliOptions& options) {
  RunConfig cfg = options.config ? load_config(*options.config) : RunConfig{};
  if (options.seed) {
    cfg.train.seed = *options.seed;
    cfg.synth.seed = *options.seed;
  }
  if (!options.ablations.empty()) {
    cfg.train.ablations = Ablations{};
    for (const auto& a : options.ablations) cfg.train.ablations.set(a);
  }
  if (options.folds_parallel) cfg.folds_parallel = *options.folds_parallel;
  if (options.target_subject) cfg.target_subject = *options.target_subject;
  if (options.split_target_k) cfg.train.split_target_k = *options.split_target_k;
  cfg.validate();
  return cfg;
}

int cmd_synth(const CliOptions& options, std::ostream& out) {
  const RunConfig cfg = resolve_config(options);
  std::filesystem::path path = options.out ? *options.out : cfg.data_path;
  if (path.empty()) path = "synth.csv";
  const Dataset ds = synthesize_dataset(cfg.synth);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_dataset(path, ds);

  std::map<int, long> per_class;
  std::map<int, long> per_subject;
  for (const auto& s : ds.segments) {
    ++per_class[s.label.value_or(-1)];
    ++per_subject[s.subject];
  }
  out << "wrote " << ds.segments.size() << " segments to " << path.string() << '\n';
  for (const auto& [c, n] : per_class) out << "class " << c << ": " << n << '\n';
  for (const auto& [s, n] : per_subject) out << "subject " << s << ": " << n << '\n';
  return 0;
}

int cmd_train(const CliOptions& options, std::ostream& out) {
  RunConfig cfg = resolve_config(options);
  if (options.out) cfg.out_dir = *options.out;
  const Dataset ds = load_source(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  {
    std::ofstream echo(cfg.out_dir / "config.ini");
    echo << format_config(cfg);
    if (!echo) throw Error("cannot write " + (cfg.out_dir / "config.ini").string());
  }
  RunOptions ro;
  ro.workers = cfg.folds_parallel;
  ro.out_dir = cfg.out_dir;
  ro.target_subject = cfg.target_subject;
  const ResultTable table = run_loso(cfg.train, ds, ro);
  out << table.format();
  return table.failed_folds > 0 ? 1 : 0;
}

int cmd_gradcheck(const CliOptions& options, std::ostream& out) {
  GradientSuiteOptions go;
  go.inject_fault = options.inject_fault;
  if (options.seed) {
    go.seeds.clear();
    for (std::uint64_t i = 0; i < 5; ++i) go.seeds.push_back(*options.seed + i);
  }
  const GradientSuiteReport report = run_gradient_suite(go);
  std::map<std::string, double> per_loss;
  char line[160];
  for (const auto& e : report.entries) {
    std::snprintf(line, sizeof line, "%-20s %-8s %.3e\n", e.loss.c_str(), e.param.c_str(), e.max_rel_error);
    out << line;
    per_loss[e.loss] = std::max(per_loss[e.loss], e.max_rel_error);
  }
  for (const auto& [loss, worst] : per_loss) {
    std::snprintf(line, sizeof line, "worst %-20s %.3e\n", loss.c_str(), worst);
    out << line;
  }
  std::snprintf(line, sizeof line, "%s (tolerance %.0e, %zu seeds)\n", report.passed ? "OK" : "FAILED",
                go.tolerance, go.seeds.size());
  out << line;
  return report.passed ? 0 : 1;
}

RunSummary read_run(const std::filesystem::path& dir) {
  const std::filesystem::path path = dir / "metrics.jsonl";
  std::ifstream in(path);
  if (!in) throw Error("missing metrics: " + path.string());
  RunSummary run;
  run.dir = dir;
  std::map<int, std::vector<double>> sums;
  std::map<int, int> counts;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    try {
      if (j.value("final", false)) {
        run.fold_accuracy.push_back(j.at("accuracy").get<double>());
      } else if (j.contains("mmd_ST")) {
        const int epoch = j.at("epoch").get<int>();
        const std::vector<double> v = {j.at("mmd_ST").get<double>(), j.at("mmd_SU").get<double>(),
                                       j.at("mmd_UT").get<double>(), j.at("weighted_divergence").get<double>()};
        auto& s = sums[epoch];
        s.resize(v.size(), 0.0);
        for (std::size_t i = 0; i < v.size(); ++i) s[i] += v[i];
        ++counts[epoch];
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": bad record: " + e.what());
    }
  }
  if (run.fold_accuracy.empty()) throw Error("no final fold records in " + path.string());
  for (auto& [epoch, s] : sums) {
    for (double& x : s) x /= counts[epoch];
    run.mmd_trend.emplace_back(epoch, s);
  }
  double sum = 0.0;
  for (double a : run.fold_accuracy) sum += a;
  run.mean = sum / static_cast<double>(run.fold_accuracy.size());
  double var = 0.0;
  for (double a : run.fold_accuracy) var += (a - run.mean) * (a - run.mean);
  run.std = std::sqrt(var / static_cast<double>(run.fold_accuracy.size()));

  std::ifstream summary(dir / "summary.json");
  if (summary) {
    try {
      run.ablations = nlohmann::json::parse(summary).value("ablations", "");
    } catch (const nlohmann::json::exception&) {
      run.ablations.clear();
    }
  }
  return run;
}

int cmd_report(const CliOptions& options, std::ostream& out) {
  if (options.run_dirs.empty()) throw Error("report: no run directory given");
  std::vector<RunSummary> runs;
  for (const auto& dir : options.run_dirs) runs.push_back(read_run(dir));
  char line[160];
  for (const auto& run : runs) {
    out << run.dir.string();
    if (!run.ablations.empty()) out << " [" << run.ablations << "]";
    out << ": " << percent_pair(run.mean, run.std) << " over " << run.fold_accuracy.size() << " folds\n";
    if (!run.mmd_trend.empty()) {
      out << "  epoch   mmd_ST   mmd_SU   mmd_UT  weighted\n";
      for (const auto& [epoch, v] : run.mmd_trend) {
        std::snprintf(line, sizeof line, "  %5d %8.4f %8.4f %8.4f %9.4f\n", epoch, v[0], v[1], v[2], v[3]);
        out << line;
      }
    }
  }
  for (std::size_t i = 1; i < runs.size(); ++i) {
    std::snprintf(line, sizeof line, "delta %s - %s: %+.2f points\n", runs[0].dir.string().c_str(),
                  runs[i].dir.string().c_str(), 100.0 * (runs[0].mean - runs[i].mean));
    out << line;
  }
  return 0;
}

}  // namespace protomatch
