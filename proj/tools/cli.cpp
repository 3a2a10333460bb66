#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "maxup/error.hpp"
#include "maxup/stats.hpp"
#include "maxup/suite.hpp"

namespace maxup::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown(const json& j, const std::string& prefix, const std::set<std::string>& known) {
  if (!j.is_object()) {
    throw ConfigInvalid((prefix.empty() ? std::string("config") : prefix.substr(0, prefix.size() - 1)) +
                        ": must be an object");
  }
  for (const auto& [key, value] : j.items()) {
    if (known.count(key)) continue;
    std::string msg = prefix + key + ": unknown key";
    if (key == "seed") msg += " (set the top-level seed instead)";
    throw ConfigInvalid(msg);
  }
}

template <class T>
T get(const json& j, const std::string& path, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigInvalid(path + key + ": " + e.what());
  }
}

std::string join(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out;
}

void check_names_valid(const std::vector<std::string>& names, const std::string& where) {
  for (const auto& n : names) {
    if (!is_check_name(n)) {
      throw ConfigInvalid(where + ": unknown check '" + n + "' (valid: " + join(check_names()) + ")");
    }
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigInvalid("--config: cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& dir, const std::string& name, const std::string& contents) {
  std::ofstream out(dir / name, std::ios::binary);
  if (!out) throw Error("cannot write " + (dir / name).string());
  out << contents;
  if (!out) throw Error("write failed for " + (dir / name).string());
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Everything a command needs before it may write anything.
struct Prepared {
  json raw;
  RunConfig cfg;
  TrainTestSplit split;
};

Prepared prepare(const Invocation& inv, bool needs_data) {
  Prepared p;
  p.raw = load_config(inv);
  p.cfg = resolve(p.raw);
  if (needs_data) {
    try {
      p.split = generate(p.cfg.data);
    } catch (const BadSpec& e) {
      throw ConfigInvalid(std::string("data: ") + e.what());
    }
    if (p.split.train.empty()) throw ConfigInvalid("data: training set is empty");
    const Model probe = build_model(p.cfg.model, p.split.train, p.cfg.seed);
    if (p.cfg.train.loss.kind == LossKind::softmax_ce && probe.is_binary()) {
      throw ConfigInvalid("train.loss.kind: softmax_ce needs multiclass data");
    }
  }
  return p;
}

template <class Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const ConfigInvalid& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace

void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigInvalid("--set " + assignment + ": expected key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigInvalid("--set " + path + ": empty key segment");
    if (!node->is_object()) {
      throw ConfigInvalid(path.substr(0, start ? start - 1 : 0) + ": not an object, cannot set " + path);
    }
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    if (!node->contains(key)) (*node)[key] = json::object();
    node = &(*node)[key];
    start = dot + 1;
  }
}

json load_config(const Invocation& inv) {
  json j = json::object();
  if (inv.config_path) {
    j = json::parse(read_file(*inv.config_path), nullptr, false);
    if (j.is_discarded()) throw ConfigInvalid("--config: " + *inv.config_path + " is not valid JSON");
    if (!j.is_object()) throw ConfigInvalid("config: top level must be an object");
  }
  for (const auto& s : inv.sets) apply_override(j, s);
  if (inv.seed) j["seed"] = *inv.seed;
  return j;
}

RunConfig resolve(const json& j) {
  reject_unknown(j, "", {"seed", "data", "model", "train", "verify", "bench"});
  RunConfig cfg;
  cfg.seed = get<std::uint64_t>(j, "", "seed", 0);

  const json data = j.value("data", json::object());
  reject_unknown(data, "data.",
                 {"kind", "n_train", "n_test", "d", "theta_star", "noise_sigma", "path", "test_path"});
  cfg.data = dataset_spec_from_json(data);
  cfg.data.seed = cfg.seed;
  if (!(cfg.data.noise_sigma >= 0.0)) throw ConfigInvalid("data.noise_sigma: must be nonnegative");
  if (cfg.data.kind == DatasetKind::gaussian_mixture_halfspace && !cfg.data.theta_star) {
    if (cfg.data.d == 0) throw ConfigInvalid("data.d: must be positive");
    cfg.data.theta_star = Tensor(Shape{cfg.data.d}, 1.0 / std::sqrt(static_cast<double>(cfg.data.d)));
  }
  if (cfg.data.kind == DatasetKind::csv && cfg.data.path.empty()) {
    throw ConfigInvalid("data.path: required for csv data");
  }

  const json model = j.value("model", json::object());
  reject_unknown(model, "model.", {"kind", "hidden", "activation"});
  cfg.model.kind = model_kind_from_string(get<std::string>(model, "model.", "kind", "linear"));
  cfg.model.hidden = get<std::vector<std::size_t>>(model, "model.", "hidden", cfg.model.hidden);
  cfg.model.activation =
      activation_from_string(get<std::string>(model, "model.", "activation", "tanh"));
  if (cfg.model.kind == ModelKind::mlp) {
    if (cfg.model.hidden.empty()) throw ConfigInvalid("model.hidden: an mlp needs a hidden layer");
    for (std::size_t w : cfg.model.hidden) {
      if (w == 0) throw ConfigInvalid("model.hidden: widths must be positive");
    }
  }

  const json train = j.value("train", json::object());
  reject_unknown(train, "train.", {"method", "m", "batch_size", "lr", "epochs", "warmup_epochs",
                                   "weight_decay", "augment", "loss"});
  cfg.train = train_config_from_json(train);
  cfg.train.seed = cfg.seed;

  const json verify = j.value("verify", json::object());
  reject_unknown(verify, "verify.", {"checks", "samples"});
  if (verify.contains("checks") && !(verify["checks"].is_string() && verify["checks"] == "all")) {
    cfg.verify.checks = get<std::vector<std::string>>(verify, "verify.", "checks", {});
    check_names_valid(cfg.verify.checks, "verify.checks");
  }
  cfg.verify.samples = get<std::uint64_t>(verify, "verify.", "samples", cfg.verify.samples);
  if (cfg.verify.samples == 0) throw ConfigInvalid("verify.samples: must be positive");

  const json bench = j.value("bench", json::object());
  reject_unknown(bench, "bench.", {"methods", "repeats"});
  if (bench.contains("methods")) {
    cfg.bench.methods.clear();
    for (const auto& name : get<std::vector<std::string>>(bench, "bench.", "methods", {})) {
      try {
        cfg.bench.methods.push_back(method_from_string(name));
      } catch (const ConfigInvalid& e) {
        throw ConfigInvalid(std::string("bench.methods: ") + e.what());
      }
    }
    if (cfg.bench.methods.empty()) throw ConfigInvalid("bench.methods: list is empty");
  }
  cfg.bench.repeats = get<std::size_t>(bench, "bench.", "repeats", cfg.bench.repeats);
  if (cfg.bench.repeats == 0) throw ConfigInvalid("bench.repeats: must be at least 1");
  return cfg;
}

json to_json(const RunConfig& cfg) {
  json data = maxup::to_json(cfg.data);
  data.erase("seed");
  json train = maxup::to_json(cfg.train);
  train.erase("seed");
  json methods = json::array();
  for (Method m : cfg.bench.methods) methods.push_back(maxup::to_string(m));
  json checks = cfg.verify.checks.empty() ? json("all") : json(cfg.verify.checks);
  return {{"seed", cfg.seed},
          {"data", data},
          {"model",
           {{"kind", maxup::to_string(cfg.model.kind)},
            {"hidden", cfg.model.hidden},
            {"activation", maxup::to_string(cfg.model.activation)}}},
          {"train", train},
          {"verify", {{"checks", checks}, {"samples", cfg.verify.samples}}},
          {"bench", {{"methods", methods}, {"repeats", cfg.bench.repeats}}}};
}

Model build_model(const ModelConfig& cfg, const Dataset& train, std::uint64_t seed) {
  const std::size_t d = train.dim;
  const std::size_t out = train.num_classes == 0 ? 1 : train.num_classes;
  if (cfg.kind == ModelKind::linear) {
    return out == 1 ? Model::linear(Tensor(Shape{d})) : Model::linear_multiclass(Tensor(Shape{out, d}));
  }
  std::vector<std::size_t> widths = {d};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(out);
  RngStream rng = derive_stream(seed, StreamPurpose::init, 0);
  return Model::mlp(widths, cfg.activation, rng);
}

int cmd_train(const Invocation& inv, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    Prepared p = prepare(inv, true);
    const Model init = build_model(p.cfg.model, p.split.train, p.cfg.seed);
    const TrainResult result = train(init, p.split, p.cfg.train);

    const fs::path dir(inv.out_dir);
    fs::create_directories(dir);
    write_file(dir, "trace.csv", trace_csv(result.trace));
    write_file(dir, "model.json", model_to_json(result.model).dump(2) + "\n");
    write_file(dir, "resolved_config.json", to_json(p.cfg).dump(2) + "\n");
    write_file(dir, "dataset.json", dataset_metadata(p.cfg.data, p.split).dump(2) + "\n");

    const EpochRecord& last = result.trace.epochs.back();
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "method %s  epochs %zu\ntrain_loss %.6g  test_loss %.6g\ntrain_acc %.4f  "
                  "test_acc %.4f\nmean_input_grad_norm %.6g\n",
                  maxup::to_string(p.cfg.train.method), result.trace.epochs.size(),
                  last.train_loss, last.test_loss, last.train_acc, last.test_acc,
                  last.mean_input_grad_norm);
    write_file(dir, "summary.txt", buf);
    out << buf;
    return kExitOk;
  });
}

int cmd_verify(const Invocation& inv, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    Prepared p = prepare(inv, false);
    if (!inv.checks.empty()) {
      check_names_valid(inv.checks, "--check");
      p.cfg.verify.checks = inv.checks;
    }
    if (inv.samples) {
      if (*inv.samples == 0) throw ConfigInvalid("--samples: must be positive");
      p.cfg.verify.samples = *inv.samples;
    }
    const std::vector<std::string> selected =
        p.cfg.verify.checks.empty() ? check_names() : p.cfg.verify.checks;

    const fs::path dir(inv.out_dir);
    fs::create_directories(dir);
    write_file(dir, "resolved_config.json", to_json(p.cfg).dump(2) + "\n");

    SuiteOptions options{p.cfg.verify.samples, p.cfg.seed};
    std::vector<VerificationReport> reports;
    for (const auto& name : selected) {
      CheckOutput result = run_check(name, options);
      for (const auto& [file, contents] : result.files) write_file(dir, file, contents);
      reports.insert(reports.end(), result.reports.begin(), result.reports.end());
    }
    write_file(dir, "reports.jsonl", to_jsonl(reports));
    const std::string table = summary_table(reports);
    write_file(dir, "summary.txt", table);
    out << table;

    const auto failed = std::count_if(reports.begin(), reports.end(), [](const auto& r) {
      return r.status == ReportStatus::fail;
    });
    out << reports.size() << " reports, " << failed << " failed\n";
    return failed ? kExitCheckFailed : kExitOk;
  });
}

int cmd_bench(const Invocation& inv, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    Prepared p = prepare(inv, true);
    const auto& methods = p.cfg.bench.methods;
    const std::size_t repeats = p.cfg.bench.repeats;
    const std::string hash = hex64(dataset_hash(p.split.train));

    struct Run {
      std::size_t repeat;
      Method method;
      EpochRecord last;
      StepCounters counters;
      double seconds;
    };
    std::vector<Run> runs(repeats * methods.size());
    parallel_for(runs.size(), [&](std::size_t i) {
      const std::size_t r = i / methods.size();
      TrainConfig cfg = p.cfg.train;
      cfg.method = methods[i % methods.size()];
      cfg.seed = p.cfg.seed + r;
      const Model init = build_model(p.cfg.model, p.split.train, cfg.seed);
      const auto t0 = std::chrono::steady_clock::now();
      const TrainResult res = train(init, p.split, cfg);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      runs[i] = {r, cfg.method, res.trace.epochs.back(), res.trace.method_counters(), secs};
    });

    const fs::path dir(inv.out_dir);
    fs::create_directories(dir);
    write_file(dir, "resolved_config.json", to_json(p.cfg).dump(2) + "\n");
    write_file(dir, "dataset.json", dataset_metadata(p.cfg.data, p.split).dump(2) + "\n");

    char buf[512];
    std::string per_run =
        "repeat,seed,method,m,test_loss,test_acc,mean_input_grad_norm,forward_count,"
        "backward_count,wall_time_s,dataset_hash\n";
    for (const auto& run : runs) {
      std::snprintf(buf, sizeof buf, "%zu,%llu,%s,%zu,%.17g,%.17g,%.17g,%llu,%llu,%.6f,%s\n",
                    run.repeat, static_cast<unsigned long long>(p.cfg.seed + run.repeat),
                    maxup::to_string(run.method), p.cfg.train.m, run.last.test_loss,
                    run.last.test_acc, run.last.mean_input_grad_norm,
                    static_cast<unsigned long long>(run.counters.forward),
                    static_cast<unsigned long long>(run.counters.backward), run.seconds,
                    hash.c_str());
      per_run += buf;
    }
    write_file(dir, "bench_runs.csv", per_run);

    std::string table =
        "method,repeats,m,test_loss,test_acc,mean_input_grad_norm,forward_count,backward_count,"
        "wall_time_s,dataset_hash\n";
    for (Method method : methods) {
      std::vector<double> loss, acc, grad, fwd, bwd, secs;
      for (const auto& run : runs) {
        if (run.method != method) continue;
        loss.push_back(run.last.test_loss);
        acc.push_back(run.last.test_acc);
        grad.push_back(run.last.mean_input_grad_norm);
        fwd.push_back(static_cast<double>(run.counters.forward));
        bwd.push_back(static_cast<double>(run.counters.backward));
        secs.push_back(run.seconds);
      }
      std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.6f,%s\n",
                    maxup::to_string(method), repeats, p.cfg.train.m, median(loss), median(acc),
                    median(grad), median(fwd), median(bwd), median(secs), hash.c_str());
      table += buf;
    }
    write_file(dir, "bench.csv", table);
    write_file(dir, "summary.txt", table);
    out << table;
    return kExitOk;
  });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Worst-case augmentation training and numerical checks", "maxup-lab"};
  app.require_subcommand(1);
  Invocation inv;

  auto common = [&inv](CLI::App* sub) {
    sub->add_option("--config", inv.config_path, "JSON config file");
    sub->add_option("--set", inv.sets, "Override a dot-path key, e.g. train.m=8")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
        ->expected(1);
    sub->add_option("--seed", inv.seed, "Top-level seed");
    sub->add_option("--out", inv.out_dir, "Output directory")->capture_default_str();
  };
  CLI::App* train_cmd = app.add_subcommand("train", "Train one model");
  CLI::App* verify_cmd = app.add_subcommand("verify", "Run numerical checks");
  CLI::App* bench_cmd = app.add_subcommand("bench", "Compare training methods");
  for (CLI::App* sub : {train_cmd, verify_cmd, bench_cmd}) common(sub);
  verify_cmd->add_option("--check", inv.checks, "Check to run (repeatable; default all)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->expected(1);
  verify_cmd->add_option("--samples", inv.samples, "Monte-Carlo budget per estimate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (train_cmd->parsed()) return cmd_train(inv, out, err);
  if (verify_cmd->parsed()) return cmd_verify(inv, out, err);
  return cmd_bench(inv, out, err);
}

}  // namespace maxup::cli
