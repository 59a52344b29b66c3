// SPDX-License-Identifier: Apache-2.0
// Command-line front end. Talks to the library only through asmil.h.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "asmil/asmil.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Failure {
  int code;
  std::string message;
};

void check(asmil_status s, const std::string& context) {
  if (s == ASMIL_OK) return;
  const int code = (s == ASMIL_ERR_CONFIG || s == ASMIL_ERR_ARGUMENT) ? kExitUsage : kExitRuntime;
  throw Failure{code, context + ": " + asmil_last_error()};
}

struct DatasetDeleter {
  void operator()(asmil_dataset* p) const { asmil_dataset_free(p); }
};
struct ConfigDeleter {
  void operator()(asmil_config* p) const { asmil_config_free(p); }
};
struct ModelDeleter {
  void operator()(asmil_model* p) const { asmil_model_free(p); }
};
using DatasetPtr = std::unique_ptr<asmil_dataset, DatasetDeleter>;
using ConfigPtr = std::unique_ptr<asmil_config, ConfigDeleter>;
using ModelPtr = std::unique_ptr<asmil_model, ModelDeleter>;

std::string take(char* s) {
  std::string out = s ? s : "";
  asmil_string_free(s);
  return out;
}

DatasetPtr load_data(const std::string& path, const std::string& format) {
  asmil_dataset* ds = nullptr;
  check(asmil_dataset_load(path.c_str(), format.c_str(), &ds), "loading '" + path + "'");
  return DatasetPtr(ds);
}

ConfigPtr load_config(const std::string& path, const std::vector<std::string>& overrides) {
  asmil_config* cfg = nullptr;
  if (path.empty()) {
    check(asmil_config_new(&cfg), "config");
  } else {
    const asmil_status s = asmil_config_load(path.c_str(), &cfg);
    if (s == ASMIL_ERR_IO) throw Failure{kExitUsage, asmil_last_error()};
    check(s, "config '" + path + "'");
  }
  ConfigPtr owned(cfg);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Failure{kExitUsage, "--set expects key=value, got '" + kv + "'"};
    check(asmil_config_set(cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()),
          "--set " + kv);
  }
  return owned;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw Failure{kExitRuntime, "cannot write '" + path + "'"};
  out << text << '\n';
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Failure{kExitRuntime, "cannot open '" + path + "'"};
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

struct MetricsSink {
  std::ofstream file;
  bool echo = false;
};

void on_epoch(const char* record, void* user) {
  auto* sink = static_cast<MetricsSink*>(user);
  if (sink->file.is_open()) sink->file << record << '\n' << std::flush;
  if (sink->echo) std::cerr << record << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-stabilized multiple instance learning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(asmil_version()));

  std::string config_path, data_path, format = "bagds", val_path, out_path, metrics_path,
              trace_path, resume_path;
  std::vector<std::string> overrides;
  bool quiet = false;

  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  train->add_option("-c,--config", config_path, "Config file (key = value)");
  train->add_option("--set", overrides, "Override a config key: key=value");
  train->add_option("-d,--data", data_path, "Training dataset")->required();
  train->add_option("-f,--format", format, "Dataset format")->capture_default_str();
  train->add_option("--val", val_path, "Validation dataset (same format)");
  train->add_option("-o,--out", out_path, "Checkpoint path")->required();
  train->add_option("--metrics", metrics_path, "Metrics stream (one JSON record per epoch)");
  train->add_option("--trace", trace_path, "Attention trace dump (JSON)");
  train->add_option("--resume", resume_path, "Continue from this checkpoint");
  train->add_flag("-q,--quiet", quiet, "Do not echo metrics to stderr");

  std::string model_path;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->add_option("-m,--model", model_path, "Checkpoint")->required();
  eval->add_option("-d,--data", data_path, "Dataset")->required();
  eval->add_option("-f,--format", format, "Dataset format")->capture_default_str();
  eval->add_option("-o,--out", out_path, "Report path (default stdout)");

  std::size_t window = 10;
  auto* diagnose = app.add_subcommand("diagnose", "Stability and concentration report from a trace");
  diagnose->add_option("-t,--trace", trace_path, "Attention trace (JSON)")->required();
  diagnose->add_option("-w,--window", window, "Final-epoch window")->capture_default_str();
  diagnose->add_option("-o,--out", out_path, "Report path (default stdout)");

  asmil_theorem_spec th;
  asmil_theorem_spec_default(&th);
  auto* verify = app.add_subcommand("verify-theorem", "Check the NSF and softmax bounds numerically");
  verify->add_option("--tau", th.tau)->capture_default_str();
  verify->add_option("--gamma", th.gamma)->capture_default_str();
  verify->add_option("--high", th.high)->capture_default_str();
  verify->add_option("--low", th.low)->capture_default_str();
  verify->add_option("--mid", th.n_mid)->capture_default_str();
  verify->add_option("--samples", th.samples)->capture_default_str();
  verify->add_option("--seed", th.seed)->capture_default_str();
  verify->add_option("--temperature", th.temperature)->capture_default_str();
  verify->add_option("--epsilon", th.epsilon, "Suppression target (default: NSF-achieved)");
  verify->add_option("--kappa", th.kappa, "Equalization target (default: NSF-achieved)");
  verify->add_option("-o,--out", out_path, "Report path (default stdout)");

  asmil_synthetic_spec syn;
  asmil_synthetic_spec_default(&syn);
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic bag dataset");
  gen->add_option("-o,--out", out_path, "Output bagds file")->required();
  gen->add_option("--bags", syn.n_bags)->capture_default_str();
  gen->add_option("--min-instances", syn.min_instances)->capture_default_str();
  gen->add_option("--max-instances", syn.max_instances)->capture_default_str();
  gen->add_option("--dim", syn.dim)->capture_default_str();
  gen->add_option("--witness-rate", syn.witness_rate)->capture_default_str();
  gen->add_option("--shift", syn.signal_shift)->capture_default_str();
  gen->add_option("--noise", syn.noise_scale)->capture_default_str();
  gen->add_option("--seed", syn.seed)->capture_default_str();

  double tol = 1e-8;
  auto* affine = app.add_subcommand("affine-check", "Ratio of affinely dependent bags");
  affine->add_option("-d,--data", data_path, "Dataset")->required();
  affine->add_option("-f,--format", format, "Dataset format")->capture_default_str();
  affine->add_option("--tol", tol, "Relative pivot tolerance")->capture_default_str();
  affine->add_option("-o,--out", out_path, "Report path (default stdout)");

  auto* convert = app.add_subcommand("convert", "Convert a dataset to the bagds format");
  convert->add_option("-i,--in", data_path, "Input dataset")->required();
  convert->add_option("-f,--format", format, "Input format")->required();
  convert->add_option("-o,--out", out_path, "Output bagds file")->required();

  std::size_t folds = 10;
  std::uint64_t split_seed = 0;
  auto* cv = app.add_subcommand("cv", "Stratified k-fold cross-validation");
  cv->add_option("-c,--config", config_path, "Config file (key = value)");
  cv->add_option("--set", overrides, "Override a config key: key=value");
  cv->add_option("-d,--data", data_path, "Dataset")->required();
  cv->add_option("-f,--format", format, "Dataset format")->capture_default_str();
  cv->add_option("-k,--folds", folds)->capture_default_str();
  cv->add_option("--split-seed", split_seed)->capture_default_str();
  cv->add_option("--metrics", metrics_path, "Metrics stream");
  cv->add_option("-o,--out", out_path, "Report path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train) {
      ConfigPtr cfg = resume_path.empty() ? load_config(config_path, overrides) : nullptr;
      DatasetPtr tr = load_data(data_path, format);
      DatasetPtr va = val_path.empty() ? nullptr : load_data(val_path, format);
      MetricsSink sink;
      sink.echo = !quiet;
      if (!metrics_path.empty()) {
        sink.file.open(metrics_path, resume_path.empty() ? std::ios::trunc : std::ios::app);
        if (!sink.file) throw Failure{kExitRuntime, "cannot write '" + metrics_path + "'"};
      }
      asmil_model* raw = nullptr;
      if (resume_path.empty()) {
        check(asmil_train(cfg.get(), tr.get(), va.get(), on_epoch, &sink, &raw), "train");
      } else {
        check(asmil_model_load(resume_path.c_str(), &raw), "loading checkpoint");
        ModelPtr tmp(raw);
        check(asmil_model_resume(raw, tr.get(), va.get(), 0, on_epoch, &sink), "resume");
        tmp.release();
      }
      ModelPtr model(raw);
      check(asmil_model_save(model.get(), out_path.c_str()), "saving checkpoint");
      if (!trace_path.empty()) {
        char* t = nullptr;
        check(asmil_model_trace(model.get(), &t), "trace");
        write_text(trace_path, take(t));
      }
    } else if (*eval) {
      asmil_model* raw = nullptr;
      check(asmil_model_load(model_path.c_str(), &raw), "loading checkpoint");
      ModelPtr model(raw);
      DatasetPtr ds = load_data(data_path, format);
      char* rep = nullptr;
      check(asmil_model_evaluate(model.get(), ds.get(), &rep), "eval");
      write_text(out_path, take(rep));
    } else if (*diagnose) {
      char* rep = nullptr;
      check(asmil_diagnose(read_text(trace_path).c_str(), window, &rep), "diagnose");
      write_text(out_path, take(rep));
    } else if (*verify) {
      char* rep = nullptr;
      check(asmil_verify_theorem(&th, &rep), "verify-theorem");
      const std::string text = take(rep);
      write_text(out_path, text);
      // Nonzero violations make the run fail.
      if (nlohmann::json::parse(text).at("violations").get<std::size_t>() != 0) {
        std::cerr << "bound violations found\n";
        return kExitRuntime;
      }
    } else if (*gen) {
      asmil_dataset* raw = nullptr;
      check(asmil_dataset_generate(&syn, &raw), "gen-data");
      DatasetPtr ds(raw);
      check(asmil_dataset_save(ds.get(), out_path.c_str()), "writing '" + out_path + "'");
    } else if (*affine) {
      DatasetPtr ds = load_data(data_path, format);
      char* rep = nullptr;
      check(asmil_affine_check(ds.get(), tol, &rep), "affine-check");
      write_text(out_path, take(rep));
    } else if (*convert) {
      DatasetPtr ds = load_data(data_path, format);
      check(asmil_dataset_save(ds.get(), out_path.c_str()), "writing '" + out_path + "'");
    } else if (*cv) {
      ConfigPtr cfg = load_config(config_path, overrides);
      DatasetPtr ds = load_data(data_path, format);
      MetricsSink sink;
      if (!metrics_path.empty()) {
        sink.file.open(metrics_path, std::ios::trunc);
        if (!sink.file) throw Failure{kExitRuntime, "cannot write '" + metrics_path + "'"};
      }
      char* rep = nullptr;
      check(asmil_cross_validate(cfg.get(), ds.get(), folds, split_seed, on_epoch, &sink, &rep),
            "cv");
      write_text(out_path, take(rep));
    }
  } catch (const Failure& f) {
    std::cerr << "asmil: " << f.message << '\n';
    return f.code;
  }
  return kExitOk;
}
