// martlens: command-line driver for the pricing pipeline.
//
// Exit status: 0 success, 1 domain error, 2 usage error.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "martlens/discretize.hpp"
#include "martlens/edge_sim.hpp"
#include "martlens/error.hpp"
#include "martlens/fileio.hpp"
#include "martlens/hashing.hpp"
#include "martlens/lime.hpp"
#include "martlens/linreg.hpp"
#include "martlens/mart_data.hpp"
#include "martlens/model_io.hpp"
#include "martlens/render.hpp"
#include "martlens/service.hpp"
#include "martlens/weight_bands.hpp"
#include "martlens/wire.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace martlens;

namespace {

fs::path data_root() {
  const char* env = std::getenv(std::string(service::kDataRootEnv).c_str());
  return env && *env ? fs::path(env) : fs::path("martlens-data");
}

json metrics_json(const linreg::RegressionMetrics& m) {
  return {{"rmse", m.rmse}, {"mae", m.mae}, {"r2", m.r2}};
}

std::string metrics_line(const linreg::RegressionMetrics& m) {
  return fmt::format("rmse={:.4f}  mae={:.4f}  r2={:.4f}", m.rmse, m.mae, m.r2);
}

// Inline JSON, or @path to read it from a file.
std::map<std::string, double> parse_instance_arg(const std::string& arg) {
  const std::string text = !arg.empty() && arg[0] == '@' ? read_file(arg.substr(1)) : arg;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, fmt::format("--instance is not valid JSON: {}", e.what()));
  }
  if (!j.is_object()) throw Error(ErrorKind::kParse, "--instance must be a JSON object");
  std::map<std::string, double> out;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_number()) {
      throw Error(ErrorKind::kParse, fmt::format("feature '{}' must be a number", k));
    }
    out[k] = v.get<double>();
  }
  return out;
}

ModelBundle load_bundle(const fs::path& path) { return parse_bundle(read_file(path)); }

struct Common {
  bool json = false;
};

void add_json_flag(CLI::App* cmd, Common& c) {
  cmd->add_flag("--json", c.json, "Machine-readable JSON output");
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::size_t rows = 1000;
  std::uint64_t seed = 1;
  std::string out = "mart.csv";
};

int run_gen_data(const GenDataArgs& a, const Common& c) {
  const SyntheticMart mart = gen_synthetic_mart(a.rows, a.seed);
  const fs::path out(a.out);
  fs::path meta = out;
  meta.replace_extension(".meta.json");
  write_csv(mart.data, out);
  write_file_atomic(meta, mart.params.to_json());
  if (c.json) {
    std::cout << json{{"path", out.string()},
                      {"meta", meta.string()},
                      {"rows", mart.data.size()},
                      {"clamped_targets", mart.params.clamped_targets}}
                     .dump()
              << "\n";
  } else {
    std::cout << fmt::format("wrote {} rows to {}\nground truth in {}\n", mart.data.size(),
                             out.string(), meta.string());
  }
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string target = std::string(kDefaultTarget);
  double lambda = 0.0;
  int bins = discretize::kDefaultBins;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 1;
  std::string out;
};

int run_train(const TrainArgs& a, const Common& c) {
  const std::string csv = read_file(a.data);
  const Dataset data = parse_csv(csv, a.target);
  const auto [train, test] = split_train_test(data, a.train_fraction, a.split_seed);
  ModelBundle bundle;
  bundle.dataset_id = sha256_hex(format_csv_table(parse_csv_table(csv)));
  bundle.model = linreg::fit(train, a.lambda);
  bundle.discretization =
      discretize::Discretization::fit(train.design(), train.schema().feature_names, a.bins);
  const std::string serialized = serialize_bundle(bundle);
  const std::string id = content_id(serialized);
  const fs::path out = a.out.empty() ? data_root() / "models" / (id + ".json") : fs::path(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_file_atomic(out, serialized);
  const auto test_metrics = linreg::evaluate(bundle.model, test);
  if (c.json) {
    std::cout << json{{"model_id", id},
                      {"model_path", out.string()},
                      {"dataset_id", bundle.dataset_id},
                      {"n_train", train.size()},
                      {"n_test", test.size()},
                      {"metrics", metrics_json(bundle.model.train_metrics)},
                      {"test_metrics", metrics_json(test_metrics)}}
                     .dump()
              << "\n";
    return 0;
  }
  std::cout << fmt::format("model  {}\nid     {}\n", out.string(), id);
  std::cout << fmt::format("train  n={:<6} {}\n", train.size(),
                           metrics_line(bundle.model.train_metrics));
  std::cout << fmt::format("test   n={:<6} {}\n\n", test.size(), metrics_line(test_metrics));
  std::cout << fmt::format("{:<20} {:>14}\n", "(intercept)", fmt::format("{:.4f}", bundle.model.intercept));
  for (std::size_t j = 0; j < bundle.model.size(); ++j) {
    std::cout << fmt::format("{:<20} {:>14}{}\n", bundle.model.feature_names[j],
                             fmt::format("{:.4f}", bundle.model.coefficients[j]),
                             bundle.model.dropped[j] ? "  (constant, dropped)" : "");
  }
  return 0;
}

struct EvaluateArgs {
  std::string model;
  std::string data;
  std::string target;
};

int run_evaluate(const EvaluateArgs& a, const Common& c) {
  const ModelBundle bundle = load_bundle(a.model);
  const std::string target = a.target.empty() ? bundle.model.target_name : a.target;
  const Dataset data = load_csv(a.data, target);
  const auto m = linreg::evaluate(bundle.model, data);
  if (c.json) {
    std::cout << json{{"n", data.size()}, {"metrics", metrics_json(m)}}.dump() << "\n";
  } else {
    std::cout << fmt::format("n={}  {}\n", data.size(), metrics_line(m));
  }
  return 0;
}

struct ExplainArgs {
  std::string model;
  std::string instance;
  std::uint64_t seed = lime::kDefaultSeed;
  std::size_t samples = 5000;
  std::size_t features = 6;
  std::vector<std::string> sets;
};

lime::ExplainerConfig explainer_config(const ExplainArgs& a) {
  lime::ExplainerConfig cfg;
  cfg.seed = a.seed;
  cfg.num_samples = a.samples;
  cfg.num_features = a.features;
  cfg.validate();
  return cfg;
}

int run_predict(const ExplainArgs& a, const Common& c) {
  const ModelBundle bundle = load_bundle(a.model);
  const double price = bundle.model.predict(bundle.model.align(parse_instance_arg(a.instance)));
  if (c.json) {
    std::cout << json{{"price", price}}.dump() << "\n";
  } else {
    std::cout << fmt::format("{:.2f}\n", price);
  }
  return 0;
}

int run_explain(const ExplainArgs& a, const Common& c) {
  const ModelBundle bundle = load_bundle(a.model);
  const auto e = lime::explain(bundle.model, bundle.discretization,
                               parse_instance_arg(a.instance), explainer_config(a));
  std::cout << (c.json ? explanation_to_json_string(e) + "\n" : render_explanation(e));
  return 0;
}

int run_whatif(const ExplainArgs& a, const Common& c) {
  const ModelBundle bundle = load_bundle(a.model);
  const auto cfg = explainer_config(a);
  const auto before_in = parse_instance_arg(a.instance);
  auto after_in = before_in;
  for (const std::string& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorKind::kParse, fmt::format("--set expects NAME=VALUE, got '{}'", kv));
    }
    const std::string name = kv.substr(0, eq);
    if (!before_in.contains(name)) {
      throw SchemaMismatch({}, {name});
    }
    try {
      after_in[name] = std::stod(kv.substr(eq + 1));
    } catch (const std::exception&) {
      throw Error(ErrorKind::kParse, fmt::format("--set value for '{}' is not a number", name));
    }
  }
  const auto& model = bundle.model;
  const double before = model.predict(model.align(before_in));
  const double after = model.predict(model.align(after_in));
  const auto e_before = lime::explain(model, bundle.discretization, before_in, cfg);
  const auto e_after = lime::explain(model, bundle.discretization, after_in, cfg);
  if (c.json) {
    nlohmann::ordered_json out;
    out["before"] = {{"price", before}, {"explanation", to_json(e_before)}};
    out["after"] = {{"price", after}, {"explanation", to_json(e_after)}};
    out["delta"] = after - before;
    std::cout << out.dump() << "\n";
    return 0;
  }
  std::cout << "== before ==\n" << render_explanation(e_before);
  std::cout << "\n== after ==\n" << render_explanation(e_after);
  std::cout << fmt::format("\nprice {:.2f} -> {:.2f} (delta {:+.2f})\n", before, after,
                           after - before);
  return 0;
}

struct BandsArgs {
  std::string data;
  std::size_t n = 2000;
  std::uint64_t seed = 1;
  double width = 200.0;
  int classes = 4;
  double train_fraction = 0.8;
  double lambda = 0.0;
};

int run_bands_eval(const BandsArgs& a, const Common& c) {
  const bands::BandScheme scheme = bands::make_bands(a.width, a.classes);
  std::vector<bands::LabeledSample> samples;
  if (!a.data.empty()) {
    samples = bands::load_band_samples(a.data);
  } else {
    bands::BandDataOptions opt;
    opt.n = a.n;
    opt.seed = a.seed;
    opt.max_weight_kg = a.width * a.classes;
    opt.povs = {bands::kAllPovs.begin(), bands::kAllPovs.end()};
    samples = bands::gen_band_samples(opt);
  }
  const SplitIndices split = split_indices(samples.size(), a.train_fraction, a.seed);
  std::vector<bands::LabeledSample> train, test;
  for (std::size_t i : split.train) train.push_back(samples[i]);
  for (std::size_t i : split.test) test.push_back(samples[i]);
  const auto model = bands::train_band_model(train, a.lambda);
  const auto report = bands::evaluate_bands(model, test, scheme);
  std::cout << (c.json ? report.to_json() + "\n" : report.to_table());
  return 0;
}

struct EdgeArgs {
  std::size_t frames = 30;
  std::uint64_t seed = 7;
  std::size_t hold = 3;
  std::size_t stride = 1;
  double dedupe = 0.5;
  std::string stream_id = "animal-1";
  std::string endpoint;
  std::string out_dir;
  bool features = false;
};

int run_simulate_edge(const EdgeArgs& a, const Common& c) {
  edge::StreamOptions opt;
  opt.frames = a.frames;
  opt.seed = a.seed;
  opt.hold = a.hold;
  const auto raw = edge::gen_synthetic_stream(opt);
  const auto strided = edge::sample_stride(raw, a.stride);
  const auto kept = edge::dedupe_stream(strided, a.dedupe);
  if (!a.out_dir.empty()) {
    fs::create_directories(a.out_dir);
    for (const auto& f : kept) {
      edge::write_pgm(f, fs::path(a.out_dir) / fmt::format("frame_{:06}.pgm", f.id));
    }
  }
  const edge::SyntheticExtractor extractor;
  const auto packets = a.features ? wire::packetize_features(a.stream_id, kept, extractor)
                                  : wire::packetize(a.stream_id, kept);
  json out = {{"generated", raw.size()},
              {"after_stride", strided.size()},
              {"after_dedupe", kept.size()},
              {"packets", packets.size()},
              {"stream_id", a.stream_id}};
  std::optional<service::DeliveryReport> report;
  if (!a.endpoint.empty()) {
    report = service::transmit(packets, a.endpoint);
    out["delivery"] = report->to_json();
  }
  if (c.json) {
    std::cout << out.dump() << "\n";
    return 0;
  }
  std::cout << fmt::format("generated     {}\nafter stride  {}\nafter dedupe  {}\npackets       {}\n",
                           raw.size(), strided.size(), kept.size(), packets.size());
  if (report) {
    std::cout << fmt::format("acked         {} ({} duplicate)\nfailed        {}\nattempts      {}\n",
                             report->acked, report->duplicates, report->failed,
                             report->attempts);
    for (const auto& [sid, h] : report->highest_contiguous_seq) {
      std::cout << fmt::format("contiguous    {} through seq {}\n", sid, h);
    }
  }
  return 0;
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_root;
};

int run_serve(const ServeArgs& a, const Common& c) {
  // Block termination signals before any server thread exists, then wait
  // for one here.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  service::ServiceConfig cfg;
  cfg.data_root = a.data_root.empty() ? data_root() : fs::path(a.data_root);
  service::PricingService svc(cfg);
  service::HttpServer server(svc);
  const int port = server.start(a.host, a.port);
  if (c.json) {
    std::cout << json{{"host", a.host}, {"port", port}, {"data_root", cfg.data_root.string()}}
                     .dump()
              << std::endl;
  } else {
    std::cout << fmt::format("listening on http://{}:{} (data root {})", a.host, port,
                             cfg.data_root.string())
              << std::endl;
  }
  int sig = 0;
  sigwait(&set, &sig);
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"martlens: explainable livestock pricing"};
  app.require_subcommand(1);
  Common common;

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic mart-sales CSV");
  gen_cmd->add_option("--rows", gen.rows, "Number of rows")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output CSV path")->capture_default_str();
  add_json_flag(gen_cmd, common);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Fit the price model");
  train_cmd->add_option("--data", train.data, "Sales CSV")->required();
  train_cmd->add_option("--target", train.target, "Target column")->capture_default_str();
  train_cmd->add_option("--lambda", train.lambda, "Ridge penalty")->capture_default_str();
  train_cmd->add_option("--bins", train.bins, "Quantile bins per feature")->capture_default_str();
  train_cmd->add_option("--train-fraction", train.train_fraction)->capture_default_str();
  train_cmd->add_option("--split-seed", train.split_seed)->capture_default_str();
  train_cmd->add_option("--out", train.out, "Model path (default: <data root>/models/<id>.json)");
  add_json_flag(train_cmd, common);

  EvaluateArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a model on a CSV");
  eval_cmd->add_option("--model", eval.model)->required();
  eval_cmd->add_option("--data", eval.data)->required();
  eval_cmd->add_option("--target", eval.target, "Default: the model's target");
  add_json_flag(eval_cmd, common);

  ExplainArgs ex;
  auto add_instance_opts = [&](CLI::App* cmd, bool lime_opts) {
    cmd->add_option("--model", ex.model)->required();
    cmd->add_option("--instance", ex.instance, "JSON object, or @file")->required();
    if (lime_opts) {
      cmd->add_option("--seed", ex.seed)->capture_default_str();
      cmd->add_option("--samples", ex.samples)->capture_default_str();
      cmd->add_option("--features", ex.features)->capture_default_str();
    }
    add_json_flag(cmd, common);
  };
  auto* predict_cmd = app.add_subcommand("predict", "Predict a price");
  add_instance_opts(predict_cmd, false);
  auto* explain_cmd = app.add_subcommand("explain", "Explain a predicted price");
  add_instance_opts(explain_cmd, true);
  auto* whatif_cmd = app.add_subcommand("whatif", "Compare a price before and after edits");
  add_instance_opts(whatif_cmd, true);
  whatif_cmd->add_option("--set", ex.sets, "NAME=VALUE override (repeatable)");

  BandsArgs bands_args;
  auto* bands_cmd = app.add_subcommand("bands-eval", "Evaluate weight-band classification");
  bands_cmd->add_option("--data", bands_args.data, "Labeled-sample CSV (default: synthetic)");
  bands_cmd->add_option("--n", bands_args.n)->capture_default_str();
  bands_cmd->add_option("--seed", bands_args.seed)->capture_default_str();
  bands_cmd->add_option("--width", bands_args.width, "Band width in kg")->capture_default_str();
  bands_cmd->add_option("--classes", bands_args.classes)->capture_default_str();
  bands_cmd->add_option("--train-fraction", bands_args.train_fraction)->capture_default_str();
  bands_cmd->add_option("--lambda", bands_args.lambda)->capture_default_str();
  add_json_flag(bands_cmd, common);

  EdgeArgs edge_args;
  auto* edge_cmd = app.add_subcommand("simulate-edge", "Sample, dedupe and ship frames");
  edge_cmd->add_option("--frames", edge_args.frames)->capture_default_str();
  edge_cmd->add_option("--seed", edge_args.seed)->capture_default_str();
  edge_cmd->add_option("--hold", edge_args.hold)->capture_default_str();
  edge_cmd->add_option("--stride", edge_args.stride)->capture_default_str();
  edge_cmd->add_option("--dedupe-threshold", edge_args.dedupe)->capture_default_str();
  edge_cmd->add_option("--stream-id", edge_args.stream_id)->capture_default_str();
  edge_cmd->add_option("--endpoint", edge_args.endpoint, "Service base URL");
  edge_cmd->add_option("--out-dir", edge_args.out_dir, "Write kept frames as PGM");
  edge_cmd->add_flag("--send-features", edge_args.features,
                     "Extract on the edge and send feature vectors");
  add_json_flag(edge_cmd, common);

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  serve_cmd->add_option("--host", serve.host)->capture_default_str();
  serve_cmd->add_option("--port", serve.port)->capture_default_str();
  serve_cmd->add_option("--data-root", serve.data_root,
                        fmt::format("Default: ${} or ./martlens-data", service::kDataRootEnv));
  add_json_flag(serve_cmd, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen, common);
    if (*train_cmd) return run_train(train, common);
    if (*eval_cmd) return run_evaluate(eval, common);
    if (*predict_cmd) return run_predict(ex, common);
    if (*explain_cmd) return run_explain(ex, common);
    if (*whatif_cmd) return run_whatif(ex, common);
    if (*bands_cmd) return run_bands_eval(bands_args, common);
    if (*edge_cmd) return run_simulate_edge(edge_args, common);
    if (*serve_cmd) return run_serve(serve, common);
  } catch (const SchemaMismatch& e) {
    std::cerr << fmt::format("error: SchemaMismatch: {}\n", e.what());
    return 1;
  } catch (const Error& e) {
    std::cerr << fmt::format("error: {}: {}\n", error_kind_name(e.kind()), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
