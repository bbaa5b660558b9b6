// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "httplib.h"
#include "lime_cases.hpp"
#include "martlens/discretize.hpp"
#include "martlens/edge_sim.hpp"
#include "martlens/fileio.hpp"
#include "martlens/hashing.hpp"
#include "martlens/lime.hpp"
#include "martlens/linreg.hpp"
#include "martlens/mart_data.hpp"
#include "martlens/render.hpp"
#include "martlens/service.hpp"
#include "martlens/weight_bands.hpp"
#include "martlens/wire.hpp"
#include "oracles.hpp"

using namespace martlens;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

linreg::LinearModel fit_raw(const Matrix& x, std::span<const double> y,
                            std::span<const double> w, double lambda) {
  linreg::FitOptions o;
  o.lambda = lambda;
  o.standardize = false;
  return linreg::fit(x, y, w, o);
}

// ---------------------------------------------------------------------------

Outcome solver_oracle() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto p = oracle::random_ridge_problem(seed);
    const auto m = fit_raw(p.x, p.y, p.w, p.lambda);
    const auto o = oracle::weighted_ridge(oracle::rows_of(p.x), p.y, p.w, p.lambda);
    worst = std::max({worst, max_abs_diff(m.coefficients, o.coefs),
                      std::abs(m.intercept - o.intercept)});
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-8 && secs < 5.0,
          fmt::format("200 problems, max |coef error| {:.3e} (<= 1e-8), {:.2f} s (< 5 s)", worst,
                      secs)};
}

Outcome ols_invariants() {
  std::size_t failures = 0;
  double worst_orth = 0.0;
  const double grid[] = {0.0, 0.1, 0.5, 1.0, 5.0, 50.0, 500.0};
  for (std::uint64_t seed = 1000; seed < 1050; ++seed) {
    const auto p = oracle::random_ridge_problem(seed);
    // Orthogonality at lambda 0, uniform weights.
    const auto m = fit_raw(p.x, p.y, {}, 0.0);
    const auto fitted = m.predict_batch(p.x);
    double ymax = 0.0;
    for (double v : p.y) ymax = std::max(ymax, std::abs(v));
    for (std::size_t j = 0; j < p.x.cols(); ++j) {
      double dot = 0.0;
      for (std::size_t i = 0; i < p.x.rows(); ++i) dot += p.x(i, j) * (p.y[i] - fitted[i]);
      worst_orth = std::max(worst_orth, std::abs(dot) / ymax);
      if (std::abs(dot) > 1e-7 * ymax) ++failures;
    }
    // Ridge norm monotone over the grid.
    double prev = INFINITY;
    for (double lambda : grid) {
      const auto c = fit_raw(p.x, p.y, p.w, lambda).coefficients;
      const double nrm = std::sqrt(std::inner_product(c.begin(), c.end(), c.begin(), 0.0));
      if (nrm > prev * (1.0 + 1e-12)) ++failures;
      prev = nrm;
    }
    // Uniform weights equal the unweighted fit.
    const std::vector<double> w(p.y.size(), 2.75);
    const auto uw = fit_raw(p.x, p.y, w, 0.0);
    if (max_abs_diff(uw.coefficients, m.coefficients) > 1e-9 ||
        std::abs(uw.intercept - m.intercept) > 1e-9) {
      ++failures;
    }
  }
  return {failures == 0,
          fmt::format("50 instances, {} violations; worst orthogonality {:.2e}*|y|inf", failures,
                      worst_orth)};
}

struct LimeRun {
  LinearCase c;
  lime::ExplainTrace trace;
  oracle::SurrogateOracle exact;
};

std::vector<LimeRun>& lime_runs() {
  static std::vector<LimeRun> runs;
  return runs;
}

Outcome lime_exact_oracle() {
  const auto t0 = Clock::now();
  std::size_t matched = 0;
  std::string mismatches;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t d = 2 + seed % 7;  // 2..8
    LimeRun r{make_linear_case(seed, d), {}, {}};
    lime::ExplainerConfig cfg;
    cfg.num_samples = 20000;
    cfg.num_features = d;
    cfg.seed = 1000 + seed;
    r.trace = lime::explain_trace(r.c.black_box(), r.c.disc, r.c.instance, cfg);
    r.exact = oracle::exact_surrogate(r.c.disc, r.c.instance, r.c.coefs, r.c.bias,
                                      cfg.num_samples, cfg.resolved_kernel_width(d),
                                      cfg.surrogate_lambda);
    std::vector<double> sampled(d, 0.0);
    for (const auto& ct : r.trace.explanation.contributions) {
      const auto j = static_cast<std::size_t>(
          std::find(r.c.names.begin(), r.c.names.end(), ct.feature) - r.c.names.begin());
      sampled[j] = ct.weight;
    }
    const auto rs = oracle::rank_by_magnitude(sampled);
    const auto ro = oracle::rank_by_magnitude(r.exact.coefs);
    bool ok = rs[0] == ro[0] && rs[1] == ro[1];
    for (std::size_t k = 0; k < 2 && ok; ++k) {
      ok = std::signbit(sampled[rs[k]]) == std::signbit(r.exact.coefs[ro[k]]);
    }
    if (ok) {
      ++matched;
    } else {
      mismatches += fmt::format(
          " seed{}(d={}: sampled f{}={:.3f},f{}={:.3f} exact f{}={:.3f},f{}={:.3f},f{}={:.3f})",
          seed, d, rs[0], sampled[rs[0]], rs[1], sampled[rs[1]], ro[0], r.exact.coefs[ro[0]],
          ro[1], r.exact.coefs[ro[1]], ro[2], r.exact.coefs[ro[2]]);
    }
    lime_runs().push_back(std::move(r));
  }
  const double secs = seconds_since(t0);
  return {matched == 20 && secs < 60.0,
          fmt::format("{}/20 cases match top-2 sign and rank, {:.1f} s (< 60 s){}", matched, secs,
                      mismatches)};
}

Outcome lime_additivity_determinism() {
  std::size_t cases = 0, bad_sum = 0, bad_det = 0;
  double worst = 0.0;
  auto check = [&](const lime::ExplainTrace& t, const std::function<lime::Explanation()>& rerun) {
    ++cases;
    const auto& e = t.explanation;
    double sum = e.surrogate_intercept;
    for (const auto& c : e.contributions) sum += c.weight;
    const std::vector<double> ones(t.selected.size(), 1.0);
    const double err = std::abs(sum - t.surrogate.predict(ones));
    worst = std::max(worst, err);
    if (err > 1e-9) ++bad_sum;
    if (explanation_to_json_string(rerun()) != explanation_to_json_string(e)) ++bad_det;
  };
  for (const auto& r : lime_runs()) {
    lime::ExplainerConfig cfg;
    cfg.num_samples = 20000;
    cfg.num_features = r.c.names.size();
    cfg.seed = r.trace.explanation.seed;
    check(r.trace, [&] {
      return lime::explain_trace(r.c.black_box(), r.c.disc, r.c.instance, cfg).explanation;
    });
  }
  // The trained price model on synthetic mart data, default config.
  const auto mart = gen_synthetic_mart(2000, 8);
  const auto model = linreg::fit(mart.data, 0.0);
  const auto disc = discretize::Discretization::fit(mart.data.design(),
                                                    mart.data.schema().feature_names);
  for (std::size_t row = 0; row < 5; ++row) {
    const auto& values = mart.data.records()[row * 97].values;
    lime::ExplainerConfig cfg;
    cfg.seed = row;
    const auto t = lime::explain_trace(lime::as_black_box(model), disc, values, cfg);
    check(t, [&] { return lime::explain(model, disc, values, cfg); });
  }
  return {bad_sum == 0 && bad_det == 0,
          fmt::format("{} cases, additivity worst {:.2e} (<= 1e-9), {} nondeterministic", cases,
                      worst, bad_det)};
}

Outcome reference_format() {
  lime::Explanation e;
  e.predicted_value = 766.32;
  e.local_range = {240.07, 1487.18};
  e.contributions = {
      {"WT", {discretize::render_label("WT", 308.0, 327.0), "WT", 2}, -35.12},
      {"PPK", {discretize::render_label("PPK", 210.5, 214.1), "PPK", 1}, 20.5},
  };
  e.instance_values = {{"Weight", 327.0}, {"PPK", 214.1}};
  const std::string expected =
      "range\n"
      "  min        240.07\n"
      "  predicted  766.32\n"
      "  max        1487.18\n"
      "contributions\n"
      "  308.00 < WT <= 327.00       -35.12  [##########|          ]\n"
      "  210.50 < PPK <= 214.10      +20.50  [          |######    ]\n"
      "values\n"
      "  Weight=327.00\n"
      "  PPK=214.10\n";
  const std::string got = render_explanation(e);
  const bool labels = e.contributions[0].label.text == "308.00 < WT <= 327.00" &&
                      e.contributions[1].label.text == "210.50 < PPK <= 214.10";
  // The instance value 327.00 lands in the displayed bin.
  discretize::FeatureBins fb{"WT", {290.0, 308.0, 327.0}, {1, 1, 1, 1}, {0, 0, 0, 0}, {0, 0, 0, 0}};
  const discretize::Discretization disc({fb});
  const bool lands = disc.label(0, disc.locate(0, 327.0)).text == "308.00 < WT <= 327.00";
  return {got == expected && labels && lands,
          got == expected ? "three sections and label grammar byte-exact"
                          : "rendered output differs:\n" + got};
}

Outcome band_monotonicity() {
  using namespace martlens::bands;
  BandDataOptions opt;
  opt.n = 2000;
  opt.seed = 11;
  opt.signal_sigma = 25.0;
  const auto samples = gen_band_samples(opt);
  const auto split = split_indices(samples.size(), 0.8, 11);
  std::vector<LabeledSample> train, test;
  for (auto i : split.train) train.push_back(samples[i]);
  for (auto i : split.test) test.push_back(samples[i]);
  const auto model = train_band_model(train);
  const auto fine = evaluate_bands(model, test, make_bands(100, 8));
  const auto coarse = evaluate_bands(model, test, make_bands(200, 4));
  // Brute-force recount with an independent band rule.
  auto recount = [&](double width, int classes) {
    std::size_t hits = 0;
    for (const auto& s : test) {
      auto band = [&](double w) {
        int b = static_cast<int>(std::ceil(w / width)) - 1;
        return std::clamp(b, 0, classes - 1);
      };
      if (band(model.predict(s.features)) == band(s.true_weight_kg)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(test.size());
  };
  const bool recount_ok = recount(100, 8) == fine.accuracy && recount(200, 4) == coarse.accuracy;

  BandDataOptions pov;
  pov.n = 2000;
  pov.seed = 12;
  pov.povs = {Pov::kSide, Pov::kFront};
  pov.noise_povs = {Pov::kFront};
  const auto ps = gen_band_samples(pov);
  const auto psplit = split_indices(ps.size(), 0.8, 12);
  std::vector<LabeledSample> ptrain, ptest;
  for (auto i : psplit.train) ptrain.push_back(ps[i]);
  for (auto i : psplit.test) ptest.push_back(ps[i]);
  const auto prep = evaluate_bands(train_band_model(ptrain), ptest, make_bands(200, 4));
  const double side = prep.per_pov_accuracy.at(Pov::kSide);
  const double front = prep.per_pov_accuracy.at(Pov::kFront);
  return {coarse.accuracy >= fine.accuracy && recount_ok && side > front,
          fmt::format("acc(200kg)={:.4f} >= acc(100kg)={:.4f}, recount {}; side {:.4f} > front {:.4f}",
                      coarse.accuracy, fine.accuracy, recount_ok ? "agrees" : "DISAGREES", side,
                      front)};
}

Outcome edge_pipeline() {
  using namespace martlens::edge;
  std::vector<std::string> problems;
  // Hand oracles.
  auto flat = [](std::uint64_t id, std::uint8_t g) {
    return make_frame(id, id * 40, 4, 4, std::vector<std::uint8_t>(16, g));
  };
  std::vector<Frame> same, drift;
  for (std::uint64_t i = 0; i < 10; ++i) same.push_back(flat(i, 80));
  for (std::uint64_t i = 0; i < 30; ++i) drift.push_back(flat(i, static_cast<std::uint8_t>(i)));
  if (dedupe_stream(same, 0.0).size() != 1) problems.push_back("identical collapse");
  std::vector<std::uint64_t> kept;
  for (const auto& f : dedupe_stream(drift, 5.0)) kept.push_back(f.id);
  if (kept != std::vector<std::uint64_t>{0, 6, 12, 18, 24}) problems.push_back("drift spacing");
  std::vector<std::uint64_t> strided;
  for (const auto& f : sample_stride(drift, 6)) strided.push_back(f.id);
  if (strided != std::vector<std::uint64_t>{0, 6, 12, 18, 24}) problems.push_back("stride 6");

  // End to end over HTTP: duplicate resend plus one corrupted packet.
  const auto root = oracle::temp_dir("acc-edge");
  service::ServiceConfig cfg;
  cfg.data_root = root;
  service::PricingService svc(cfg);
  service::HttpServer server(svc);
  const int port = server.start("127.0.0.1", 0);
  const std::string endpoint = fmt::format("http://127.0.0.1:{}", port);

  StreamOptions so;
  so.frames = 60;
  const auto frames = dedupe_stream(sample_stride(gen_synthetic_stream(so), 1), 0.5);
  auto packets = wire::packetize("barn-1", frames);
  const std::uint64_t corrupt_seq = 4;
  packets[corrupt_seq].payload[packets[corrupt_seq].payload.size() - 3] ^= 0x10;
  std::vector<wire::FramePacket> resend(packets.begin() + 2, packets.begin() + 7);
  resend[corrupt_seq - 2] = wire::make_frame_packet("barn-1", corrupt_seq, frames[corrupt_seq]);

  service::TransmitOptions opt;
  opt.batch_size = 4;
  const auto first = service::transmit(packets, endpoint, opt);
  const auto second = service::transmit(resend, endpoint, opt);

  std::set<std::uint64_t> acked_unique;
  for (std::uint64_t s = 0; s < packets.size(); ++s) {
    if (s != corrupt_seq) acked_unique.insert(s);
  }
  for (const auto& p : resend) acked_unique.insert(p.seq);

  if (first.failed != 1 || first.rejected.size() != 1 || first.rejected[0].seq != corrupt_seq ||
      first.rejected[0].kind != ErrorKind::kChecksumRejected) {
    problems.push_back("corrupted packet not rejected alone");
  }
  if (first.acked != packets.size() - 1) problems.push_back("first pass ack count");
  if (second.duplicates != resend.size() - 1 || second.acked != resend.size()) {
    problems.push_back("resend ack/duplicate counts");
  }

  const auto table = parse_csv_table(read_file(root / "streams" / "barn-1" / "rows.csv"));
  std::multiset<std::uint64_t> stored;
  for (std::size_t r = 0; r < table.rows.rows(); ++r) {
    stored.insert(static_cast<std::uint64_t>(table.rows(r, 0)));
  }
  const std::multiset<std::uint64_t> expected(acked_unique.begin(), acked_unique.end());
  if (stored != expected) problems.push_back("stored rows != acked unique seqs");

  // Every stored row matches the features of the frame that was sent.
  const SyntheticExtractor ex;
  for (std::size_t r = 0; r < table.rows.rows(); ++r) {
    const auto seq = static_cast<std::size_t>(table.rows(r, 0));
    const auto want = ex.extract(frames[seq]);
    if (table.rows(r, 1) != want[0] || table.rows(r, 2) != want[1]) {
      problems.push_back(fmt::format("row for seq {} differs", seq));
      break;
    }
  }
  httplib::Client cli("127.0.0.1", port);
  const auto animals = cli.Get("/animals");
  if (!animals || json::parse(animals->body)["animals"].size() != expected.size()) {
    problems.push_back("/animals count");
  }
  server.stop();
  std::filesystem::remove_all(root);

  std::string detail = fmt::format(
      "stride/dedupe hand oracles; {} packets, 1 corrupted, {} resent: stored {} rows for {} "
      "acked unique seqs",
      packets.size(), resend.size(), stored.size(), expected.size());
  for (const auto& p : problems) detail += "; FAILED " + p;
  return {problems.empty(), detail};
}

Outcome service_round_trip() {
  const auto root = oracle::temp_dir("acc-svc");
  const std::string csv = to_csv(gen_synthetic_mart(1500, 31).data);
  json inst;
  {
    const auto one = gen_synthetic_mart(1, 77);
    for (std::size_t j = 0; j < one.data.schema().size(); ++j) {
      inst[one.data.schema().feature_names[j]] = one.data.records()[0].values[j];
    }
  }
  const std::string explain_body = json{{"instance", inst}, {"seed", 42}}.dump();

  auto session = [&](const std::function<void(httplib::Client&)>& fn) {
    service::ServiceConfig cfg;
    cfg.data_root = root;
    service::PricingService svc(cfg);
    service::HttpServer server(svc);
    const int port = server.start("127.0.0.1", 0);
    httplib::Client cli("127.0.0.1", port);
    fn(cli);
    server.stop();
  };

  std::string model_id, model_bytes, explanation, retrain_id, after_bytes, after_explanation;
  session([&](httplib::Client& cli) {
    const auto up = cli.Post("/datasets", csv, "text/csv");
    const std::string ds = json::parse(up->body)["dataset_id"];
    const auto tr = cli.Post("/models", json{{"dataset_id", ds}}.dump(), "application/json");
    model_id = json::parse(tr->body)["model_id"];
    model_bytes = cli.Get("/models/" + model_id)->body;
    explanation = cli.Post("/models/" + model_id + "/explain", explain_body, "application/json")->body;
  });
  session([&](httplib::Client& cli) {
    after_bytes = cli.Get("/models/" + model_id)->body;
    after_explanation =
        cli.Post("/models/" + model_id + "/explain", explain_body, "application/json")->body;
    const auto up = cli.Post("/datasets", csv, "text/csv");
    const std::string ds = json::parse(up->body)["dataset_id"];
    const auto tr = cli.Post("/models", json{{"dataset_id", ds}}.dump(), "application/json");
    retrain_id = json::parse(tr->body)["model_id"];
  });
  std::filesystem::remove_all(root);
  const bool bytes_ok = !model_bytes.empty() && model_bytes == after_bytes &&
                        sha256_hex(model_bytes) == model_id;
  const bool expl_ok = !explanation.empty() && explanation == after_explanation;
  const bool id_ok = retrain_id == model_id;
  return {bytes_ok && expl_ok && id_ok,
          fmt::format("model bytes identical after restart: {}; explanation identical: {}; "
                      "retrain id stable: {}",
                      bytes_ok, expl_ok, id_ok)};
}

Outcome synthetic_recovery() {
  const auto mart = gen_synthetic_mart(5000, 2024);
  const auto model = linreg::fit(mart.data, 0.0);
  // Standard errors from the explicit normal equations on [1 | X].
  const Matrix x = mart.data.design();
  const auto y = mart.data.targets();
  const std::size_t n = x.rows(), d = x.cols();
  oracle::Dense xtx(d + 1, std::vector<double>(d + 1, 0.0));
  std::vector<double> row(d + 1);
  for (std::size_t i = 0; i < n; ++i) {
    row[0] = 1.0;
    for (std::size_t j = 0; j < d; ++j) row[j + 1] = x(i, j);
    for (std::size_t a = 0; a <= d; ++a) {
      for (std::size_t b = 0; b <= d; ++b) xtx[a][b] += row[a] * row[b];
    }
  }
  const auto inv = oracle::inverse_full_pivot(xtx);
  const auto fitted = model.predict_batch(x);
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) sse += (y[i] - fitted[i]) * (y[i] - fitted[i]);
  const double sigma2 = sse / static_cast<double>(n - d - 1);
  std::size_t outside = 0;
  double worst = 0.0;
  std::string worst_name;
  for (std::size_t j = 0; j < d; ++j) {
    const double se = std::sqrt(sigma2 * inv[j + 1][j + 1]);
    const double z = std::abs(model.coefficients[j] - mart.params.coefficients[j].second) / se;
    if (z > worst) {
      worst = z;
      worst_name = mart.params.coefficients[j].first;
    }
    if (z > 3.0) ++outside;
  }
  const double r2 = model.train_metrics.r2;
  return {outside == 0 && r2 >= 0.0 && r2 <= 1.0 && mart.params.clamped_targets == 0,
          fmt::format("5000 rows, {} of {} coefficients beyond 3 SE (worst {} at {:.2f} SE), "
                      "train r2 {:.4f}, {} clamped targets",
                      outside, d, worst_name, worst, r2, mart.params.clamped_targets)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"solver-oracle-equivalence", solver_oracle},
      {"ols-invariants", ols_invariants},
      {"lime-exact-surrogate-oracle", lime_exact_oracle},
      {"lime-additivity-determinism", lime_additivity_determinism},
      {"explanation-format-conformance", reference_format},
      {"band-monotonicity", band_monotonicity},
      {"edge-pipeline", edge_pipeline},
      {"service-round-trip", service_round_trip},
      {"synthetic-recovery", synthetic_recovery},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    if (!o.pass) ++failed;
  }
  std::cout << fmt::format("{}/{} criteria passed", criteria.size() - failed, criteria.size())
            << std::endl;
  return failed == 0 ? 0 : 1;
}
