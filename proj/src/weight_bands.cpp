#include "martlens/weight_bands.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "martlens/error.hpp"
#include "martlens/fileio.hpp"
#include "martlens/mart_data.hpp"

namespace martlens::bands {

std::string BandScheme::label(int cls) const {
  const auto lo = std::llround(cls * width_kg);
  const auto hi = std::llround((cls + 1) * width_kg);
  return fmt::format("{}-{}", cls == 0 ? 0 : lo + 1, hi);
}

std::vector<std::string> BandScheme::labels() const {
  std::vector<std::string> out;
  for (int c = 0; c < num_classes; ++c) out.push_back(label(c));
  return out;
}

BandScheme make_bands(double width_kg, int num_classes) {
  if (!(width_kg > 0.0) || !std::isfinite(width_kg)) {
    throw Error(ErrorKind::kInvalidScheme, "band width must be > 0");
  }
  if (num_classes < 2) {
    throw Error(ErrorKind::kInvalidScheme, "need at least 2 weight classes");
  }
  return {width_kg, num_classes};
}

BandAssignment assign_band(double weight_kg, const BandScheme& scheme) {
  BandAssignment a;
  const double raw = std::ceil(weight_kg / scheme.width_kg) - 1.0;
  if (!(raw >= 0.0)) {
    a.index = 0;
  } else if (raw > scheme.num_classes - 1) {
    a.index = scheme.num_classes - 1;
    a.overflow = true;
  } else {
    a.index = static_cast<int>(raw);
  }
  return a;
}

std::string_view pov_name(Pov pov) {
  switch (pov) {
    case Pov::kSide: return "side";
    case Pov::kFront: return "front";
    case Pov::kBack: return "back";
    case Pov::kCross: return "cross";
  }
  return "side";
}

Pov parse_pov(std::string_view text) {
  for (Pov p : kAllPovs) {
    if (pov_name(p) == text) return p;
  }
  throw Error(ErrorKind::kParse, fmt::format("unknown point of view '{}'", text));
}

linreg::LinearModel train_band_model(const std::vector<LabeledSample>& train,
                                     double lambda) {
  if (train.empty()) throw Error(ErrorKind::kInvalidArgument, "no training samples");
  const std::size_t d = train.front().features.size();
  if (train.size() < d + 1) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("need at least {} samples for {} features", d + 1, d));
  }
  Matrix x(train.size(), d);
  std::vector<double> y(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].features.size() != d) {
      throw Error(ErrorKind::kDimensionMismatch, "ragged feature vectors");
    }
    std::copy(train[i].features.begin(), train[i].features.end(), x.row(i).begin());
    y[i] = train[i].true_weight_kg;
  }
  linreg::FitOptions options;
  options.lambda = lambda;
  options.target_name = "true_weight_kg";
  for (std::size_t j = 0; j < d; ++j) options.feature_names.push_back(fmt::format("f{}", j));
  linreg::LinearModel m = linreg::fit(x, y, {}, options);
  if (lambda == 0.0 &&
      std::all_of(m.dropped.begin(), m.dropped.end(), [](bool b) { return b; })) {
    throw Error(ErrorKind::kSingularMatrix,
                "every feature is constant; weight is not identifiable");
  }
  return m;
}

BandEvalReport evaluate_bands(const linreg::LinearModel& model,
                              const std::vector<LabeledSample>& test,
                              const BandScheme& scheme) {
  if (test.empty()) throw Error(ErrorKind::kInvalidArgument, "empty test set");
  Matrix x(test.size(), model.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test[i].features.size() != model.size()) {
      throw Error(ErrorKind::kDimensionMismatch, "feature width mismatch");
    }
    std::copy(test[i].features.begin(), test[i].features.end(), x.row(i).begin());
  }
  const std::vector<double> predicted = model.predict_batch(x);

  BandEvalReport r;
  r.scheme = scheme;
  r.total = test.size();
  const auto k = static_cast<std::size_t>(scheme.num_classes);
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));
  std::map<Pov, std::size_t> correct_by_pov;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const int truth = assign_band(test[i].true_weight_kg, scheme).index;
    const BandAssignment pred = assign_band(predicted[i], scheme);
    r.overflow_count += pred.overflow ? 1 : 0;
    ++r.confusion[truth][pred.index];
    ++r.per_pov_count[test[i].pov];
    if (truth == pred.index) {
      ++correct;
      ++correct_by_pov[test[i].pov];
    }
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);
  for (const auto& [pov, count] : r.per_pov_count) {
    r.per_pov_accuracy[pov] =
        static_cast<double>(correct_by_pov[pov]) / static_cast<double>(count);
  }
  return r;
}

std::string BandEvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["width_kg"] = scheme.width_kg;
  j["num_classes"] = scheme.num_classes;
  j["labels"] = scheme.labels();
  j["accuracy"] = accuracy;
  j["total"] = total;
  j["overflow_count"] = overflow_count;
  j["confusion"] = confusion;
  auto per_pov = nlohmann::ordered_json::object();
  auto counts = nlohmann::ordered_json::object();
  for (const auto& [pov, acc] : per_pov_accuracy) {
    per_pov[std::string(pov_name(pov))] = acc;
    counts[std::string(pov_name(pov))] = per_pov_count.at(pov);
  }
  j["per_pov_accuracy"] = std::move(per_pov);
  j["per_pov_count"] = std::move(counts);
  return j.dump();
}

std::string BandEvalReport::to_table() const {
  std::string out = fmt::format("bands: {} x {:g} kg   accuracy {:.4f} ({} samples)\n",
                                scheme.num_classes, scheme.width_kg, accuracy, total);
  const auto labels = scheme.labels();
  std::size_t w = 9;
  for (const auto& l : labels) w = std::max(w, l.size());
  out += fmt::format("{:>{}} |", "true\\pred", w);
  for (const auto& l : labels) out += fmt::format(" {:>{}}", l, w);
  out += "\n";
  for (std::size_t t = 0; t < confusion.size(); ++t) {
    out += fmt::format("{:>{}} |", labels[t], w);
    for (std::size_t c : confusion[t]) out += fmt::format(" {:>{}}", c, w);
    out += "\n";
  }
  for (const auto& [pov, acc] : per_pov_accuracy) {
    out += fmt::format("pov {:<6} accuracy {:.4f} ({} samples)\n", pov_name(pov), acc,
                       per_pov_count.at(pov));
  }
  return out;
}

std::vector<LabeledSample> gen_band_samples(const BandDataOptions& o) {
  std::mt19937_64 gen(o.seed);
  std::uniform_real_distribution<double> weight(o.min_weight_kg, o.max_weight_kg);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<LabeledSample> out;
  out.reserve(o.n);
  for (std::size_t i = 0; i < o.n; ++i) {
    LabeledSample s;
    s.true_weight_kg = weight(gen);
    s.pov = o.povs.empty() ? Pov::kSide : o.povs[i % o.povs.size()];
    const bool informative =
        std::find(o.noise_povs.begin(), o.noise_povs.end(), s.pov) == o.noise_povs.end();
    const double mid = 0.5 * (o.min_weight_kg + o.max_weight_kg);
    const double spread = (o.max_weight_kg - o.min_weight_kg) / std::sqrt(12.0);
    // Uninformative views replace the weight signal with noise of the same
    // marginal scale.
    s.features.push_back(informative ? s.true_weight_kg + o.signal_sigma * normal(gen)
                                     : mid + spread * normal(gen));
    for (std::size_t k = 0; k < o.noise_dims; ++k) s.features.push_back(normal(gen));
    out.push_back(std::move(s));
  }
  return out;
}

std::string band_samples_to_csv(const std::vector<LabeledSample>& samples) {
  const std::size_t d = samples.empty() ? 0 : samples.front().features.size();
  std::string out;
  for (std::size_t j = 0; j < d; ++j) out += fmt::format("f{},", j);
  out += "true_weight_kg,pov\n";
  for (const auto& s : samples) {
    for (double v : s.features) out += format_number(v) + ",";
    out += format_number(s.true_weight_kg);
    out += ",";
    out += pov_name(s.pov);
    out += "\n";
  }
  return out;
}

std::vector<LabeledSample> parse_band_samples_csv(std::string_view text) {
  // The pov column is textual, so split it off before the numeric parse.
  std::string numeric;
  std::vector<Pov> povs;
  std::size_t start = 0;
  std::size_t row = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    start = nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const std::size_t comma = line.rfind(',');
    if (comma == std::string_view::npos) {
      throw ParseError(row, "pov", "missing pov column");
    }
    const std::string_view last = line.substr(comma + 1);
    if (row == 0) {
      if (last != "pov") throw Error(ErrorKind::kSchema, "last column must be 'pov'");
    } else {
      try {
        povs.push_back(parse_pov(last));
      } catch (const Error&) {
        throw ParseError(row, "pov", fmt::format("unknown point of view '{}'", last));
      }
    }
    numeric.append(line.substr(0, comma));
    numeric += '\n';
    ++row;
  }
  const CsvTable table = parse_csv_table(numeric);
  if (table.header.empty() || table.header.back() != "true_weight_kg") {
    throw Error(ErrorKind::kSchema, "expected 'true_weight_kg' before 'pov'");
  }
  const std::size_t d = table.header.size() - 1;
  std::vector<LabeledSample> out;
  for (std::size_t r = 0; r < table.rows.rows(); ++r) {
    LabeledSample s;
    for (std::size_t j = 0; j < d; ++j) s.features.push_back(table.rows(r, j));
    s.true_weight_kg = table.rows(r, d);
    if (!(s.true_weight_kg > 0.0)) {
      throw ParseError(r + 1, "true_weight_kg", "weight must be > 0");
    }
    s.pov = povs[r];
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<LabeledSample> load_band_samples(const std::filesystem::path& path) {
  return parse_band_samples_csv(read_file(path));
}

}  // namespace martlens::bands
