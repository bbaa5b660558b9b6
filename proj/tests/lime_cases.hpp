#pragma once

#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "martlens/discretize.hpp"
#include "martlens/lime.hpp"
#include "martlens/matrix.hpp"

// Seeded linear black boxes over uniform training features.
struct LinearCase {
  std::vector<std::string> names;
  martlens::Matrix train;
  martlens::discretize::Discretization disc;
  std::vector<double> coefs;
  double bias = 0.0;
  std::vector<double> instance;

  martlens::lime::BlackBoxSpec black_box() const {
    martlens::lime::BlackBoxSpec spec;
    spec.feature_names = names;
    const auto c = coefs;
    const double b = bias;
    spec.predict = [c, b](const martlens::Matrix& x) {
      std::vector<double> out(x.rows());
      for (std::size_t i = 0; i < x.rows(); ++i) {
        double acc = b;
        for (std::size_t j = 0; j < c.size(); ++j) acc += c[j] * x(i, j);
        out[i] = acc;
      }
      return out;
    };
    const auto preds = spec.predict(train);
    spec.local_range = {*std::min_element(preds.begin(), preds.end()),
                        *std::max_element(preds.begin(), preds.end())};
    return spec;
  }
};

inline LinearCase make_linear_case(std::uint64_t seed, std::size_t d, std::size_t n_train = 400) {
  std::mt19937_64 rng(seed * 7919 + 17);
  std::uniform_real_distribution<double> lo(-50.0, 50.0), span(1.0, 100.0), u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  LinearCase c;
  c.bias = 100.0 * z(rng);
  std::vector<double> a(d), s(d);
  for (std::size_t j = 0; j < d; ++j) {
    c.names.push_back(fmt::format("f{}", j));
    a[j] = lo(rng);
    s[j] = span(rng);
    c.coefs.push_back(z(rng) * 10.0 / s[j] * (1.0 + 9.0 * u(rng)));
  }
  c.train = martlens::Matrix(n_train, d);
  for (std::size_t i = 0; i < n_train; ++i) {
    for (std::size_t j = 0; j < d; ++j) c.train(i, j) = a[j] + s[j] * u(rng);
  }
  c.disc = martlens::discretize::Discretization::fit(c.train, c.names, 4);
  const std::size_t pick = rng() % n_train;
  c.instance.assign(c.train.row(pick).begin(), c.train.row(pick).end());
  return c;
}
