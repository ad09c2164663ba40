#include <stdexcept>
#include <string>

#include "rbmsem/model.hpp"

namespace rbmsem::presets {

namespace {

constexpr double kTwoFactorSeThreshold = 5.0;
constexpr double kGcmSeThreshold = 500.0;
constexpr int kOccasions = 10;

ModelSpec make_two_factor(bool with_means) {
  const int p = 6;
  const int q = 2;
  ModelSpec::Patterns pats{MatrixPattern(p, 1), MatrixPattern(p, q), MatrixPattern(p, p, MatrixKind::Diagonal),
                           MatrixPattern(q, 1), MatrixPattern(q, q), MatrixPattern(q, q, MatrixKind::Diagonal)};
  auto& nu = pats[0];
  auto& lambda = pats[1];
  auto& theta = pats[2];
  auto& b = pats[4];
  auto& psi = pats[5];

  int next = 0;
  std::vector<std::string> names;
  if (with_means) {
    for (int j = 0; j < p; ++j) {
      nu.set_free(j, 0, next++);
      names.push_back("nu" + std::to_string(j + 1));
    }
  }
  lambda.set_fixed(0, 0, 1.0);
  lambda.set_fixed(3, 1, 1.0);
  for (auto [i, k] : {std::pair{1, 0}, std::pair{2, 0}, std::pair{4, 1}, std::pair{5, 1}}) {
    lambda.set_free(i, k, next++);
    names.push_back("lambda" + std::to_string(i + 1) + std::to_string(k + 1));
  }
  b.set_free(1, 0, next++);
  names.push_back("beta");
  for (int j = 0; j < p; ++j) {
    theta.set_free(j, j, next++);
    names.push_back("theta" + std::to_string(j + 1) + std::to_string(j + 1));
  }
  for (int k = 0; k < q; ++k) {
    psi.set_free(k, k, next++);
    names.push_back("psi" + std::to_string(k + 1) + std::to_string(k + 1));
  }
  ModelSpec spec(p, q, std::move(pats), with_means, std::move(names),
                 with_means ? "two_factor_with_means" : "two_factor");
  return spec.with_se_threshold(kTwoFactorSeThreshold);
}

}  // namespace

ModelSpec two_factor() { return make_two_factor(false); }
ModelSpec two_factor_with_means() { return make_two_factor(true); }

ModelSpec gcm() {
  const int p = kOccasions;
  const int q = 2;
  ModelSpec::Patterns pats{MatrixPattern(p, 1), MatrixPattern(p, q), MatrixPattern(p, p, MatrixKind::Diagonal),
                           MatrixPattern(q, 1), MatrixPattern(q, q), MatrixPattern(q, q, MatrixKind::Symmetric)};
  auto& lambda = pats[1];
  auto& theta = pats[2];
  auto& alpha = pats[3];
  auto& psi = pats[5];
  for (int t = 0; t < p; ++t) {
    lambda.set_fixed(t, 0, 1.0);
    lambda.set_fixed(t, 1, static_cast<double>(t));
  }
  alpha.set_free(0, 0, 0);
  alpha.set_free(1, 0, 1);
  psi.set_free(0, 0, 2);
  psi.set_free(1, 1, 3);
  psi.set_free(1, 0, 4);
  for (int t = 0; t < p; ++t) theta.set_free(t, t, 5);
  ModelSpec spec(p, q, std::move(pats), true, {"alpha1", "alpha2", "psi11", "psi22", "psi12", "theta11"}, "gcm");
  return spec.with_se_threshold(kGcmSeThreshold);
}

Vector two_factor_truth(Reliability rel) {
  Vector t(13);
  if (rel == Reliability::High) {
    t << 0.7, 0.6, 0.7, 0.6, 0.25, 0.25, 0.1225, 0.09, 0.25, 0.1225, 0.09, 1.0, 1.0;
  } else {
    t << 0.7, 0.6, 0.7, 0.6, 0.25, 1.0, 0.49, 0.36, 1.0, 0.49, 0.36, 1.0, 1.0;
  }
  return t;
}

Vector two_factor_with_means_truth(Reliability rel) {
  Vector t(19);
  t << Vector::Zero(6), two_factor_truth(rel);
  return t;
}

Vector gcm_truth(Reliability rel) {
  Vector t(6);
  if (rel == Reliability::High) {
    t << 0.0, 0.0, 550.0, 100.0, 40.0, 500.0;
  } else {
    t << 0.0, 0.0, 275.0, 50.0, 20.0, 1300.0;
  }
  return t;
}

bool is_preset(std::string_view name) {
  return name == "two_factor" || name == "two_factor_with_means" || name == "gcm";
}

ModelSpec by_name(std::string_view name) {
  if (name == "two_factor") return two_factor();
  if (name == "two_factor_with_means") return two_factor_with_means();
  if (name == "gcm") return gcm();
  throw std::invalid_argument("unknown model preset '" + std::string(name) + "'");
}

Vector truth(std::string_view name, Reliability rel) {
  if (name == "two_factor") return two_factor_truth(rel);
  if (name == "two_factor_with_means") return two_factor_with_means_truth(rel);
  if (name == "gcm") return gcm_truth(rel);
  throw std::invalid_argument("unknown model preset '" + std::string(name) + "'");
}

Reliability parse_reliability(std::string_view text) {
  if (text == "high" || text == "0.8") return Reliability::High;
  if (text == "low" || text == "0.5") return Reliability::Low;
  throw std::invalid_argument("reliability must be 'high' or 'low', got '" + std::string(text) + "'");
}

std::string_view reliability_name(Reliability rel) { return rel == Reliability::High ? "high" : "low"; }

}  // namespace rbmsem::presets
