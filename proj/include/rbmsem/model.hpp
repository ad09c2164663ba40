#pragma once

#include <array>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace rbmsem {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class MatrixKind { General, Symmetric, Diagonal };

// Order matters: free cells are traversed nu, lambda, theta, alpha, b, psi.
enum class MatrixId : int { Nu = 0, Lambda, Theta, Alpha, B, Psi };
inline constexpr int kMatrixCount = 6;
inline constexpr std::array<MatrixId, kMatrixCount> kAllMatrices = {
    MatrixId::Nu, MatrixId::Lambda, MatrixId::Theta, MatrixId::Alpha, MatrixId::B, MatrixId::Psi};

std::string_view matrix_name(MatrixId id);

struct CellTag {
  double value = 0.0;
  int index = -1;  // free-parameter index, -1 when fixed

  static CellTag fixed(double v) { return {v, -1}; }
  static CellTag free(int idx) { return {0.0, idx}; }
  bool is_free() const { return index >= 0; }
};

/// Fixed/free layout of one model matrix. Symmetric patterns keep (i,j) and
/// (j,i) in lockstep; diagonal patterns reject off-diagonal free cells.
class MatrixPattern {
 public:
  MatrixPattern() = default;
  MatrixPattern(int rows, int cols, MatrixKind kind = MatrixKind::General);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  MatrixKind kind() const { return kind_; }
  bool symmetric() const { return kind_ != MatrixKind::General; }

  const CellTag& at(int i, int j) const { return cells_[static_cast<std::size_t>(i * cols_ + j)]; }
  void set_fixed(int i, int j, double value);
  void set_free(int i, int j, int index);

  /// Matrix of fixed values with zeros in free cells.
  Matrix fixed_part() const;

 private:
  void check_index(int i, int j) const;

  int rows_ = 0;
  int cols_ = 0;
  MatrixKind kind_ = MatrixKind::General;
  std::vector<CellTag> cells_;
};

struct ModelMatrices {
  Vector nu;
  Matrix lambda;
  Matrix theta;
  Vector alpha;
  Matrix b;
  Matrix psi;
};

struct FreeParameter {
  std::string name;
  MatrixId matrix = MatrixId::Nu;
  // Canonical cells: lower triangle only for symmetric matrices.
  std::vector<std::pair<int, int>> cells;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  bool is_variance() const;  // lives on the diagonal of theta or psi
};

/// Immutable SEM specification. Construction validates every structural
/// invariant and fails with std::invalid_argument.
class ModelSpec {
 public:
  using Patterns = std::array<MatrixPattern, kMatrixCount>;

  ModelSpec(int p, int q, Patterns patterns, bool mean_structure,
            std::vector<std::string> names = {}, std::string label = "custom");

  int p() const { return p_; }
  int q() const { return q_; }
  bool mean_structure() const { return mean_structure_; }
  const std::string& label() const { return label_; }
  const MatrixPattern& pattern(MatrixId id) const { return patterns_[static_cast<std::size_t>(id)]; }
  const Patterns& patterns() const { return patterns_; }

  std::size_t free_count() const { return params_.size(); }
  const std::vector<FreeParameter>& parameters() const { return params_; }
  std::vector<std::string> parameter_names() const;
  int index_of(std::string_view name) const;  // -1 when absent

  Vector lower_bounds() const;
  Vector upper_bounds() const;
  ModelSpec with_bounds(const Vector& lower, const Vector& upper) const;

  /// Largest admissible robust standard error for an acceptable fit.
  double se_threshold() const { return se_threshold_; }
  ModelSpec with_se_threshold(double threshold) const;

 private:
  int p_;
  int q_;
  Patterns patterns_;
  bool mean_structure_;
  std::string label_;
  std::vector<FreeParameter> params_;
  double se_threshold_ = std::numeric_limits<double>::infinity();
};

/// Parameter values together with their names, as reported to users.
struct ParamVector {
  Vector values;
  std::vector<std::string> names;

  static ParamVector of(const ModelSpec& spec, const Vector& values);
};

struct MomentStructure {
  Vector mu;
  Matrix sigma;
  Matrix sigma_star;
};

/// Everything the analytic derivatives need at one parameter value.
struct ModelState {
  ModelMatrices matrices;
  Matrix b_tilde;    // (I - B)^-1
  Vector kappa;      // b_tilde * alpha
  Matrix psi_tilde;  // b_tilde * psi * b_tilde^T
  MomentStructure moments;
};

Vector pack(const ModelSpec& spec, const ModelMatrices& matrices);
ModelMatrices unpack(const ModelSpec& spec, const Vector& theta);

ModelState evaluate_model(const ModelSpec& spec, const Vector& theta);
MomentStructure implied_moments(const ModelSpec& spec, const Vector& theta);

/// Average indicator reliability: mean of diag(Sigma*) / diag(Sigma).
double reliability(const ModelSpec& spec, const Vector& theta);

/// dM/dm_ij for a general (single-entry) or symmetric matrix.
Matrix structure_matrix(int i, int j, int rows, int cols, bool symmetric);

namespace presets {

enum class Reliability { High, Low };

/// Two-factor SEM on centred data: 13 parameters, intercepts profiled out.
ModelSpec two_factor();
/// Same model with the six item intercepts free (19 parameters).
ModelSpec two_factor_with_means();
/// Linear latent growth curve model over ten equally spaced occasions.
ModelSpec gcm();

Vector two_factor_truth(Reliability rel);
Vector two_factor_with_means_truth(Reliability rel);
Vector gcm_truth(Reliability rel);

bool is_preset(std::string_view name);
ModelSpec by_name(std::string_view name);
Vector truth(std::string_view name, Reliability rel);
Reliability parse_reliability(std::string_view text);
std::string_view reliability_name(Reliability rel);

}  // namespace presets

}  // namespace rbmsem
