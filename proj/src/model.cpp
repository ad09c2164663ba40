#include "rbmsem/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "rbmsem/errors.hpp"

namespace rbmsem {

namespace {

constexpr double kPivotThreshold = 1e-12;

std::pair<int, int> expected_shape(MatrixId id, int p, int q) {
  switch (id) {
    case MatrixId::Nu: return {p, 1};
    case MatrixId::Lambda: return {p, q};
    case MatrixId::Theta: return {p, p};
    case MatrixId::Alpha: return {q, 1};
    case MatrixId::B: return {q, q};
    case MatrixId::Psi: return {q, q};
  }
  return {0, 0};
}

std::string default_name(MatrixId id, int i, int j, bool symmetric) {
  std::string base{matrix_name(id)};
  if (id == MatrixId::Nu || id == MatrixId::Alpha) return base + std::to_string(i + 1);
  if (symmetric && i > j) std::swap(i, j);
  return base + std::to_string(i + 1) + std::to_string(j + 1);
}

// By value: nu and alpha are vectors and convert to a temporary matrix.
Matrix matrix_of(const ModelMatrices& m, MatrixId id) {
  switch (id) {
    case MatrixId::Nu: return m.nu;
    case MatrixId::Lambda: return m.lambda;
    case MatrixId::Theta: return m.theta;
    case MatrixId::Alpha: return m.alpha;
    case MatrixId::B: return m.b;
    case MatrixId::Psi: return m.psi;
  }
  throw std::logic_error("unknown matrix id");
}

}  // namespace

std::string_view matrix_name(MatrixId id) {
  switch (id) {
    case MatrixId::Nu: return "nu";
    case MatrixId::Lambda: return "lambda";
    case MatrixId::Theta: return "theta";
    case MatrixId::Alpha: return "alpha";
    case MatrixId::B: return "b";
    case MatrixId::Psi: return "psi";
  }
  return "?";
}

MatrixPattern::MatrixPattern(int rows, int cols, MatrixKind kind)
    : rows_(rows), cols_(cols), kind_(kind), cells_(static_cast<std::size_t>(rows * cols)) {
  if (rows < 0 || cols < 0) throw std::invalid_argument("negative pattern shape");
  if (kind != MatrixKind::General && rows != cols)
    throw std::invalid_argument("symmetric and diagonal patterns must be square");
}

void MatrixPattern::check_index(int i, int j) const {
  if (i < 0 || j < 0 || i >= rows_ || j >= cols_)
    throw std::out_of_range("pattern cell (" + std::to_string(i) + "," + std::to_string(j) +
                            ") outside " + std::to_string(rows_) + "x" + std::to_string(cols_));
}

void MatrixPattern::set_fixed(int i, int j, double value) {
  check_index(i, j);
  if (kind_ == MatrixKind::Diagonal && i != j && value != 0.0)
    throw std::invalid_argument("diagonal pattern has nonzero off-diagonal cell");
  cells_[static_cast<std::size_t>(i * cols_ + j)] = CellTag::fixed(value);
  if (symmetric()) cells_[static_cast<std::size_t>(j * cols_ + i)] = CellTag::fixed(value);
}

void MatrixPattern::set_free(int i, int j, int index) {
  check_index(i, j);
  if (index < 0) throw std::invalid_argument("free-parameter index must be nonnegative");
  if (kind_ == MatrixKind::Diagonal && i != j)
    throw std::invalid_argument("diagonal pattern cannot free an off-diagonal cell");
  cells_[static_cast<std::size_t>(i * cols_ + j)] = CellTag::free(index);
  if (symmetric()) cells_[static_cast<std::size_t>(j * cols_ + i)] = CellTag::free(index);
}

Matrix MatrixPattern::fixed_part() const {
  Matrix out = Matrix::Zero(rows_, cols_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j)
      if (!at(i, j).is_free()) out(i, j) = at(i, j).value;
  return out;
}

bool FreeParameter::is_variance() const {
  if (matrix != MatrixId::Theta && matrix != MatrixId::Psi) return false;
  return std::all_of(cells.begin(), cells.end(), [](const auto& c) { return c.first == c.second; });
}

ModelSpec::ModelSpec(int p, int q, Patterns patterns, bool mean_structure,
                     std::vector<std::string> names, std::string label)
    : p_(p), q_(q), patterns_(std::move(patterns)), mean_structure_(mean_structure),
      label_(std::move(label)) {
  if (p <= 0) throw std::invalid_argument("model needs at least one observed variable");
  if (q < 0) throw std::invalid_argument("negative latent count");

  for (MatrixId id : kAllMatrices) {
    const auto [r, c] = expected_shape(id, p, q);
    const MatrixPattern& pat = pattern(id);
    if (pat.rows() != r || pat.cols() != c)
      throw std::invalid_argument(std::string(matrix_name(id)) + " pattern has shape " +
                                  std::to_string(pat.rows()) + "x" + std::to_string(pat.cols()) +
                                  ", expected " + std::to_string(r) + "x" + std::to_string(c));
  }
  for (MatrixId id : {MatrixId::Theta, MatrixId::Psi})
    if (!pattern(id).symmetric())
      throw std::invalid_argument(std::string(matrix_name(id)) + " must be symmetric or diagonal");
  const MatrixPattern& bpat = pattern(MatrixId::B);
  for (int k = 0; k < q; ++k)
    if (bpat.at(k, k).is_free() || bpat.at(k, k).value != 0.0)
      throw std::invalid_argument("diag(B) must be fixed at zero");

  // Collect cells per free index in traversal order.
  std::map<int, FreeParameter> found;
  for (MatrixId id : kAllMatrices) {
    const MatrixPattern& pat = pattern(id);
    for (int i = 0; i < pat.rows(); ++i) {
      for (int j = 0; j < pat.cols(); ++j) {
        if (pat.symmetric() && j > i) continue;
        const CellTag& tag = pat.at(i, j);
        if (!tag.is_free()) continue;
        auto [it, inserted] = found.try_emplace(tag.index);
        FreeParameter& fp = it->second;
        if (inserted) {
          fp.matrix = id;
          fp.name = default_name(id, i, j, pat.symmetric());
        } else if (fp.matrix != id) {
          throw std::invalid_argument("free parameter " + std::to_string(tag.index) +
                                      " spans more than one matrix");
        }
        fp.cells.emplace_back(i, j);
      }
    }
  }
  const int m = static_cast<int>(found.size());
  if (!found.empty() && found.rbegin()->first != m - 1)
    throw std::invalid_argument("free-parameter indices must be contiguous from zero");
  if (m > p + p * (p + 1) / 2)
    throw std::invalid_argument("model has " + std::to_string(m) + " free parameters but only " +
                                std::to_string(p + p * (p + 1) / 2) + " moments");
  if (!names.empty() && static_cast<int>(names.size()) != m)
    throw std::invalid_argument("parameter name list does not match free-parameter count");

  params_.reserve(static_cast<std::size_t>(m));
  for (auto& [idx, fp] : found) {
    if (!names.empty()) fp.name = names[static_cast<std::size_t>(idx)];
    if (fp.is_variance()) fp.lower = 0.0;
    params_.push_back(std::move(fp));
  }
}

std::vector<std::string> ModelSpec::parameter_names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& fp : params_) out.push_back(fp.name);
  return out;
}

int ModelSpec::index_of(std::string_view name) const {
  for (std::size_t a = 0; a < params_.size(); ++a)
    if (params_[a].name == name) return static_cast<int>(a);
  return -1;
}

Vector ModelSpec::lower_bounds() const {
  Vector out(static_cast<Eigen::Index>(params_.size()));
  for (std::size_t a = 0; a < params_.size(); ++a) out[static_cast<Eigen::Index>(a)] = params_[a].lower;
  return out;
}

Vector ModelSpec::upper_bounds() const {
  Vector out(static_cast<Eigen::Index>(params_.size()));
  for (std::size_t a = 0; a < params_.size(); ++a) out[static_cast<Eigen::Index>(a)] = params_[a].upper;
  return out;
}

ModelSpec ModelSpec::with_bounds(const Vector& lower, const Vector& upper) const {
  if (lower.size() != static_cast<Eigen::Index>(params_.size()) || upper.size() != lower.size())
    throw std::invalid_argument("bound vectors do not match free-parameter count");
  ModelSpec out = *this;
  for (std::size_t a = 0; a < params_.size(); ++a) {
    const auto ia = static_cast<Eigen::Index>(a);
    if (!(lower[ia] <= upper[ia])) throw std::invalid_argument("lower bound exceeds upper bound");
    if (out.params_[a].is_variance() && lower[ia] < 0.0)
      throw std::invalid_argument("variance parameter " + params_[a].name + " needs a nonnegative lower bound");
    out.params_[a].lower = lower[ia];
    out.params_[a].upper = upper[ia];
  }
  return out;
}

ModelSpec ModelSpec::with_se_threshold(double threshold) const {
  if (!(threshold > 0.0)) throw std::invalid_argument("SE threshold must be positive");
  ModelSpec out = *this;
  out.se_threshold_ = threshold;
  return out;
}

ParamVector ParamVector::of(const ModelSpec& spec, const Vector& values) {
  if (values.size() != static_cast<Eigen::Index>(spec.free_count()))
    throw std::invalid_argument("parameter vector does not match the model");
  return {values, spec.parameter_names()};
}

Vector pack(const ModelSpec& spec, const ModelMatrices& matrices) {
  const auto m = static_cast<Eigen::Index>(spec.free_count());
  Vector theta = Vector::Constant(m, std::numeric_limits<double>::quiet_NaN());
  for (MatrixId id : kAllMatrices) {
    const MatrixPattern& pat = spec.pattern(id);
    const Matrix mat = matrix_of(matrices, id);
    if (mat.rows() != pat.rows() || mat.cols() != pat.cols())
      throw std::invalid_argument(std::string(matrix_name(id)) + " has the wrong shape");
    for (int i = 0; i < pat.rows(); ++i) {
      for (int j = 0; j < pat.cols(); ++j) {
        const CellTag& tag = pat.at(i, j);
        const double v = mat(i, j);
        if (!tag.is_free()) {
          if (v != tag.value)
            throw std::invalid_argument(std::string(matrix_name(id)) + "(" + std::to_string(i + 1) + "," +
                                        std::to_string(j + 1) + ") conflicts with its fixed value");
          continue;
        }
        double& slot_value = theta[tag.index];
        if (std::isnan(slot_value)) {
          slot_value = v;
        } else if (slot_value != v) {
          throw std::invalid_argument("cells sharing parameter " + spec.parameters()[static_cast<std::size_t>(tag.index)].name +
                                      " hold different values");
        }
      }
    }
  }
  return theta;
}

ModelMatrices unpack(const ModelSpec& spec, const Vector& theta) {
  if (theta.size() != static_cast<Eigen::Index>(spec.free_count()))
    throw std::invalid_argument("parameter vector has length " + std::to_string(theta.size()) + ", expected " +
                                std::to_string(spec.free_count()));
  ModelMatrices out;
  auto fill = [&](MatrixId id) {
    const MatrixPattern& pat = spec.pattern(id);
    Matrix mat = pat.fixed_part();
    for (int i = 0; i < pat.rows(); ++i)
      for (int j = 0; j < pat.cols(); ++j)
        if (pat.at(i, j).is_free()) mat(i, j) = theta[pat.at(i, j).index];
    return mat;
  };
  out.nu = fill(MatrixId::Nu);
  out.lambda = fill(MatrixId::Lambda);
  out.theta = fill(MatrixId::Theta);
  out.alpha = fill(MatrixId::Alpha);
  out.b = fill(MatrixId::B);
  out.psi = fill(MatrixId::Psi);
  return out;
}

ModelState evaluate_model(const ModelSpec& spec, const Vector& theta) {
  ModelState st;
  st.matrices = unpack(spec, theta);
  const int q = spec.q();
  const Matrix i_minus_b = Matrix::Identity(q, q) - st.matrices.b;
  if (q > 0) {
    Eigen::PartialPivLU<Matrix> lu(i_minus_b);
    const double scale = std::max(1.0, i_minus_b.cwiseAbs().maxCoeff());
    if (lu.matrixLU().diagonal().cwiseAbs().minCoeff() < kPivotThreshold * scale)
      throw SingularMatrix("I - B is singular");
    st.b_tilde = lu.solve(Matrix::Identity(q, q));
  } else {
    st.b_tilde = Matrix(0, 0);
  }
  st.kappa = st.b_tilde * st.matrices.alpha;
  st.psi_tilde = st.b_tilde * st.matrices.psi * st.b_tilde.transpose();

  MomentStructure& mom = st.moments;
  mom.mu = st.matrices.nu + st.matrices.lambda * st.kappa;
  mom.sigma_star = st.matrices.lambda * st.psi_tilde * st.matrices.lambda.transpose();
  mom.sigma_star = 0.5 * (mom.sigma_star + mom.sigma_star.transpose()).eval();
  mom.sigma = mom.sigma_star + 0.5 * (st.matrices.theta + st.matrices.theta.transpose());
  return st;
}

MomentStructure implied_moments(const ModelSpec& spec, const Vector& theta) {
  return evaluate_model(spec, theta).moments;
}

double reliability(const ModelSpec& spec, const Vector& theta) {
  const MomentStructure mom = implied_moments(spec, theta);
  double total = 0.0;
  for (int j = 0; j < spec.p(); ++j) {
    if (!(mom.sigma(j, j) > 0.0))
      throw std::domain_error("implied variance of indicator " + std::to_string(j + 1) + " is not positive");
    total += mom.sigma_star(j, j) / mom.sigma(j, j);
  }
  return total / spec.p();
}

Matrix structure_matrix(int i, int j, int rows, int cols, bool symmetric) {
  if (i < 0 || j < 0 || i >= rows || j >= cols) throw std::out_of_range("structure matrix index out of range");
  if (symmetric && rows != cols) throw std::invalid_argument("symmetric structure matrix must be square");
  Matrix r = Matrix::Zero(rows, cols);
  r(i, j) = 1.0;
  if (symmetric) r(j, i) = 1.0;
  return r;
}

}  // namespace rbmsem
