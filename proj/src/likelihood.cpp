#include "rbmsem/likelihood.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "rbmsem/errors.hpp"
#include "rbmsem/numdiff.hpp"

namespace rbmsem {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

struct Evaluation {
  ModelState state;
  Matrix sigma_inv;
  double logdet = 0.0;
};

Evaluation evaluate(const ModelSpec& spec, const Vector& theta) {
  Evaluation ev{evaluate_model(spec, theta), {}, 0.0};
  const Matrix& sigma = ev.state.moments.sigma;
  if (!sigma.allFinite()) throw NotPositiveDefinite("implied covariance has non-finite entries");
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("implied covariance is not positive definite");
  const auto diag = llt.matrixLLT().diagonal();
  if ((diag.array() <= 0.0).any()) throw NotPositiveDefinite("implied covariance is not positive definite");
  ev.logdet = 2.0 * diag.array().log().sum();
  ev.sigma_inv = llt.solve(Matrix::Identity(sigma.rows(), sigma.cols()));
  ev.sigma_inv = 0.5 * (ev.sigma_inv + ev.sigma_inv.transpose()).eval();
  return ev;
}

void check_data(const ModelSpec& spec, const DataSummary& data) {
  if (data.ybar.size() != spec.p() || data.s.rows() != spec.p() || data.s.cols() != spec.p())
    throw std::invalid_argument("data summary has " + std::to_string(data.ybar.size()) + " variables, model expects " +
                                std::to_string(spec.p()));
}

void check_data(const ModelSpec& spec, const Dataset& data) {
  if (data.cols() != spec.p())
    throw std::invalid_argument("dataset has " + std::to_string(data.cols()) + " columns, model expects " +
                                std::to_string(spec.p()));
}

// Walks every free cell and adds weight * (l_mu' dmu_a + tr(L dSigma_a)/2) to
// out[a]. `terms` supplies the contracted quantities for one choice of
// (L, l_mu); dense and rank-one sources share the same dispatch.
template <class Terms>
void dispatch_score(const ModelSpec& spec, const ModelState& st, const Terms& terms, double weight, double* out) {
  const auto& params = spec.parameters();
  const bool means = spec.mean_structure();
  for (std::size_t a = 0; a < params.size(); ++a) {
    double acc = 0.0;
    for (const auto& [i, j] : params[a].cells) {
      switch (params[a].matrix) {
        case MatrixId::Nu:
          if (means) acc += terms.mean(i);
          break;
        case MatrixId::Lambda:
          acc += terms.lambda(i, j);
          if (means) acc += terms.mean(i) * st.kappa[j];
          break;
        case MatrixId::Theta:
          acc += (i == j) ? 0.5 * terms.theta(i, i) : terms.theta(i, j);
          break;
        case MatrixId::Alpha:
          if (means) acc += terms.alpha(i);
          break;
        case MatrixId::B:
          acc += terms.b(i, j);
          if (means) acc += terms.alpha(i) * st.kappa[j];
          break;
        case MatrixId::Psi:
          acc += (i == j) ? 0.5 * terms.psi(i, i) : terms.psi(i, j);
          break;
      }
    }
    out[a] += weight * acc;
  }
}

struct DenseTerms {
  Matrix l;             // L
  Vector l_mu;          // l_mu
  Matrix l_lam_psi;     // L Lambda Psi~
  Matrix bt_m_bt;       // B~' M B~,  M = Lambda' L Lambda
  Matrix bt_m_pt;       // B~' M Psi~
  Vector bt_lam_lmu;    // B~' Lambda' l_mu

  DenseTerms(const ModelState& st, Matrix l_in, Vector l_mu_in) : l(std::move(l_in)), l_mu(std::move(l_mu_in)) {
    const Matrix& lam = st.matrices.lambda;
    const Matrix l_lam = l * lam;
    const Matrix m = lam.transpose() * l_lam;
    l_lam_psi = l_lam * st.psi_tilde;
    bt_m_bt = st.b_tilde.transpose() * m * st.b_tilde;
    bt_m_pt = st.b_tilde.transpose() * m * st.psi_tilde;
    bt_lam_lmu = st.b_tilde.transpose() * (lam.transpose() * l_mu);
  }
  double mean(int i) const { return l_mu[i]; }
  double lambda(int i, int j) const { return l_lam_psi(i, j); }
  double theta(int i, int j) const { return l(i, j); }
  double alpha(int k) const { return bt_lam_lmu[k]; }
  double b(int k, int l2) const { return bt_m_pt(k, l2); }
  double psi(int k, int l2) const { return bt_m_bt(k, l2); }
};

// L = u u' with l_mu = u.
struct RankOneTerms {
  const Vector& u;
  Vector psi_w;  // Psi~ Lambda' u
  Vector bt_w;   // B~' Lambda' u

  RankOneTerms(const ModelState& st, const Vector& u_in) : u(u_in) {
    const Vector w = st.matrices.lambda.transpose() * u;
    psi_w = st.psi_tilde * w;
    bt_w = st.b_tilde.transpose() * w;
  }
  double mean(int i) const { return u[i]; }
  double lambda(int i, int j) const { return u[i] * psi_w[j]; }
  double theta(int i, int j) const { return u[i] * u[j]; }
  double alpha(int k) const { return bt_w[k]; }
  double b(int k, int l2) const { return bt_w[k] * psi_w[l2]; }
  double psi(int k, int l2) const { return bt_w[k] * bt_w[l2]; }
};

Vector centred_residual_mean(const ModelSpec& spec, const Evaluation& ev, const DataSummary& data) {
  if (!spec.mean_structure()) return Vector::Zero(spec.p());
  return data.ybar - ev.state.moments.mu;
}

ScoreBlocks blocks_from(const ModelSpec& spec, const Evaluation& ev, const DataSummary& data) {
  const Vector r = centred_residual_mean(spec, ev, data);
  Matrix c = data.s;
  if (spec.mean_structure()) c.noalias() += r * r.transpose();
  ScoreBlocks out;
  out.l_mu = ev.sigma_inv * r;
  out.l_sigma = ev.sigma_inv * c * ev.sigma_inv - ev.sigma_inv;
  out.l_sigma = 0.5 * (out.l_sigma + out.l_sigma.transpose()).eval();
  return out;
}

}  // namespace

DataSummary summarize(const Dataset& data) {
  if (data.rows() < 1) throw std::invalid_argument("dataset has no observations");
  if (!data.allFinite()) throw std::invalid_argument("dataset contains non-finite values");
  DataSummary out;
  out.n = static_cast<int>(data.rows());
  out.ybar = data.colwise().mean().transpose();
  const Matrix centred = data.rowwise() - out.ybar.transpose();
  out.s = (centred.transpose() * centred) / static_cast<double>(out.n);
  out.s = 0.5 * (out.s + out.s.transpose()).eval();
  return out;
}

double loglik(const ModelSpec& spec, const Vector& theta, const DataSummary& data) {
  check_data(spec, data);
  const Evaluation ev = evaluate(spec, theta);
  double inner = spec.p() * kLog2Pi + ev.logdet + (ev.sigma_inv.cwiseProduct(data.s)).sum();
  if (spec.mean_structure()) {
    const Vector r = data.ybar - ev.state.moments.mu;
    inner += r.dot(ev.sigma_inv * r);
  }
  return -0.5 * data.n * inner;
}

Vector loglik_contributions(const ModelSpec& spec, const Vector& theta, const Dataset& data) {
  check_data(spec, data);
  const Evaluation ev = evaluate(spec, theta);
  const Vector centre = spec.mean_structure() ? ev.state.moments.mu : Vector(data.colwise().mean().transpose());
  const Matrix resid = data.rowwise() - centre.transpose();
  const Matrix u = resid * ev.sigma_inv;
  const double constant = spec.p() * kLog2Pi + ev.logdet;
  Vector out(data.rows());
  for (Eigen::Index i = 0; i < data.rows(); ++i) out[i] = -0.5 * (constant + u.row(i).dot(resid.row(i)));
  return out;
}

ScoreBlocks score_blocks(const ModelSpec& spec, const Vector& theta, const DataSummary& data) {
  check_data(spec, data);
  return blocks_from(spec, evaluate(spec, theta), data);
}

Vector score_general(const ModelSpec& spec, const Vector& theta, const DataSummary& data) {
  check_data(spec, data);
  const Evaluation ev = evaluate(spec, theta);
  ScoreBlocks blocks = blocks_from(spec, ev, data);
  const DenseTerms terms(ev.state, std::move(blocks.l_sigma), std::move(blocks.l_mu));
  Vector grad = Vector::Zero(static_cast<Eigen::Index>(spec.free_count()));
  dispatch_score(spec, ev.state, terms, static_cast<double>(data.n), grad.data());
  return grad;
}

Vector score_two_factor(const Vector& theta, const DataSummary& data) {
  if (theta.size() != 13) throw std::invalid_argument("two-factor scores need 13 parameters");
  if (data.ybar.size() != 6) throw std::invalid_argument("two-factor scores need 6 indicators");
  Matrix lambda = Matrix::Zero(6, 2);
  lambda << 1, 0, theta[0], 0, theta[1], 0, 0, 1, 0, theta[2], 0, theta[3];
  const double beta = theta[4];
  const double psi11 = theta[11];
  const double psi22 = theta[12];
  Matrix b_tilde(2, 2);
  b_tilde << 1, 0, beta, 1;
  Matrix psi_tilde(2, 2);
  psi_tilde << psi11, beta * psi11, beta * psi11, beta * beta * psi11 + psi22;
  Matrix sigma = lambda * psi_tilde * lambda.transpose();
  for (int i = 0; i < 6; ++i) sigma(i, i) += theta[5 + i];

  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("implied covariance is not positive definite");
  const Matrix sinv = llt.solve(Matrix::Identity(6, 6));
  const Matrix l_sigma = sinv * data.s * sinv - sinv;
  const double n = data.n;

  const Matrix l_lam_psi = l_sigma * lambda * psi_tilde;
  const Matrix lam_l_lam = lambda.transpose() * l_sigma * lambda;
  const Matrix beta_block = b_tilde.transpose() * lam_l_lam * psi_tilde;
  const Matrix psi_block = b_tilde.transpose() * lam_l_lam * b_tilde;

  Vector g(13);
  g[0] = n * l_lam_psi(1, 0);
  g[1] = n * l_lam_psi(2, 0);
  g[2] = n * l_lam_psi(4, 1);
  g[3] = n * l_lam_psi(5, 1);
  g[4] = n * beta_block(1, 0);
  for (int i = 0; i < 6; ++i) g[5 + i] = 0.5 * n * l_sigma(i, i);
  g[11] = 0.5 * n * psi_block(0, 0);
  g[12] = 0.5 * n * psi_block(1, 1);
  return g;
}

Vector score_gcm(const Vector& theta, const DataSummary& data) {
  if (theta.size() != 6) throw std::invalid_argument("growth-curve scores need 6 parameters");
  const int p = static_cast<int>(data.ybar.size());
  Matrix lambda(p, 2);
  for (int t = 0; t < p; ++t) {
    lambda(t, 0) = 1.0;
    lambda(t, 1) = t;
  }
  Vector alpha(2);
  alpha << theta[0], theta[1];
  Matrix psi(2, 2);
  psi << theta[2], theta[4], theta[4], theta[3];
  const Matrix sigma = lambda * psi * lambda.transpose() + theta[5] * Matrix::Identity(p, p);
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("implied covariance is not positive definite");
  const Matrix sinv = llt.solve(Matrix::Identity(p, p));
  const Vector r = data.ybar - lambda * alpha;
  const Matrix c = data.s + r * r.transpose();
  const Matrix l_sigma = sinv * c * sinv - sinv;
  const Matrix lam_l_lam = lambda.transpose() * l_sigma * lambda;
  const double n = data.n;

  Vector g(6);
  g.head(2) = n * lambda.transpose() * (sinv * r);
  g[2] = 0.5 * n * lam_l_lam(0, 0);
  g[3] = 0.5 * n * lam_l_lam(1, 1);
  // Symmetric structure matrix R12 = J12 + J21 doubles the off-diagonal term.
  g[4] = 0.5 * n * (lam_l_lam(0, 1) + lam_l_lam(1, 0));
  g[5] = 0.5 * n * l_sigma.trace();
  return g;
}

MomentDerivatives moment_derivatives(const ModelSpec& spec, const ModelState& st) {
  const int p = spec.p();
  const int q = spec.q();
  const Matrix& lam = st.matrices.lambda;
  const auto m = spec.free_count();
  MomentDerivatives out;
  out.dmu.assign(m, Vector::Zero(p));
  out.dsigma.assign(m, Matrix::Zero(p, p));
  const auto& params = spec.parameters();
  for (std::size_t a = 0; a < m; ++a) {
    Vector& dmu = out.dmu[a];
    Matrix& ds = out.dsigma[a];
    for (const auto& [i, j] : params[a].cells) {
      switch (params[a].matrix) {
        case MatrixId::Nu:
          dmu += structure_matrix(i, 0, p, 1, false);
          break;
        case MatrixId::Lambda: {
          const Matrix r = structure_matrix(i, j, p, q, false);
          dmu += r * st.kappa;
          ds += r * st.psi_tilde * lam.transpose() + lam * st.psi_tilde * r.transpose();
          break;
        }
        case MatrixId::Theta:
          ds += structure_matrix(i, j, p, p, true);
          break;
        case MatrixId::Alpha:
          dmu += lam * st.b_tilde * structure_matrix(i, 0, q, 1, false);
          break;
        case MatrixId::B: {
          const Matrix r = structure_matrix(i, j, q, q, false);
          dmu += lam * st.b_tilde * r * st.kappa;
          ds += lam * (st.psi_tilde * r.transpose() * st.b_tilde.transpose() + st.b_tilde * r * st.psi_tilde) *
                lam.transpose();
          break;
        }
        case MatrixId::Psi: {
          const Matrix lb = lam * st.b_tilde;
          ds += lb * structure_matrix(i, j, q, q, true) * lb.transpose();
          break;
        }
      }
    }
    if (!spec.mean_structure()) dmu.setZero();
  }
  return out;
}

Matrix observation_scores(const ModelSpec& spec, const Vector& theta, const Dataset& data, ScoreRoute route) {
  check_data(spec, data);
  if (route == ScoreRoute::Numeric) {
    return numdiff::jacobian([&](const Vector& t) { return loglik_contributions(spec, t, data); }, theta);
  }
  const Evaluation ev = evaluate(spec, theta);
  const auto m = static_cast<Eigen::Index>(spec.free_count());
  const Eigen::Index n = data.rows();

  // l_i has L_i = u_i u_i' - Sigma^-1: a shared dense part plus a rank-one part.
  Vector shared = Vector::Zero(m);
  {
    const DenseTerms terms(ev.state, -ev.sigma_inv, Vector::Zero(spec.p()));
    dispatch_score(spec, ev.state, terms, 1.0, shared.data());
  }
  const Vector centre = spec.mean_structure() ? ev.state.moments.mu : Vector(data.colwise().mean().transpose());
  const Matrix u_all = (data.rowwise() - centre.transpose()) * ev.sigma_inv;

  // Row-major so each observation writes a contiguous slice.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> g(n, m);
#if defined(RBMSEM_HAVE_OPENMP)
#pragma omp parallel for schedule(static) if (n >= 512)
#endif
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector u = u_all.row(i).transpose();
    const RankOneTerms terms(ev.state, u);
    double* row = g.row(i).data();
    for (Eigen::Index a = 0; a < m; ++a) row[a] = shared[a];
    dispatch_score(spec, ev.state, terms, 1.0, row);
  }
  return g;
}

Matrix info_j(const ModelSpec& spec, const Vector& theta, const DataSummary& data, Matrix* raw) {
  const Matrix jac = numdiff::jacobian([&](const Vector& t) { return score_general(spec, t, data); }, theta);
  const Matrix h = -jac;
  if (raw) *raw = h;
  return 0.5 * (h + h.transpose());
}

Matrix info_e(const ModelSpec& spec, const Vector& theta, const Dataset& data, ScoreRoute route) {
  const Matrix g = observation_scores(spec, theta, data, route);
  Matrix e = g.transpose() * g;
  return 0.5 * (e + e.transpose());
}

Matrix sandwich(const Matrix& j, const Matrix& e) {
  Eigen::FullPivLU<Matrix> lu(j);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) throw SingularMatrix("negative Hessian is singular");
  const Matrix j_inv_e = lu.solve(e);
  Matrix out = lu.solve(j_inv_e.transpose());
  return 0.5 * (out + out.transpose());
}

InfoMatrices info_matrices(const ModelSpec& spec, const Vector& theta, const Dataset& data) {
  InfoMatrices out;
  out.j = info_j(spec, theta, summarize(data));
  out.e = info_e(spec, theta, data);
  out.sandwich = sandwich(out.j, out.e);
  return out;
}

Vector sandwich_se(const Matrix& j, const Matrix& e) {
  const Matrix v = sandwich(j, e);
  Vector se(v.rows());
  for (Eigen::Index a = 0; a < v.rows(); ++a) {
    if (!(v(a, a) >= 0.0)) throw std::domain_error("sandwich variance has a negative diagonal entry");
    se[a] = std::sqrt(v(a, a));
  }
  return se;
}

Vector sandwich_se(const ModelSpec& spec, const Vector& theta, const Dataset& data) {
  return sandwich_se(info_j(spec, theta, summarize(data)), info_e(spec, theta, data));
}

}  // namespace rbmsem
