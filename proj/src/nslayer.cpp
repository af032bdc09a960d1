#include "midfea/nslayer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "midfea/kmeans.hpp"
#include "midfea/matrix_io.hpp"

namespace midfea::ns {

std::string to_string(InitMode mode) { return mode == InitMode::Random ? "random" : "classwise"; }

InitMode parse_init_mode(const std::string& text) {
  if (text == "random") return InitMode::Random;
  if (text == "classwise") return InitMode::Classwise;
  throw std::invalid_argument("unknown init mode '" + text + "' (expected random or classwise)");
}

void Hyper::validate() const {
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string("ns.") + name + " must be >= 0");
  };
  nonneg(alpha, "alpha");
  nonneg(beta, "beta");
  nonneg(gamma, "gamma");
  nonneg(lambda, "lambda");
  nonneg(tol, "tol");
  nonneg(eps_row, "eps_row");
  nonneg(ridge, "ridge");
  if (!(ls_init > 0.0)) throw std::invalid_argument("ns.ls_init must be > 0");
  if (!(ls_shrink > 0.0 && ls_shrink < 1.0)) throw std::invalid_argument("ns.ls_shrink must lie in (0,1)");
  if (epochs == 0) throw std::invalid_argument("ns.epochs must be >= 1");
}

std::size_t neuron_count(const Hyper& hyper, std::size_t classes) {
  return hyper.d != 0 ? hyper.d : 20 * classes;
}

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

std::vector<double> encode(std::span<const double> x, const Model& model) {
  if (x.size() != model.input_dim()) {
    throw std::invalid_argument("encode: input length " + std::to_string(x.size()) +
                                " does not match encoder input " + std::to_string(model.input_dim()));
  }
  std::vector<double> h = matvec(model.W, x);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = sigmoid(h[i] + model.b[i]);
  return h;
}

Matrix infer_batch(const Matrix& X, const Matrix& W, std::span<const double> b) {
  if (X.rows() != W.cols()) {
    throw std::invalid_argument("infer_batch: input dim " + std::to_string(X.rows()) +
                                " does not match encoder input " + std::to_string(W.cols()));
  }
  Matrix S = matmul(W, X);
  for (std::size_t i = 0; i < S.rows(); ++i)
    for (double& v : S.row(i)) v = sigmoid(v + b[i]);
  return S;
}

Matrix infer_batch(const Matrix& X, const Model& model) { return infer_batch(X, model.W, model.b); }

std::vector<std::vector<std::size_t>> class_columns(std::span<const std::size_t> labels,
                                                    std::size_t classes) {
  std::vector<std::vector<std::size_t>> cols(classes);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] >= classes) {
      throw std::invalid_argument("label " + std::to_string(labels[j]) + " out of range for " +
                                  std::to_string(classes) + " classes");
    }
    cols[labels[j]].push_back(j);
  }
  return cols;
}

namespace {

void check_problem(const Problem& prob, const Matrix& H) {
  if (prob.classes == 0) throw std::invalid_argument("objective: need at least one class");
  if (prob.labels.size() != prob.X.cols()) throw std::invalid_argument("objective: one label per column required");
  if (H.cols() != prob.X.cols()) throw std::invalid_argument("objective: H and X column counts differ");
}

double smoothed_row_norms(const Matrix& M, double eps) {
  double s = 0.0;
  for (std::size_t r = 0; r < M.rows(); ++r) s += std::sqrt(squared_norm(M.row(r)) + eps * eps);
  return s;
}

Matrix column_mean_broadcast(const Matrix& M) {
  Matrix out(M.rows(), M.cols());
  if (M.cols() == 0) return out;
  for (std::size_t r = 0; r < M.rows(); ++r) {
    double s = 0.0;
    for (double v : M.row(r)) s += v;
    const double mean = s / static_cast<double>(M.cols());
    for (double& v : out.row(r)) v = mean;
  }
  return out;
}

// Unweighted per-class contributions to the objective.
struct Pieces {
  double reconstruction = 0;  // ||X_c - D H_c||^2
  double consistency = 0;     // ||H_c - f(X_c)||^2
  double sparsity = 0;        // ||H_c||_{2,1} (smoothed)
  double similarity = 0;      // ||H_c - Hbar_c||^2
};

double reconstruction_error(const Matrix& Xc, const Matrix& D, const Matrix& Hc) {
  return frobenius_squared(Xc - matmul(D, Hc));
}

Pieces class_pieces(const Matrix& Xc, const Matrix& Hc, const Matrix& Fc, const Matrix& D, double eps) {
  Pieces p;
  p.reconstruction = reconstruction_error(Xc, D, Hc);
  p.consistency = frobenius_squared(Hc - Fc);
  p.sparsity = smoothed_row_norms(Hc, eps);
  p.similarity = frobenius_squared(Hc - column_mean_broadcast(Hc));
  return p;
}

// pairs[c][c'] = ||H_c^T H_c'||^2 for c != c'.
using PairTable = std::vector<std::vector<double>>;

ObjectiveTerms assemble(const std::vector<Pieces>& pieces, const PairTable& pairs, const Hyper& h) {
  ObjectiveTerms t;
  for (std::size_t c = 0; c < pieces.size(); ++c) {
    t.reconstruction += pieces[c].reconstruction;
    t.consistency += pieces[c].consistency;
    t.sparsity += pieces[c].sparsity;
    t.similarity += pieces[c].similarity;
    for (std::size_t o = 0; o < pieces.size(); ++o)
      if (o != c) t.incoherence += pairs[c][o];
  }
  t.consistency *= h.alpha;
  t.sparsity *= h.lambda;
  t.similarity *= h.beta;
  t.incoherence *= h.gamma;
  return t;
}

double pair_coherence(const Matrix& A, const Matrix& B) {
  if (A.cols() == 0 || B.cols() == 0) return 0.0;
  return frobenius_squared(matmul_tn(A, B));
}

Matrix cols_of(const Matrix& M, const std::vector<std::size_t>& idx) { return M.select_columns(idx); }

void put_cols(Matrix& M, const std::vector<std::size_t>& idx, const Matrix& src) {
  for (std::size_t r = 0; r < M.rows(); ++r)
    for (std::size_t j = 0; j < idx.size(); ++j) M(r, idx[j]) = src(r, j);
}

}  // namespace

ObjectiveTerms objective_terms(const Problem& prob, const Matrix& H, const Matrix& D,
                               const Matrix& W, std::span<const double> b, const Hyper& hyper,
                               double eps_row) {
  check_problem(prob, H);
  const auto groups = class_columns(prob.labels, prob.classes);
  std::vector<Matrix> Hc(prob.classes);
  std::vector<Pieces> pieces(prob.classes);
  for (std::size_t c = 0; c < prob.classes; ++c) {
    Hc[c] = cols_of(H, groups[c]);
    const Matrix Xc = cols_of(prob.X, groups[c]);
    pieces[c] = class_pieces(Xc, Hc[c], infer_batch(Xc, W, b), D, eps_row);
  }
  PairTable pairs(prob.classes, std::vector<double>(prob.classes, 0.0));
  for (std::size_t c = 0; c < prob.classes; ++c)
    for (std::size_t o = 0; o < prob.classes; ++o)
      if (o != c) pairs[c][o] = pair_coherence(Hc[c], Hc[o]);
  return assemble(pieces, pairs, hyper);
}

double objective(const Problem& prob, const Matrix& H, const Matrix& D, const Matrix& W,
                 std::span<const double> b, const Hyper& hyper, double eps_row) {
  return objective_terms(prob, H, D, W, b, hyper, eps_row).total();
}

double objective(const Problem& prob, const Matrix& H, const Model& model, double eps_row) {
  return objective(prob, H, model.D, model.W, model.b, model.hyper, eps_row);
}

Matrix grad_D(const Matrix& X, const Matrix& H, const Matrix& D) {
  // -2 X H^T + 2 D H H^T = 2 (D H - X) H^T
  return 2.0 * matmul_nt(matmul(D, H) - X, H);
}

namespace {

// Solves A Z = B for symmetric positive definite A via Cholesky; false if A
// is not numerically positive definite.
bool cholesky_solve(Matrix A, Matrix& B) {
  const std::size_t n = A.rows();
  for (std::size_t j = 0; j < n; ++j) {
    double diag = A(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= A(j, k) * A(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag)) return false;
    const double ljj = std::sqrt(diag);
    A(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = A(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= A(i, k) * A(j, k);
      A(i, j) = s / ljj;
    }
  }
  for (std::size_t c = 0; c < B.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = B(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= A(i, k) * B(k, c);
      B(i, c) = s / A(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = B(ii, c);
      for (std::size_t k = ii + 1; k < n; ++k) s -= A(k, ii) * B(k, c);
      B(ii, c) = s / A(ii, ii);
    }
  }
  return true;
}

}  // namespace

bool analytic_D(const Matrix& X, const Matrix& H, double ridge, Matrix& D) {
  Matrix gram = matmul_nt(H, H);
  for (std::size_t i = 0; i < gram.rows(); ++i) gram(i, i) += ridge;
  // (HH^T + rI) D^T = H X^T
  Matrix rhs = matmul_nt(H, X);
  if (!cholesky_solve(std::move(gram), rhs)) return false;
  if (!rhs.all_finite()) return false;
  Matrix next = rhs.transpose();
  normalize_columns(next);
  D = std::move(next);
  return true;
}

ClassBlock make_class_block(const Problem& prob, std::size_t c, const Matrix& H, const Matrix& W,
                            std::span<const double> b) {
  check_problem(prob, H);
  ClassBlock blk;
  for (std::size_t j = 0; j < prob.labels.size(); ++j) {
    if (prob.labels[j] >= prob.classes) throw std::invalid_argument("label out of range");
    (prob.labels[j] == c ? blk.members : blk.others).push_back(j);
  }
  blk.Xc = cols_of(prob.X, blk.members);
  blk.Fc = infer_batch(blk.Xc, W, b);
  blk.mean = column_mean_broadcast(cols_of(H, blk.members));
  blk.Hother = cols_of(H, blk.others);
  blk.other_gram = matmul_nt(blk.Hother, blk.Hother);
  return blk;
}

Matrix grad_Hc(const ClassBlock& blk, const Matrix& Hc, const Matrix& D, const Hyper& h) {
  // Q^T Q = D^T D + (alpha + beta) I + gamma H_{/c} H_{/c}^T
  // Q^T G = D^T X_c + alpha f(X_c) + beta Hbar_c
  const Matrix DtD = matmul_tn(D, D);
  Matrix QtQ = DtD + h.gamma * blk.other_gram;
  for (std::size_t i = 0; i < QtQ.rows(); ++i) QtQ(i, i) += h.alpha + h.beta;
  const Matrix QtG = matmul_tn(D, blk.Xc) + h.alpha * blk.Fc + h.beta * blk.mean;
  Matrix grad = 2.0 * (matmul(QtQ, Hc) - QtG);
  for (std::size_t i = 0; i < Hc.rows(); ++i) {
    const double scale = h.lambda / std::sqrt(squared_norm(Hc.row(i)) + h.eps_row * h.eps_row);
    auto g = grad.row(i);
    auto r = Hc.row(i);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += scale * r[j];
  }
  return grad;
}

double block_objective(const ClassBlock& blk, const Matrix& Hc, const Matrix& D, const Hyper& h) {
  double incoherence = 0.0;
  if (blk.Hother.cols() > 0 && Hc.cols() > 0) {
    // ||H_{/c}^T H_c||^2 = sum_j h_j^T (H_{/c} H_{/c}^T) h_j
    const Matrix SH = matmul(blk.other_gram, Hc);
    for (std::size_t i = 0; i < Hc.rows(); ++i) incoherence += dot(SH.row(i), Hc.row(i));
  }
  return reconstruction_error(blk.Xc, D, Hc) + h.alpha * frobenius_squared(Hc - blk.Fc) +
         h.beta * frobenius_squared(Hc - blk.mean) + h.gamma * incoherence +
         h.lambda * smoothed_row_norms(Hc, h.eps_row);
}

EncoderGrad grad_Wb(const Matrix& X, const Matrix& H, const Matrix& W, std::span<const double> b) {
  const Matrix S = infer_batch(X, W, b);
  if (S.rows() != H.rows() || S.cols() != H.cols()) throw std::invalid_argument("grad_Wb: shape mismatch");
  Matrix delta(S.rows(), S.cols());
  for (std::size_t i = 0; i < S.rows(); ++i)
    for (std::size_t j = 0; j < S.cols(); ++j) {
      const double s = S(i, j);
      delta(i, j) = 2.0 * (s - H(i, j)) * s * (1.0 - s);
    }
  EncoderGrad g;
  g.W = matmul_nt(delta, X);
  g.b.assign(delta.rows(), 0.0);
  for (std::size_t i = 0; i < delta.rows(); ++i)
    for (double v : delta.row(i)) g.b[i] += v;
  return g;
}

std::vector<std::size_t> allocate_neurons(std::size_t d, std::size_t classes) {
  std::vector<std::size_t> alloc(classes, d / classes);
  for (std::size_t c = 0; c < d % classes; ++c) ++alloc[c];
  return alloc;
}

std::vector<double> similarity_activation(const Matrix& D, std::span<const double> x) {
  std::vector<double> z(D.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < D.cols(); ++i) {
    double ss = 0.0;
    for (std::size_t r = 0; r < D.rows(); ++r) {
      const double diff = D(r, i) - x[r];
      ss += diff * diff;
    }
    z[i] = 1.0 / std::max(std::sqrt(ss), 1e-12);
    total += z[i];
  }
  for (double& v : z) v /= total;
  const double n = euclidean_norm(z);
  for (double& v : z) v /= n;
  return z;
}

namespace {

Matrix uniform_matrix(std::size_t rows, std::size_t cols, SeededRng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(0.0, 0.1);
  return m;
}

}  // namespace

Init init_random(std::size_t p, std::size_t n, const Hyper& hyper, SeededRng& rng) {
  const std::size_t d = hyper.d;
  if (d == 0) throw std::invalid_argument("init_random: neuron count must be positive");
  Init init;
  init.D = uniform_matrix(p, d, rng);
  normalize_columns(init.D);
  init.H = uniform_matrix(d, n, rng);
  init.W = uniform_matrix(d, p, rng);
  init.b.resize(d);
  for (double& v : init.b) v = rng.uniform(0.0, 0.1);
  return init;
}

Init init_classwise(const Problem& prob, const Hyper& hyper, SeededRng& rng) {
  const std::size_t d = neuron_count(hyper, prob.classes);
  const std::size_t p = prob.X.rows();
  const auto groups = class_columns(prob.labels, prob.classes);
  auto alloc = allocate_neurons(d, prob.classes);

  Init init;
  init.D = Matrix(p, d);
  std::size_t col = 0;
  for (std::size_t c = 0; c < prob.classes; ++c) {
    if (groups[c].size() < alloc[c]) {
      std::clog << "warning: class " << c << " has " << groups[c].size() << " samples for "
                << alloc[c] << " neurons; reducing its allocation\n";
      alloc[c] = groups[c].size();
    }
    if (alloc[c] == 0) continue;
    const Matrix centres = kmeans(cols_of(prob.X, groups[c]), alloc[c], rng);
    for (std::size_t k = 0; k < alloc[c]; ++k) init.D.set_column(col++, centres.column(k));
  }
  for (; col < d; ++col) {
    std::vector<double> v(p);
    for (double& x : v) x = rng.uniform(0.0, 0.1);
    init.D.set_column(col, v);
  }
  normalize_columns(init.D);

  init.H = Matrix(d, prob.X.cols());
  for (std::size_t j = 0; j < prob.X.cols(); ++j)
    init.H.set_column(j, similarity_activation(init.D, prob.X.column(j)));
  init.W = uniform_matrix(d, p, rng);
  init.b.resize(d);
  for (double& v : init.b) v = rng.uniform(0.0, 0.1);
  return init;
}

double cross_class_coherence(const Matrix& H, std::span<const std::size_t> labels, std::size_t classes) {
  const auto groups = class_columns(labels, classes);
  std::vector<Matrix> Hc(classes);
  for (std::size_t c = 0; c < classes; ++c) Hc[c] = cols_of(H, groups[c]);
  double s = 0.0;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t o = 0; o < classes; ++o)
      if (o != c) s += pair_coherence(Hc[c], Hc[o]);
  return s;
}

namespace {

constexpr double kArmijo = 1e-4;

// Alternating block descent state. Per-class objective pieces are cached and
// refreshed only for the blocks a step touches; the total is always
// re-assembled from the cache in the same order objective_terms uses.
class Trainer {
 public:
  Trainer(const Problem& prob, const Hyper& hyper, Init init)
      : prob_(prob), h_(hyper), D_(std::move(init.D)), W_(std::move(init.W)), b_(std::move(init.b)) {
    groups_ = class_columns(prob.labels, prob.classes);
    const std::size_t C = prob.classes;
    Xc_.resize(C);
    Hc_.resize(C);
    Fc_.resize(C);
    pieces_.resize(C);
    pairs_.assign(C, std::vector<double>(C, 0.0));
    for (std::size_t c = 0; c < C; ++c) {
      Xc_[c] = cols_of(prob.X, groups_[c]);
      Hc_[c] = cols_of(init.H, groups_[c]);
      Fc_[c] = infer_batch(Xc_[c], W_, b_);
      pieces_[c] = class_pieces(Xc_[c], Hc_[c], Fc_[c], D_, h_.eps_row);
    }
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t o = 0; o < C; ++o)
        if (o != c) pairs_[c][o] = pair_coherence(Hc_[c], Hc_[o]);
    current_ = total(pieces_, pairs_);
    check_finite("initialization", 0.0);
  }

  double current() const { return current_; }
  std::size_t rejected() const { return rejected_; }
  const std::vector<double>& steps() const { return step_trace_; }

  void epoch(std::size_t e) {
    epoch_ = e;
    if (!(h_.analytic_d && analytic_d_step())) d_step();
    for (std::size_t c = 0; c < prob_.classes; ++c) h_step(c);
    wb_step();
  }

  Matrix full_H() const {
    Matrix H(D_.cols(), prob_.X.cols());
    for (std::size_t c = 0; c < prob_.classes; ++c) put_cols(H, groups_[c], Hc_[c]);
    return H;
  }

  Model model() const { return Model{D_, W_, b_, h_}; }

 private:
  double total(const std::vector<Pieces>& pieces, const PairTable& pairs) const {
    return assemble(pieces, pairs, h_).total();
  }

  void check_finite(const char* block, double step) const {
    if (!std::isfinite(current_)) {
      std::ostringstream msg;
      msg << "objective became non-finite in " << block << " step (epoch " << epoch_ << ", step size "
          << step << ")";
      throw NumericError(msg.str());
    }
  }

  void accept(double value) {
    current_ = value;
    step_trace_.push_back(value);
  }

  std::vector<Pieces> with_decoder(const Matrix& D) const {
    std::vector<Pieces> out = pieces_;
    for (std::size_t c = 0; c < out.size(); ++c) out[c].reconstruction = reconstruction_error(Xc_[c], D, Hc_[c]);
    return out;
  }

  void d_step() {
    Matrix grad = grad_D(prob_.X, full_H(), D_);
    // Component of the gradient tangent to the unit-column constraint.
    double tangent = 0.0;
    for (std::size_t i = 0; i < D_.cols(); ++i) {
      double along = 0.0;
      for (std::size_t r = 0; r < D_.rows(); ++r) along += D_(r, i) * grad(r, i);
      for (std::size_t r = 0; r < D_.rows(); ++r) {
        const double t = grad(r, i) - along * D_(r, i);
        tangent += t * t;
      }
    }
    double t = next_step(step_d_);
    for (std::size_t k = 0; k <= h_.ls_max_halvings; ++k, t *= h_.ls_shrink) {
      Matrix trial = D_ - t * grad;
      normalize_columns(trial);
      auto pieces = with_decoder(trial);
      const double value = total(pieces, pairs_);
      if (std::isfinite(value) && value <= current_ - kArmijo * t * tangent && value <= current_) {
        D_ = std::move(trial);
        pieces_ = std::move(pieces);
        step_d_ = t;
        accept(value);
        return;
      }
    }
    ++rejected_;
  }

  bool analytic_d_step() {
    Matrix trial = D_;
    if (!analytic_D(prob_.X, full_H(), h_.ridge, trial)) return false;
    auto pieces = with_decoder(trial);
    const double value = total(pieces, pairs_);
    if (!std::isfinite(value) || value > current_) return false;
    D_ = std::move(trial);
    pieces_ = std::move(pieces);
    accept(value);
    return true;
  }

  void h_step(std::size_t c) {
    if (groups_[c].empty()) return;
    // Block data with the class mean taken from the current H_c.
    ClassBlock blk;
    blk.members = groups_[c];
    blk.Xc = Xc_[c];
    blk.Fc = Fc_[c];
    blk.mean = column_mean_broadcast(Hc_[c]);
    std::vector<std::size_t> others;
    for (std::size_t o = 0; o < prob_.classes; ++o)
      if (o != c) others.insert(others.end(), groups_[o].begin(), groups_[o].end());
    blk.others = others;
    blk.Hother = Matrix(D_.cols(), others.size());
    {
      std::size_t col = 0;
      for (std::size_t o = 0; o < prob_.classes; ++o) {
        if (o == c) continue;
        for (std::size_t j = 0; j < Hc_[o].cols(); ++j, ++col)
          for (std::size_t r = 0; r < Hc_[o].rows(); ++r) blk.Hother(r, col) = Hc_[o](r, j);
      }
    }
    blk.other_gram = matmul_nt(blk.Hother, blk.Hother);

    for (std::size_t inner = 0; inner < h_.inner_h_steps; ++inner) {
      const Matrix grad = grad_Hc(blk, Hc_[c], D_, h_);
      const double gnorm = frobenius_squared(grad);
      if (gnorm == 0.0) return;
      const double g0 = block_objective(blk, Hc_[c], D_, h_);
      double t = next_step(step_h_);
      bool moved = false;
      for (std::size_t k = 0; k <= h_.ls_max_halvings; ++k, t *= h_.ls_shrink) {
        Matrix trial = Hc_[c] - t * grad;
        const double g1 = block_objective(blk, trial, D_, h_);
        if (!(std::isfinite(g1) && g1 <= g0 - kArmijo * t * gnorm)) continue;
        // The block function fixes the class mean and counts each cross-class
        // pair once; only keep steps that also lower the full objective.
        std::vector<Pieces> pieces = pieces_;
        pieces[c] = class_pieces(Xc_[c], trial, Fc_[c], D_, h_.eps_row);
        PairTable pairs = pairs_;
        for (std::size_t o = 0; o < prob_.classes; ++o) {
          if (o == c) continue;
          pairs[c][o] = pair_coherence(trial, Hc_[o]);
          pairs[o][c] = pair_coherence(Hc_[o], trial);
        }
        const double value = total(pieces, pairs);
        if (!(value <= current_)) continue;
        Hc_[c] = std::move(trial);
        pieces_ = std::move(pieces);
        pairs_ = std::move(pairs);
        step_h_ = t;
        accept(value);
        moved = true;
        break;
      }
      if (!moved) {
        ++rejected_;
        return;
      }
    }
  }

  void wb_step() {
    const Matrix H = full_H();
    EncoderGrad g = grad_Wb(prob_.X, H, W_, b_);
    g.W = h_.alpha * g.W;
    for (double& v : g.b) v *= h_.alpha;
    const double gnorm = frobenius_squared(g.W) + squared_norm(g.b);
    if (gnorm == 0.0) return;
    double t = next_step(step_wb_);
    for (std::size_t k = 0; k <= h_.ls_max_halvings; ++k, t *= h_.ls_shrink) {
      Matrix W = W_ - t * g.W;
      std::vector<double> b = b_;
      for (std::size_t i = 0; i < b.size(); ++i) b[i] -= t * g.b[i];
      std::vector<Matrix> F(prob_.classes);
      std::vector<Pieces> pieces = pieces_;
      for (std::size_t c = 0; c < prob_.classes; ++c) {
        F[c] = infer_batch(Xc_[c], W, b);
        pieces[c].consistency = frobenius_squared(Hc_[c] - F[c]);
      }
      const double value = total(pieces, pairs_);
      if (std::isfinite(value) && value <= current_ - kArmijo * t * gnorm && value <= current_) {
        W_ = std::move(W);
        b_ = std::move(b);
        Fc_ = std::move(F);
        pieces_ = std::move(pieces);
        step_wb_ = t;
        accept(value);
        return;
      }
    }
    ++rejected_;
  }

  // First trial step: ls_init on the first attempt, afterwards twice the last
  // accepted step of the same block.
  double next_step(double last) const { return last > 0.0 ? 2.0 * last : h_.ls_init; }

  const Problem& prob_;
  Hyper h_;
  Matrix D_, W_;
  std::vector<double> b_;
  std::vector<std::vector<std::size_t>> groups_;
  std::vector<Matrix> Xc_, Hc_, Fc_;
  std::vector<Pieces> pieces_;
  PairTable pairs_;
  double current_ = 0.0;
  double step_d_ = 0.0, step_h_ = 0.0, step_wb_ = 0.0;
  std::size_t epoch_ = 0;
  std::size_t rejected_ = 0;
  std::vector<double> step_trace_;
};

}  // namespace

TrainResult train(const Problem& prob, const Hyper& hyper_in, SeededRng& rng) {
  hyper_in.validate();
  if (prob.classes == 0) throw std::invalid_argument("train: need at least one class");
  if (prob.X.cols() < prob.classes) throw std::invalid_argument("train: fewer samples than classes");
  if (prob.labels.size() != prob.X.cols()) throw std::invalid_argument("train: one label per column required");
  Hyper hyper = hyper_in;
  hyper.d = neuron_count(hyper, prob.classes);
  if (hyper.d < prob.classes) throw std::invalid_argument("train: need at least one neuron per class");

  Init init = hyper.init == InitMode::Classwise ? init_classwise(prob, hyper, rng)
                                                : init_random(prob.X.rows(), prob.X.cols(), hyper, rng);
  Trainer trainer(prob, hyper, std::move(init));

  TrainResult res;
  double previous = trainer.current();
  for (std::size_t e = 0; e < hyper.epochs; ++e) {
    trainer.epoch(e);
    const double now = trainer.current();
    if (!std::isfinite(now)) throw NumericError("objective became non-finite at epoch " + std::to_string(e));
    res.epoch_trace.push_back(now);
    res.epochs_run = e + 1;
    const double rel = (previous - now) / std::max(std::abs(previous), 1e-300);
    previous = now;
    if (rel < hyper.tol) break;
  }
  res.model = trainer.model();
  res.H = trainer.full_H();
  res.step_trace = trainer.steps();
  res.rejected_steps = trainer.rejected();
  return res;
}

void Model::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  write_matrix(dir / "D.mat", D);
  write_matrix(dir / "W.mat", W);
  write_matrix(dir / "b.mat", Matrix(b.size(), 1, b));
  std::ofstream out(dir / "hyper.txt");
  if (!out) throw std::runtime_error("cannot write " + (dir / "hyper.txt").string());
  out << std::setprecision(17);
  out << "alpha=" << hyper.alpha << "\nbeta=" << hyper.beta << "\ngamma=" << hyper.gamma
      << "\nlambda=" << hyper.lambda << "\nd=" << hyper.d << "\nepochs=" << hyper.epochs
      << "\ntol=" << hyper.tol << "\nls_init=" << hyper.ls_init << "\nls_shrink=" << hyper.ls_shrink
      << "\nls_max_halvings=" << hyper.ls_max_halvings << "\ninner_h_steps=" << hyper.inner_h_steps
      << "\neps_row=" << hyper.eps_row << "\nanalytic_d=" << (hyper.analytic_d ? 1 : 0)
      << "\nridge=" << hyper.ridge << "\ninit=" << to_string(hyper.init) << "\n";
}

Model Model::load(const std::filesystem::path& dir) {
  Model m;
  m.D = read_matrix(dir / "D.mat");
  m.W = read_matrix(dir / "W.mat");
  const Matrix b = read_matrix(dir / "b.mat");
  if (b.cols() != 1 || b.rows() != m.W.rows() || m.D.cols() != m.W.rows() || m.D.rows() != m.W.cols()) {
    throw std::runtime_error(dir.string() + ": inconsistent NS model shapes");
  }
  m.b.assign(b.data().begin(), b.data().end());
  std::ifstream in(dir / "hyper.txt");
  if (!in) throw std::runtime_error("cannot open " + (dir / "hyper.txt").string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto num = [&](const char* k, double& dst) {
    if (auto it = kv.find(k); it != kv.end()) dst = std::stod(it->second);
  };
  auto count = [&](const char* k, std::size_t& dst) {
    if (auto it = kv.find(k); it != kv.end()) dst = std::stoul(it->second);
  };
  num("alpha", m.hyper.alpha);
  num("beta", m.hyper.beta);
  num("gamma", m.hyper.gamma);
  num("lambda", m.hyper.lambda);
  count("d", m.hyper.d);
  count("epochs", m.hyper.epochs);
  num("tol", m.hyper.tol);
  num("ls_init", m.hyper.ls_init);
  num("ls_shrink", m.hyper.ls_shrink);
  count("ls_max_halvings", m.hyper.ls_max_halvings);
  count("inner_h_steps", m.hyper.inner_h_steps);
  num("eps_row", m.hyper.eps_row);
  num("ridge", m.hyper.ridge);
  if (auto it = kv.find("analytic_d"); it != kv.end()) m.hyper.analytic_d = it->second == "1";
  if (auto it = kv.find("init"); it != kv.end()) m.hyper.init = parse_init_mode(it->second);
  return m;
}

}  // namespace midfea::ns
