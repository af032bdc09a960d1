#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "midfea/matrix.hpp"
#include "midfea/rng.hpp"

namespace midfea::ns {

enum class InitMode { Random, Classwise };

std::string to_string(InitMode mode);
InitMode parse_init_mode(const std::string& text);

/// Hyperparameters and optimizer controls of the neuron-selectivity layer.
struct Hyper {
  double alpha = 1.0;   // weight of the encoder-consistency term
  double beta = 0.1;    // within-class similarity
  double gamma = 0.1;   // cross-class incoherence
  double lambda = 0.1;  // row sparsity (l2,1)
  std::size_t d = 0;    // neurons; 0 means 20 per class
  std::size_t epochs = 200;
  double tol = 1e-5;    // relative objective change over an epoch
  double ls_init = 0.1;
  double ls_shrink = 0.5;
  std::size_t ls_max_halvings = 30;
  std::size_t inner_h_steps = 3;  // gradient steps per class block
  double eps_row = 1e-8;          // l2,1 smoothing
  bool analytic_d = false;
  double ridge = 1e-8;            // analytic D update
  InitMode init = InitMode::Classwise;

  /// Throws std::invalid_argument on negative weights or bad controls.
  void validate() const;
};

/// Sigmoid encoder (W, b) with a unit-column linear decoder D.
struct Model {
  Matrix D;  // p x d
  Matrix W;  // d x p
  std::vector<double> b;  // d
  Hyper hyper;

  std::size_t input_dim() const { return W.cols(); }
  std::size_t neurons() const { return W.rows(); }

  /// Directory with D.mat, W.mat, b.mat and hyper.txt.
  void save(const std::filesystem::path& dir) const;
  static Model load(const std::filesystem::path& dir);
};

/// Labelled training matrix, one sample per column.
struct Problem {
  const Matrix& X;
  std::span<const std::size_t> labels;
  std::size_t classes;
};

double sigmoid(double t);

/// h = sigmoid(W x + b).
std::vector<double> encode(std::span<const double> x, const Model& model);
/// Column-wise encode.
Matrix infer_batch(const Matrix& X, const Matrix& W, std::span<const double> b);
Matrix infer_batch(const Matrix& X, const Model& model);

/// Columns belonging to each class, in sample order. Labels must be < classes.
std::vector<std::vector<std::size_t>> class_columns(std::span<const std::size_t> labels,
                                                    std::size_t classes);

/// Full objective
///   ||X - DH||^2 + alpha ||H - f(X)||^2
///   + sum_c { lambda ||H_c||_{2,1} + beta ||H_c - mean_c||^2 + gamma ||H_c^T H_{/c}||^2 }.
/// Row norms in the l2,1 term are smoothed as sqrt(||row||^2 + eps_row^2);
/// eps_row = 0 gives the exact norm.
double objective(const Problem& prob, const Matrix& H, const Matrix& D, const Matrix& W,
                 std::span<const double> b, const Hyper& hyper, double eps_row = 0.0);
double objective(const Problem& prob, const Matrix& H, const Model& model, double eps_row = 0.0);

/// Objective broken into its terms (already weighted).
struct ObjectiveTerms {
  double reconstruction = 0, consistency = 0, sparsity = 0, similarity = 0, incoherence = 0;
  double total() const { return reconstruction + consistency + sparsity + similarity + incoherence; }
};
ObjectiveTerms objective_terms(const Problem& prob, const Matrix& H, const Matrix& D,
                               const Matrix& W, std::span<const double> b, const Hyper& hyper,
                               double eps_row = 0.0);

/// Gradient of ||X - DH||_F^2 with respect to D: -2XH^T + 2DHH^T.
Matrix grad_D(const Matrix& X, const Matrix& H, const Matrix& D);

/// Least-squares decoder XH^T(HH^T + ridge I)^{-1} with unit columns.
/// Returns false (leaving `D` untouched) when the system is numerically singular.
bool analytic_D(const Matrix& X, const Matrix& H, double ridge, Matrix& D);

/// Block problem for H_c with the class mean and the other classes fixed:
///   g(H_c) = ||G_c - Q_c H_c||^2 + lambda ||H_c||_{2,1}
/// with G_c = [X_c; sqrt(a) f(X_c); sqrt(b) Hbar_c; 0] and
///      Q_c = [D; sqrt(a) I; sqrt(b) I; sqrt(g) H_{/c}^T].
struct ClassBlock {
  std::vector<std::size_t> members;  // columns of class c
  std::vector<std::size_t> others;   // all remaining columns
  Matrix Xc;                         // p x Nc
  Matrix Fc;                         // encoder output on X_c, d x Nc
  Matrix mean;                       // Hbar_c: class mean repeated, d x Nc
  Matrix other_gram;                 // H_{/c} H_{/c}^T, d x d
  Matrix Hother;                     // H_{/c}, d x (N - Nc)
};

ClassBlock make_class_block(const Problem& prob, std::size_t c, const Matrix& H, const Matrix& W,
                            std::span<const double> b);

/// Gradient of g: -2 Q^T G + 2 Q^T Q H_c + lambda C H_c with
/// C[i,i] = 1 / sqrt(||H_c^(i)||^2 + eps_row^2).
Matrix grad_Hc(const ClassBlock& block, const Matrix& Hc, const Matrix& D, const Hyper& hyper);
double block_objective(const ClassBlock& block, const Matrix& Hc, const Matrix& D, const Hyper& hyper);

struct EncoderGrad {
  Matrix W;
  std::vector<double> b;
};

/// Gradients of ||H - sigmoid(WX + b1^T)||_F^2:
///   dW = 2((S - H) .* S .* (1 - S)) X^T,  db = 2((S - H) .* S .* (1 - S)) 1.
EncoderGrad grad_Wb(const Matrix& X, const Matrix& H, const Matrix& W, std::span<const double> b);

/// Neurons allotted to each class (equal split, remainder to the earliest).
std::vector<std::size_t> allocate_neurons(std::size_t d, std::size_t classes);

struct Init {
  Matrix D, H, W;
  std::vector<double> b;
};

/// Per-class k-means decoder columns and similarity-based activations.
/// A class with fewer samples than its allotment keeps one neuron per sample;
/// the freed neurons get random non-negative unit columns.
Init init_classwise(const Problem& prob, const Hyper& hyper, SeededRng& rng);
/// Non-negative random start with entries uniform in [0, 0.1] (D columns
/// normalized).
Init init_random(std::size_t p, std::size_t n, const Hyper& hyper, SeededRng& rng);

/// Activations from a decoder: z_i proportional to 1/||d_i - x||, h = z/||z||.
std::vector<double> similarity_activation(const Matrix& D, std::span<const double> x);

struct TrainResult {
  Model model;
  Matrix H;                          // final free activations
  std::vector<double> step_trace;    // objective after every accepted block step
  std::vector<double> epoch_trace;   // objective at the end of each epoch
  std::size_t epochs_run = 0;
  std::size_t rejected_steps = 0;    // block steps where no trial step decreased the objective
};

/// Alternating block descent: D step, per-class H_c steps, then (W, b) step,
/// each with backtracking line search, until the relative objective decrease
/// over an epoch drops below tol or the epoch budget is spent.
/// Throws NumericError if the objective becomes non-finite.
TrainResult train(const Problem& prob, const Hyper& hyper, SeededRng& rng);

/// Effective neuron count for `classes` classes.
std::size_t neuron_count(const Hyper& hyper, std::size_t classes);

/// Sum over classes of ||H_c^T H_{/c}||_F^2.
double cross_class_coherence(const Matrix& H, std::span<const std::size_t> labels, std::size_t classes);

}  // namespace midfea::ns
