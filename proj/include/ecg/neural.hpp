#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ecg/signal.hpp"
#include "ecg/transforms.hpp"

namespace ecg {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

/// Canonical record length in samples; shorter inputs to model_forward are
/// zero-padded, longer ones must be chunked by the caller.
inline constexpr Eigen::Index kCanonicalWindow = 3500;

/// Layer widths of the ConvBiLSTM. The default reproduces the reference
/// architecture exactly (520,322 learnable scalars); tiny() is a scaled-down
/// twin used for finite-difference checks.
struct Arch {
  int in_channels = 1;
  int conv1 = 64, conv2 = 128, conv3 = 256;
  int k1 = 5, k2 = 3, k3 = 3;
  int hidden = 128;  // per direction
  int classes = 2;

  static Arch table1() { return {}; }
  static Arch tiny() { return {1, 2, 3, 4, 5, 3, 3, 4, 2}; }
};

/// One named learnable tensor inside the flat parameter vector.
struct TensorSpec {
  std::string name;
  std::vector<Eigen::Index> dims;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
  Eigen::Index fan_in = 0;   // 0 for non-weight tensors
  double init_value = 0.0;   // used when fan_in == 0
};

/// Deterministic name -> slice layout of all learnable parameters.
class ParamLayout {
 public:
  explicit ParamLayout(const Arch& arch);

  const std::vector<TensorSpec>& tensors() const { return tensors_; }
  const TensorSpec& find(const std::string& name) const;
  Eigen::Index total() const { return total_; }

  /// Learnable-scalar counts in architecture-table order:
  /// conv1, bn1, conv2, bn2, conv3, bn3, lstm (both directions), head.
  std::array<Eigen::Index, 8> per_layer_counts() const;

 private:
  std::vector<TensorSpec> tensors_;
  Eigen::Index total_ = 0;
};

/// All learnable tensors in one flat vector plus batch-norm running stats
/// (which are state, not parameters).
template <typename Scalar>
struct ModelParams {
  Arch arch;
  ParamLayout layout;
  VectorX<Scalar> flat;
  std::array<ArrayX<Scalar>, 3> running_mean;
  std::array<ArrayX<Scalar>, 3> running_var;

  explicit ModelParams(const Arch& a);

  Eigen::Map<MatrixX<Scalar>> tensor(const std::string& name);
  Eigen::Map<const MatrixX<Scalar>> tensor(const std::string& name) const;

  template <typename Other>
  ModelParams<Other> cast() const;
};

/// Seeded init: weight matrices uniform in +-1/sqrt(fan_in), biases zero
/// except the forget-gate bias (1), batch-norm gamma 1 / beta 0. Draws are
/// consumed element by element in layout order.
template <typename Scalar>
ModelParams<Scalar> init_params(const Arch& arch, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Primitive layer operations (also used by the tests as small oracles).
// ---------------------------------------------------------------------------

/// 1-D cross-correlation y[o][t] = sum_{c,i} w[o][c][i] x[c][t+i] + b[o]
/// with x read as zero outside its support, so the output keeps the input
/// length. `weight` has one row per output channel, columns grouped
/// [channel][tap].
template <typename Scalar>
MatrixX<Scalar> conv1d_forward(const MatrixX<Scalar>& x,
                               const MatrixX<Scalar>& weight,
                               const VectorX<Scalar>& bias, int kernel_len);

template <typename Scalar>
MatrixX<Scalar> relu(const MatrixX<Scalar>& x);

enum class BatchNormMode { Train, Eval };

/// In-place batch norm over a batch of channels x length activations.
/// Train mode normalizes with the biased batch statistics and updates the
/// running stats with momentum 0.1 (unbiased variance, matching the usual
/// deep-learning convention); eval mode applies the running stats.
template <typename Scalar>
void batchnorm1d_forward(std::vector<MatrixX<Scalar>>& batch,
                         const VectorX<Scalar>& gamma,
                         const VectorX<Scalar>& beta,
                         ArrayX<Scalar>& running_mean,
                         ArrayX<Scalar>& running_var, BatchNormMode mode,
                         Scalar eps = Scalar(1e-5),
                         Scalar momentum = Scalar(0.1));

/// Weights of one LSTM direction viewed gate by gate. Each w_* maps the
/// concatenation [h_prev; x_t]; each gate carries two bias vectors whose sum
/// is the effective bias.
template <typename Scalar>
struct LstmGates {
  Eigen::Map<const MatrixX<Scalar>> w_i, w_f, w_c, w_o;
  Eigen::Map<const MatrixX<Scalar>> b_i, b_f, b_c, b_o;
  Eigen::Map<const MatrixX<Scalar>> b2_i, b2_f, b2_c, b2_o;
};

template <typename Scalar>
LstmGates<Scalar> lstm_gates(const ModelParams<Scalar>& params,
                             const std::string& direction);

/// Single cell step: returns (h_t, C_t) given x_t and the previous state.
template <typename Scalar>
std::pair<VectorX<Scalar>, VectorX<Scalar>> lstm_cell(
    const VectorX<Scalar>& x_t, const VectorX<Scalar>& h_prev,
    const VectorX<Scalar>& c_prev, const LstmGates<Scalar>& gates);

/// Bidirectional pass over a feature sequence (features x length); output
/// row-concatenates the forward and backward hidden states (2*hidden rows).
/// Initial states are zero.
template <typename Scalar>
MatrixX<Scalar> bilstm_forward(const MatrixX<Scalar>& x,
                               const LstmGates<Scalar>& fwd,
                               const LstmGates<Scalar>& bwd);

// ---------------------------------------------------------------------------
// Full model.
// ---------------------------------------------------------------------------

/// Per-timestep class logits (classes x length) for an arbitrary-length
/// input, conv -> bn -> relu stacks, BiLSTM, linear head. Eval mode uses the
/// running batch-norm stats.
template <typename Scalar>
MatrixX<Scalar> forward_sequence(const ModelParams<Scalar>& params,
                                 const MatrixX<Scalar>& input,
                                 BatchNormMode mode);

/// Canonical-window forward: pads shorter inputs with zeros to 3500 samples,
/// rejects longer ones (chunk first). Returns 3500-column logits.
template <typename Scalar>
MatrixX<Scalar> model_forward(const ModelParams<Scalar>& params,
                              const SampledSignal& signal, BatchNormMode mode);

/// Argmax segmentation of an arbitrary-length signal, chunked into canonical
/// windows. Returns one 0/1 label per sample.
template <typename Scalar>
std::vector<std::uint8_t> predict_binary(const ModelParams<Scalar>& params,
                                         const SampledSignal& signal);

/// One training example: input row(s) plus a 0/1 target per timestep.
template <typename Scalar>
struct Example {
  MatrixX<Scalar> input;             // in_channels x length
  std::vector<std::uint8_t> target;  // length entries of {0, 1}
};

template <typename Scalar>
struct LossGrad {
  double loss = 0.0;
  VectorX<Scalar> grad;  // same layout as ModelParams::flat
};

/// Mean per-timestep softmax cross-entropy over the batch plus gradients of
/// every learnable parameter (full backprop through time). Pure: batch-norm
/// uses train-mode batch statistics but running stats are not touched.
template <typename Scalar>
LossGrad<Scalar> loss_and_grad(const ModelParams<Scalar>& params,
                               const std::vector<Example<Scalar>>& batch);

/// Mean per-timestep cross-entropy without gradients (eval-mode batch norm).
template <typename Scalar>
double eval_loss(const ModelParams<Scalar>& params,
                 const std::vector<Example<Scalar>>& batch);

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 10;
  int batch_size = 8;
  std::uint64_t seed = 0;
  WaveClass target_wave = WaveClass::Qrs;
  Preprocessing preprocessing = Preprocessing::Raw;
};

template <typename Scalar>
struct TrainResult {
  ModelParams<Scalar> params;
  std::vector<double> loss_curve;  // mean per-timestep loss per epoch
};

/// Seeded Adam (beta1 0.9, beta2 0.999, eps 1e-8) over shuffled mini-batches;
/// fully deterministic for a fixed seed in single-threaded use.
template <typename Scalar>
TrainResult<Scalar> train(const TrainConfig& config, const Arch& arch,
                          const std::vector<Example<Scalar>>& dataset);

/// Build the 0/1 per-timestep target for one wave from a label mask.
std::vector<std::uint8_t> binary_target(const LabelMask& mask, WaveClass wave);

namespace detail {
/// Batched BiLSTM layer used by the training engine; exposed so tests can
/// pin it against the per-cell reference path. Columns are ordered
/// timestep-major: block t holds the batch at step t.
template <typename Scalar>
MatrixX<Scalar> bilstm_forward_batched(const ModelParams<Scalar>& params,
                                       const MatrixX<Scalar>& x_all,
                                       Eigen::Index batch);
}  // namespace detail

}  // namespace ecg
