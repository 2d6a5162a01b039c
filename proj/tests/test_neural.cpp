#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ecg/checkpoint.hpp"
#include "ecg/errors.hpp"
#include "ecg/neural.hpp"

using namespace ecg;

namespace {

MatrixX<double> random_matrix(Eigen::Index rows, Eigen::Index cols,
                              std::mt19937& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  MatrixX<double> m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = dist(rng);
  return m;
}

std::vector<Example<double>> random_batch(const Arch& arch, Eigen::Index len,
                                          int count, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> coin(0, 1);
  std::vector<Example<double>> batch;
  for (int b = 0; b < count; ++b) {
    Example<double> ex;
    ex.input = random_matrix(arch.in_channels, len, rng);
    ex.target.resize(static_cast<std::size_t>(len));
    for (auto& t : ex.target) t = static_cast<std::uint8_t>(coin(rng));
    batch.push_back(std::move(ex));
  }
  return batch;
}

}  // namespace

TEST_CASE("the reference architecture has exactly the published counts") {
  const ParamLayout layout(Arch::table1());
  CHECK(layout.total() == 520322);
  const auto counts = layout.per_layer_counts();
  CHECK(counts[0] == 384);     // conv1
  CHECK(counts[1] == 128);     // bn1
  CHECK(counts[2] == 24704);   // conv2
  CHECK(counts[3] == 256);     // bn2
  CHECK(counts[4] == 98560);   // conv3
  CHECK(counts[5] == 512);     // bn3
  CHECK(counts[6] == 395264);  // bidirectional lstm
  CHECK(counts[7] == 514);     // head
}

TEST_CASE("conv1d identity and bias-only kernels") {
  MatrixX<double> x(1, 4);
  x << 1.0, -2.0, 3.0, 0.5;

  MatrixX<double> unit(1, 1);
  unit << 1.0;
  VectorX<double> zero_bias = VectorX<double>::Zero(1);
  CHECK((conv1d_forward<double>(x, unit, zero_bias, 1) - x).norm() == 0.0);

  MatrixX<double> zeros(1, 3);
  zeros.setZero();
  VectorX<double> five(1);
  five << 5.0;
  const MatrixX<double> out = conv1d_forward<double>(x, zeros, five, 3);
  CHECK((out.array() == 5.0).all());
}

TEST_CASE("conv1d matches the brute-force correlation oracle") {
  MatrixX<double> x(1, 4);
  x << 0.0, 1.0, 2.0, 3.0;
  MatrixX<double> w(1, 3);
  w << 1.0, -1.0, 0.0;
  const MatrixX<double> out =
      conv1d_forward<double>(x, w, VectorX<double>::Zero(1), 3);

  // Oracle: out[t] = sum_i w[i] * x[t+i], zeros beyond the end.
  for (Eigen::Index t = 0; t < 4; ++t) {
    double expect = 0.0;
    for (Eigen::Index i = 0; i < 3; ++i)
      if (t + i < 4) expect += w(0, i) * x(0, t + i);
    CHECK(out(0, t) == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(out(0, 0) == -1.0);
  CHECK(out(0, 1) == -1.0);
  CHECK(out(0, 2) == -1.0);
  CHECK(out(0, 3) == 3.0);
}

TEST_CASE("conv1d brute-force oracle on a random multichannel case") {
  std::mt19937 rng(17);
  const int cin = 3, cout = 2, k = 5;
  const Eigen::Index len = 11;
  const MatrixX<double> x = random_matrix(cin, len, rng);
  const MatrixX<double> w = random_matrix(cout, cin * k, rng);
  const VectorX<double> b = random_matrix(cout, 1, rng);
  const MatrixX<double> out = conv1d_forward<double>(x, w, b, k);

  for (Eigen::Index o = 0; o < cout; ++o)
    for (Eigen::Index t = 0; t < len; ++t) {
      double expect = b[o];
      for (Eigen::Index c = 0; c < cin; ++c)
        for (Eigen::Index i = 0; i < k; ++i)
          if (t + i < len) expect += w(o, c * k + i) * x(c, t + i);
      CHECK(out(o, t) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("relu clamps negatives") {
  MatrixX<double> x(1, 3);
  x << -1.0, 0.0, 2.0;
  const MatrixX<double> out = relu<double>(x);
  CHECK(out(0, 0) == 0.0);
  CHECK(out(0, 1) == 0.0);
  CHECK(out(0, 2) == 2.0);
  CHECK((relu<double>(MatrixX<double>::Constant(2, 2, -3.0)).array() == 0.0)
            .all());
  MatrixX<double> pos = MatrixX<double>::Constant(2, 2, 4.0);
  CHECK((relu<double>(pos) - pos).norm() == 0.0);
}

TEST_CASE("batchnorm train mode normalizes, eval mode applies running stats") {
  // Normalization divides by sqrt(var + 1e-5), so the output variance is
  // var/(var + 1e-5); wide input data keeps that within the 1e-6 check.
  std::mt19937 rng(23);
  std::vector<MatrixX<double>> batch{random_matrix(2, 40, rng, 10.0),
                                     random_matrix(2, 40, rng, 10.0)};
  const std::vector<MatrixX<double>> original = batch;

  VectorX<double> gamma = VectorX<double>::Ones(2);
  VectorX<double> beta = VectorX<double>::Zero(2);
  ArrayX<double> rmean = ArrayX<double>::Zero(2);
  ArrayX<double> rvar = ArrayX<double>::Ones(2);

  batchnorm1d_forward<double>(batch, gamma, beta, rmean, rvar,
                              BatchNormMode::Train);
  for (int c = 0; c < 2; ++c) {
    double sum = 0.0, sq = 0.0;
    for (const auto& m : batch) {
      sum += m.row(c).sum();
      sq += m.row(c).array().square().sum();
    }
    const double n = 80.0;
    CHECK(std::abs(sum / n) < 1e-6);
    CHECK(std::abs(sq / n - 1.0) < 1e-6);
  }
  // Running stats moved away from their (0, 1) init.
  CHECK(rmean.abs().maxCoeff() > 0.0);

  // gamma = 0 collapses the output to beta.
  std::vector<MatrixX<double>> batch2 = original;
  VectorX<double> gamma0 = VectorX<double>::Zero(2);
  VectorX<double> beta7 = VectorX<double>::Constant(2, 7.0);
  ArrayX<double> rm2 = ArrayX<double>::Zero(2);
  ArrayX<double> rv2 = ArrayX<double>::Ones(2);
  batchnorm1d_forward<double>(batch2, gamma0, beta7, rm2, rv2,
                              BatchNormMode::Train);
  for (const auto& m : batch2) CHECK((m.array() - 7.0).abs().maxCoeff() < 1e-12);

  // Eval mode: direct formula oracle gamma*(x-m)/sqrt(v+eps)+beta.
  std::vector<MatrixX<double>> batch3 = original;
  VectorX<double> gamma2(2), beta2(2);
  gamma2 << 1.5, -0.5;
  beta2 << 0.25, 1.0;
  ArrayX<double> rm3(2), rv3(2);
  rm3 << 0.3, -0.7;
  rv3 << 2.0, 0.5;
  batchnorm1d_forward<double>(batch3, gamma2, beta2, rm3, rv3,
                              BatchNormMode::Eval);
  for (std::size_t b = 0; b < original.size(); ++b)
    for (int c = 0; c < 2; ++c)
      for (Eigen::Index t = 0; t < 40; ++t) {
        const double expect = gamma2[c] * (original[b](c, t) - rm3[c]) /
                                  std::sqrt(rv3[c] + 1e-5) +
                              beta2[c];
        CHECK(batch3[b](c, t) == doctest::Approx(expect).epsilon(1e-12));
      }
}

namespace {

// Independent scalar LSTM step, element-by-element.
void scalar_lstm_step(const ModelParams<double>& params,
                      const std::string& dir, const VectorX<double>& x,
                      const VectorX<double>& h_prev,
                      const VectorX<double>& c_prev, VectorX<double>& h_out,
                      VectorX<double>& c_out) {
  const Eigen::Index h = params.arch.hidden;
  const Eigen::Index in = x.size();
  const auto sigmoid = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };

  const auto gate_pre = [&](const char* g, Eigen::Index row) {
    const auto w = params.tensor(dir + ".w_" + g);
    const auto b = params.tensor(dir + ".b_" + g);
    const auto b2 = params.tensor(dir + ".b2_" + std::string(g));
    double acc = b(row, 0) + b2(row, 0);
    for (Eigen::Index j = 0; j < h; ++j) acc += w(row, j) * h_prev[j];
    for (Eigen::Index j = 0; j < in; ++j) acc += w(row, h + j) * x[j];
    return acc;
  };

  h_out.resize(h);
  c_out.resize(h);
  for (Eigen::Index r = 0; r < h; ++r) {
    const double i = sigmoid(gate_pre("i", r));
    const double f = sigmoid(gate_pre("f", r));
    const double g = std::tanh(gate_pre("c", r));
    const double o = sigmoid(gate_pre("o", r));
    c_out[r] = f * c_prev[r] + i * g;
    h_out[r] = o * std::tanh(c_out[r]);
  }
}

}  // namespace

TEST_CASE("lstm_cell zero-parameter fixed point") {
  Arch arch = Arch::tiny();
  ModelParams<double> params(arch);  // all zeros
  const auto gates = lstm_gates(params, "lstm_fwd");

  VectorX<double> x = VectorX<double>::Zero(arch.conv3);
  VectorX<double> h0 = VectorX<double>::Zero(arch.hidden);
  VectorX<double> c0(arch.hidden);
  c0 << 1.0, -0.5, 2.0, 0.25;

  const auto [h1, c1] = lstm_cell<double>(x, h0, c0, gates);
  for (Eigen::Index r = 0; r < arch.hidden; ++r) {
    CHECK(c1[r] == doctest::Approx(0.5 * c0[r]).epsilon(1e-12));
    CHECK(h1[r] ==
          doctest::Approx(0.5 * std::tanh(0.5 * c0[r])).epsilon(1e-12));
  }
}

TEST_CASE("lstm_cell saturated forget gate carries the cell state") {
  Arch arch = Arch::tiny();
  ModelParams<double> params = init_params<double>(arch, 3);
  params.tensor("lstm_fwd.b_f").setConstant(50.0);
  params.tensor("lstm_fwd.b2_f").setZero();
  const auto gates = lstm_gates(params, "lstm_fwd");

  std::mt19937 rng(4);
  const VectorX<double> x = random_matrix(arch.conv3, 1, rng);
  const VectorX<double> h0 = random_matrix(arch.hidden, 1, rng, 0.3);
  const VectorX<double> c0 = random_matrix(arch.hidden, 1, rng);

  const auto [h1, c1] = lstm_cell<double>(x, h0, c0, gates);

  // With f == 1, C_t = C_prev + i * tanh(candidate).
  const auto sigmoid = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  for (Eigen::Index r = 0; r < arch.hidden; ++r) {
    const auto wi = params.tensor("lstm_fwd.w_i");
    const auto wc = params.tensor("lstm_fwd.w_c");
    double zi = params.tensor("lstm_fwd.b_i")(r, 0) +
                params.tensor("lstm_fwd.b2_i")(r, 0);
    double zc = params.tensor("lstm_fwd.b_c")(r, 0) +
                params.tensor("lstm_fwd.b2_c")(r, 0);
    for (Eigen::Index j = 0; j < arch.hidden; ++j) {
      zi += wi(r, j) * h0[j];
      zc += wc(r, j) * h0[j];
    }
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      zi += wi(r, arch.hidden + j) * x[j];
      zc += wc(r, arch.hidden + j) * x[j];
    }
    const double expect = c0[r] + sigmoid(zi) * std::tanh(zc);
    CHECK(std::abs(c1[r] - expect) < 1e-9);
  }
}

TEST_CASE("lstm_cell matches the scalar reference") {
  Arch arch = Arch::tiny();
  arch.conv3 = 3;
  arch.hidden = 2;
  ModelParams<double> params = init_params<double>(arch, 99);

  std::mt19937 rng(12);
  const VectorX<double> x = random_matrix(3, 1, rng);
  const VectorX<double> h0 = random_matrix(2, 1, rng, 0.4);
  const VectorX<double> c0 = random_matrix(2, 1, rng);

  const auto [h1, c1] =
      lstm_cell<double>(x, h0, c0, lstm_gates(params, "lstm_fwd"));
  VectorX<double> h_ref, c_ref;
  scalar_lstm_step(params, "lstm_fwd", x, h0, c0, h_ref, c_ref);
  CHECK((h1 - h_ref).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((c1 - c_ref).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("lstm gates stay in (0,1) and hidden states inside [-1,1]") {
  Arch arch = Arch::tiny();
  ModelParams<double> params = init_params<double>(arch, 81);
  params.tensor("lstm_fwd.w_o") *= 50.0;  // push toward saturation
  const auto gates = lstm_gates(params, "lstm_fwd");

  std::mt19937 rng(9);
  VectorX<double> h = VectorX<double>::Zero(arch.hidden);
  VectorX<double> c = VectorX<double>::Zero(arch.hidden);
  for (int t = 0; t < 50; ++t) {
    const VectorX<double> x = random_matrix(arch.conv3, 1, rng, 100.0);
    std::tie(h, c) = lstm_cell<double>(x, h, c, gates);
    CHECK(h.cwiseAbs().maxCoeff() <= 1.0);
  }
}

TEST_CASE("bilstm handles a length-1 sequence") {
  Arch arch = Arch::tiny();
  ModelParams<double> params = init_params<double>(arch, 5);
  std::mt19937 rng(1);
  const MatrixX<double> x = random_matrix(arch.conv3, 1, rng);

  const MatrixX<double> out = bilstm_forward<double>(
      x, lstm_gates(params, "lstm_fwd"), lstm_gates(params, "lstm_bwd"));
  REQUIRE(out.rows() == 2 * arch.hidden);
  REQUIRE(out.cols() == 1);

  const VectorX<double> zero_h = VectorX<double>::Zero(arch.hidden);
  const auto [hf, cf] = lstm_cell<double>(x.col(0), zero_h, zero_h,
                                          lstm_gates(params, "lstm_fwd"));
  const auto [hb, cb] = lstm_cell<double>(x.col(0), zero_h, zero_h,
                                          lstm_gates(params, "lstm_bwd"));
  CHECK((out.col(0).head(arch.hidden) - hf).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((out.col(0).tail(arch.hidden) - hb).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("bilstm reversal symmetry") {
  // Reversing time and swapping the direction parameters reverses the
  // output, with the direction halves swapped.
  Arch arch = Arch::tiny();
  ModelParams<double> params = init_params<double>(arch, 31);
  std::mt19937 rng(2);
  const Eigen::Index len = 9;
  const MatrixX<double> x = random_matrix(arch.conv3, len, rng);
  MatrixX<double> x_rev(arch.conv3, len);
  for (Eigen::Index t = 0; t < len; ++t) x_rev.col(t) = x.col(len - 1 - t);

  const auto fwd = lstm_gates(params, "lstm_fwd");
  const auto bwd = lstm_gates(params, "lstm_bwd");
  const MatrixX<double> out = bilstm_forward<double>(x, fwd, bwd);
  const MatrixX<double> out_swapped = bilstm_forward<double>(x_rev, bwd, fwd);

  const Eigen::Index h = arch.hidden;
  for (Eigen::Index t = 0; t < len; ++t) {
    CHECK((out_swapped.col(len - 1 - t).head(h) - out.col(t).tail(h))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
    CHECK((out_swapped.col(len - 1 - t).tail(h) - out.col(t).head(h))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }
}

TEST_CASE("batched lstm engine agrees with the per-cell path") {
  Arch arch = Arch::tiny();
  ModelParams<double> params = init_params<double>(arch, 77);
  std::mt19937 rng(7);
  const Eigen::Index len = 12, batch = 3;

  std::vector<MatrixX<double>> sequences;
  for (Eigen::Index b = 0; b < batch; ++b)
    sequences.push_back(random_matrix(arch.conv3, len, rng));

  MatrixX<double> x_all(arch.conv3, len * batch);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index t = 0; t < len; ++t)
      x_all.col(t * batch + b) = sequences[static_cast<std::size_t>(b)].col(t);

  const MatrixX<double> packed =
      detail::bilstm_forward_batched<double>(params, x_all, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const MatrixX<double> single = bilstm_forward<double>(
        sequences[static_cast<std::size_t>(b)],
        lstm_gates(params, "lstm_fwd"), lstm_gates(params, "lstm_bwd"));
    for (Eigen::Index t = 0; t < len; ++t)
      CHECK((packed.col(t * batch + b) - single.col(t)).cwiseAbs().maxCoeff() <
            1e-12);
  }
}

TEST_CASE("zero model produces identical logits at every timestep") {
  Arch arch = Arch::tiny();
  ModelParams<double> params(arch);  // zero weights, running stats (0, 1)
  SampledSignal signal{Eigen::ArrayXd::LinSpaced(64, -1.0, 1.0), 250.0};
  MatrixX<double> input(1, 64);
  for (Eigen::Index i = 0; i < 64; ++i) input(0, i) = signal.samples[i];
  const MatrixX<double> logits =
      forward_sequence(params, input, BatchNormMode::Eval);
  for (Eigen::Index t = 1; t < logits.cols(); ++t)
    CHECK((logits.col(t) - logits.col(0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("model_forward pads to the canonical window and rejects longer input") {
  Arch arch = Arch::tiny();
  ModelParams<double> params = init_params<double>(arch, 15);
  const SampledSignal shorter{Eigen::ArrayXd::Constant(100, 0.5), 250.0};
  const MatrixX<double> logits =
      model_forward(params, shorter, BatchNormMode::Eval);
  CHECK(logits.cols() == kCanonicalWindow);
  CHECK(logits.rows() == arch.classes);

  const SampledSignal longer{Eigen::ArrayXd::Zero(kCanonicalWindow + 1),
                             250.0};
  CHECK_THROWS_AS(model_forward(params, longer, BatchNormMode::Eval),
                  ShapeMismatch);
}

TEST_CASE("uniform logits give ln 2 loss regardless of labels") {
  Arch arch = Arch::tiny();
  ModelParams<double> params(arch);  // zero model -> equal logits
  auto batch = random_batch(arch, 16, 2, 3);
  const LossGrad<double> lg = loss_and_grad(params, batch);
  CHECK(lg.loss == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("confident correct logits drive the loss to zero") {
  Arch arch = Arch::tiny();
  ModelParams<double> params(arch);
  params.tensor("head.bias")(1, 0) = 50.0;  // always predict class 1

  Example<double> ex;
  ex.input = MatrixX<double>::Zero(1, 16);
  ex.target.assign(16, 1);
  const double loss = eval_loss(params, {ex});
  CHECK(loss < 1e-6);
}

TEST_CASE("analytic gradients match central finite differences") {
  const Arch arch = Arch::tiny();
  ModelParams<double> params = init_params<double>(arch, 1234);
  const auto batch = random_batch(arch, 16, 2, 77);

  const LossGrad<double> lg = loss_and_grad(params, batch);

  // 10 parameters per layer type keeps this fast; the acceptance suite
  // samples 50+ per type.
  std::mt19937 rng(5150);
  const auto loss_at = [&](Eigen::Index flat_index, double value) {
    ModelParams<double> perturbed = params;
    perturbed.flat[flat_index] = value;
    return loss_and_grad(perturbed, batch).loss;
  };

  for (const TensorSpec& spec : params.layout.tensors()) {
    std::uniform_int_distribution<Eigen::Index> pick(0, spec.size - 1);
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::Index index = spec.offset + pick(rng);
      const double h = 1e-5;
      const double base = params.flat[index];
      const double numeric =
          (loss_at(index, base + h) - loss_at(index, base - h)) / (2.0 * h);
      const double analytic = lg.grad[index];
      const double err = std::abs(analytic - numeric);
      const double tol =
          1e-4 * std::max({std::abs(analytic), std::abs(numeric), 1e-4});
      CAPTURE(spec.name);
      CAPTURE(index);
      CHECK(err <= tol);
    }
  }
}

TEST_CASE("training is deterministic and reduces loss on a tiny problem") {
  const Arch arch = Arch::tiny();
  auto dataset = random_batch(arch, 24, 4, 11);
  // Give the labels structure: class 1 wherever the input is positive.
  for (auto& ex : dataset)
    for (Eigen::Index t = 0; t < 24; ++t)
      ex.target[static_cast<std::size_t>(t)] = ex.input(0, t) > 0.0;

  TrainConfig cfg;
  cfg.learning_rate = 5e-3;
  cfg.epochs = 30;
  cfg.batch_size = 2;
  cfg.seed = 7;

  const TrainResult<double> a = train<double>(cfg, arch, dataset);
  const TrainResult<double> b = train<double>(cfg, arch, dataset);
  REQUIRE(a.loss_curve.size() == 30);
  CHECK(a.loss_curve == b.loss_curve);  // bit-identical
  CHECK((a.params.flat - b.params.flat).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.loss_curve.back() < a.loss_curve.front());
  for (const double loss : a.loss_curve) CHECK(std::isfinite(loss));
}

TEST_CASE("train rejects an empty dataset") {
  TrainConfig cfg;
  CHECK_THROWS_AS(train<double>(cfg, Arch::tiny(), {}), EmptyDataset);
}

TEST_CASE("float and double instantiations agree on the forward pass") {
  Arch arch = Arch::tiny();
  ModelParams<double> params = init_params<double>(arch, 55);
  const ModelParams<float> params_f = params.cast<float>();

  std::mt19937 rng(66);
  MatrixX<double> input = random_matrix(1, 32, rng);
  const MatrixX<double> ld =
      forward_sequence(params, input, BatchNormMode::Eval);
  const MatrixX<float> lf = forward_sequence(
      params_f, MatrixX<float>(input.cast<float>()), BatchNormMode::Eval);
  CHECK((ld.cast<float>() - lf).cwiseAbs().maxCoeff() < 1e-4f);
}

TEST_CASE("checkpoints round-trip bit exactly and validate structure") {
  namespace fs = std::filesystem;
  const Arch arch = Arch::tiny();
  ModelParams<double> params = init_params<double>(arch, 2025);
  params.running_mean[0].setConstant(0.25);
  params.running_var[1].setConstant(3.5);

  const fs::path path = fs::temp_directory_path() / "ecg_test.ckpt";
  save_checkpoint(params, path);
  const ModelParams<double> loaded = load_checkpoint(path);
  CHECK(loaded.layout.total() == params.layout.total());
  CHECK((loaded.flat - params.flat).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < 3; ++i) {
    CHECK((loaded.running_mean[i] - params.running_mean[i]).abs().maxCoeff() ==
          0.0);
    CHECK((loaded.running_var[i] - params.running_var[i]).abs().maxCoeff() ==
          0.0);
  }

  // Corrupt the magic.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);

  // Truncate mid-tensor.
  save_checkpoint(params, path);
  fs::resize_file(path, fs::file_size(path) / 2);
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);
  fs::remove(path);
}

TEST_CASE("a table1 checkpoint carries exactly 520,322 learnable scalars") {
  namespace fs = std::filesystem;
  const ModelParams<double> params = init_params<double>(Arch::table1(), 1);
  const fs::path path = fs::temp_directory_path() / "ecg_table1.ckpt";
  save_checkpoint(params, path);
  const ModelParams<double> loaded = load_checkpoint(path);
  CHECK(loaded.layout.total() == 520322);
  fs::remove(path);
}

TEST_CASE("binary_target extracts one wave") {
  LabelMask mask;
  mask.classes = {WaveClass::Background, WaveClass::P, WaveClass::Qrs,
                  WaveClass::Qrs, WaveClass::T};
  const auto target = binary_target(mask, WaveClass::Qrs);
  CHECK(target == std::vector<std::uint8_t>{0, 0, 1, 1, 0});
}
