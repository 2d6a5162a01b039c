#include "ecg/neural.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "ecg/errors.hpp"

namespace ecg {

namespace {

template <typename Scalar>
using MapM = Eigen::Map<MatrixX<Scalar>>;
template <typename Scalar>
using CMapM = Eigen::Map<const MatrixX<Scalar>>;

const char* kGateNames[4] = {"i", "f", "c", "o"};

template <typename Scalar>
MapM<Scalar> view(VectorX<Scalar>& flat, const TensorSpec& spec) {
  return MapM<Scalar>(flat.data() + spec.offset, spec.dims[0],
                      spec.size / spec.dims[0]);
}

template <typename Scalar>
MatrixX<Scalar> sigmoid(const MatrixX<Scalar>& z) {
  return (Scalar(1) / (Scalar(1) + (-z.array()).exp())).matrix();
}

}  // namespace

// ---------------------------------------------------------------------------
// Layout
// ---------------------------------------------------------------------------

ParamLayout::ParamLayout(const Arch& arch) {
  const auto add = [&](std::string name, std::vector<Eigen::Index> dims,
                       Eigen::Index fan_in, double init_value = 0.0) {
    TensorSpec spec;
    spec.name = std::move(name);
    spec.dims = std::move(dims);
    spec.size = 1;
    for (const Eigen::Index d : spec.dims) spec.size *= d;
    spec.offset = total_;
    spec.fan_in = fan_in;
    spec.init_value = init_value;
    total_ += spec.size;
    tensors_.push_back(std::move(spec));
  };

  const auto conv_block = [&](const std::string& idx, int out, int in, int k) {
    add("conv" + idx + ".weight", {out, in, k}, in * k);
    add("conv" + idx + ".bias", {out}, 0);
    add("bn" + idx + ".gamma", {out}, 0, 1.0);
    add("bn" + idx + ".beta", {out}, 0);
  };
  conv_block("1", arch.conv1, arch.in_channels, arch.k1);
  conv_block("2", arch.conv2, arch.conv1, arch.k2);
  conv_block("3", arch.conv3, arch.conv2, arch.k3);

  const int h = arch.hidden;
  const int x_dim = arch.conv3;
  for (const std::string dir : {"lstm_fwd", "lstm_bwd"}) {
    for (const char* g : kGateNames)
      add(dir + ".w_" + g, {h, h + x_dim}, h + x_dim);
    for (const char* g : kGateNames) {
      const bool forget = g[0] == 'f';
      add(dir + ".b_" + g, {h}, 0, forget ? 1.0 : 0.0);
    }
    for (const char* g : kGateNames) add(dir + ".b2_" + std::string(g), {h}, 0);
  }

  add("head.weight", {arch.classes, 2 * h}, 2 * h);
  add("head.bias", {arch.classes}, 0);
}

const TensorSpec& ParamLayout::find(const std::string& name) const {
  for (const TensorSpec& spec : tensors_)
    if (spec.name == name) return spec;
  throw ShapeMismatch("no tensor named '" + name + "' in layout");
}

std::array<Eigen::Index, 8> ParamLayout::per_layer_counts() const {
  std::array<Eigen::Index, 8> counts{};
  for (const TensorSpec& spec : tensors_) {
    std::size_t slot = 0;
    if (spec.name.rfind("conv1.", 0) == 0) slot = 0;
    else if (spec.name.rfind("bn1.", 0) == 0) slot = 1;
    else if (spec.name.rfind("conv2.", 0) == 0) slot = 2;
    else if (spec.name.rfind("bn2.", 0) == 0) slot = 3;
    else if (spec.name.rfind("conv3.", 0) == 0) slot = 4;
    else if (spec.name.rfind("bn3.", 0) == 0) slot = 5;
    else if (spec.name.rfind("lstm_", 0) == 0) slot = 6;
    else slot = 7;
    counts[slot] += spec.size;
  }
  return counts;
}

// ---------------------------------------------------------------------------
// ModelParams
// ---------------------------------------------------------------------------

template <typename Scalar>
ModelParams<Scalar>::ModelParams(const Arch& a)
    : arch(a), layout(a), flat(VectorX<Scalar>::Zero(layout.total())) {
  const int widths[3] = {a.conv1, a.conv2, a.conv3};
  for (int i = 0; i < 3; ++i) {
    running_mean[i] = ArrayX<Scalar>::Zero(widths[i]);
    running_var[i] = ArrayX<Scalar>::Ones(widths[i]);
  }
}

template <typename Scalar>
Eigen::Map<MatrixX<Scalar>> ModelParams<Scalar>::tensor(
    const std::string& name) {
  const TensorSpec& spec = layout.find(name);
  return MapM<Scalar>(flat.data() + spec.offset, spec.dims[0],
                      spec.size / spec.dims[0]);
}

template <typename Scalar>
Eigen::Map<const MatrixX<Scalar>> ModelParams<Scalar>::tensor(
    const std::string& name) const {
  const TensorSpec& spec = layout.find(name);
  return CMapM<Scalar>(flat.data() + spec.offset, spec.dims[0],
                       spec.size / spec.dims[0]);
}

template <typename Scalar>
template <typename Other>
ModelParams<Other> ModelParams<Scalar>::cast() const {
  ModelParams<Other> out(arch);
  out.flat = flat.template cast<Other>();
  for (int i = 0; i < 3; ++i) {
    out.running_mean[i] = running_mean[i].template cast<Other>();
    out.running_var[i] = running_var[i].template cast<Other>();
  }
  return out;
}

template <typename Scalar>
ModelParams<Scalar> init_params(const Arch& arch, std::uint64_t seed) {
  ModelParams<Scalar> params(arch);
  std::mt19937_64 rng(seed);
  for (const TensorSpec& spec : params.layout.tensors()) {
    Scalar* data = params.flat.data() + spec.offset;
    if (spec.fan_in > 0) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index i = 0; i < spec.size; ++i)
        data[i] = static_cast<Scalar>(dist(rng));
    } else if (spec.init_value != 0.0) {
      for (Eigen::Index i = 0; i < spec.size; ++i)
        data[i] = static_cast<Scalar>(spec.init_value);
    }
  }
  return params;
}

// ---------------------------------------------------------------------------
// Primitive ops
// ---------------------------------------------------------------------------

namespace {

template <typename Scalar>
MatrixX<Scalar> im2col(const MatrixX<Scalar>& x, int k) {
  const Eigen::Index channels = x.rows();
  const Eigen::Index len = x.cols();
  MatrixX<Scalar> col = MatrixX<Scalar>::Zero(channels * k, len);
  for (Eigen::Index t = 0; t < len; ++t)
    for (Eigen::Index c = 0; c < channels; ++c)
      for (Eigen::Index i = 0; i < k && t + i < len; ++i)
        col(c * k + i, t) = x(c, t + i);
  return col;
}

// Scatter the im2col-shaped gradient back onto the input grid.
template <typename Scalar>
MatrixX<Scalar> col2im(const MatrixX<Scalar>& dcol, Eigen::Index channels,
                       int k, Eigen::Index len) {
  MatrixX<Scalar> dx = MatrixX<Scalar>::Zero(channels, len);
  for (Eigen::Index t = 0; t < len; ++t)
    for (Eigen::Index c = 0; c < channels; ++c)
      for (Eigen::Index i = 0; i < k && t + i < len; ++i)
        dx(c, t + i) += dcol(c * k + i, t);
  return dx;
}

}  // namespace

template <typename Scalar>
MatrixX<Scalar> conv1d_forward(const MatrixX<Scalar>& x,
                               const MatrixX<Scalar>& weight,
                               const VectorX<Scalar>& bias, int kernel_len) {
  if (kernel_len < 1 || kernel_len % 2 == 0)
    throw InvalidArgument("kernel length must be odd and positive");
  if (weight.cols() != x.rows() * kernel_len || weight.rows() != bias.size())
    throw ShapeMismatch("conv weight " + std::to_string(weight.rows()) + "x" +
                        std::to_string(weight.cols()) + " does not match " +
                        std::to_string(x.rows()) + " input channels, kernel " +
                        std::to_string(kernel_len));
  if (x.cols() < 1) throw ShapeMismatch("conv input must not be empty");

  MatrixX<Scalar> out = weight * im2col(x, kernel_len);
  out.colwise() += bias;
  return out;
}

template <typename Scalar>
MatrixX<Scalar> relu(const MatrixX<Scalar>& x) {
  return x.cwiseMax(Scalar(0));
}

template <typename Scalar>
struct BnStats {
  ArrayX<Scalar> mean, var_biased;
  Eigen::Index count = 0;
};

namespace {

// Pure batch-norm core; train mode reports the batch stats instead of
// touching the running ones.
template <typename Scalar>
void bn_forward(std::vector<MatrixX<Scalar>>& batch,
                const VectorX<Scalar>& gamma, const VectorX<Scalar>& beta,
                const ArrayX<Scalar>& running_mean,
                const ArrayX<Scalar>& running_var, BatchNormMode mode,
                Scalar eps, BnStats<Scalar>* stats_out,
                std::vector<MatrixX<Scalar>>* xhat_out,
                ArrayX<Scalar>* inv_std_out) {
  if (batch.empty()) throw ShapeMismatch("batch norm over an empty batch");
  const Eigen::Index channels = batch.front().rows();
  if (gamma.size() != channels || beta.size() != channels)
    throw ShapeMismatch("batch norm affine size mismatch");

  ArrayX<Scalar> mean(channels), var(channels);
  Eigen::Index count = 0;
  if (mode == BatchNormMode::Train) {
    mean.setZero();
    for (const auto& m : batch) {
      if (m.rows() != channels) throw ShapeMismatch("ragged batch channels");
      mean += m.array().rowwise().sum();
      count += m.cols();
    }
    mean /= static_cast<Scalar>(count);
    var.setZero();
    for (const auto& m : batch)
      var += (m.array().colwise() - mean).square().rowwise().sum();
    var /= static_cast<Scalar>(count);
  } else {
    mean = running_mean;
    var = running_var;
  }

  const ArrayX<Scalar> inv_std = (var + eps).sqrt().inverse();
  if (!inv_std.isFinite().all())
    throw ZeroVariance("batch norm variance underflow");

  for (auto& m : batch) {
    MatrixX<Scalar> xhat =
        ((m.array().colwise() - mean).colwise() * inv_std).matrix();
    m = (xhat.array().colwise() * gamma.array()).matrix();
    m.colwise() += beta;
    if (xhat_out) xhat_out->push_back(std::move(xhat));
  }
  if (stats_out) *stats_out = {mean, var, count};
  if (inv_std_out) *inv_std_out = inv_std;
}

template <typename Scalar>
void update_running(ArrayX<Scalar>& running_mean, ArrayX<Scalar>& running_var,
                    const BnStats<Scalar>& stats, Scalar momentum) {
  // Unbiased variance goes into the running estimate, biased into the
  // normalization itself (the usual deep-learning convention).
  ArrayX<Scalar> var_unbiased = stats.var_biased;
  if (stats.count > 1)
    var_unbiased *= static_cast<Scalar>(stats.count) /
                    static_cast<Scalar>(stats.count - 1);
  running_mean = (Scalar(1) - momentum) * running_mean + momentum * stats.mean;
  running_var = (Scalar(1) - momentum) * running_var + momentum * var_unbiased;
}

}  // namespace

template <typename Scalar>
void batchnorm1d_forward(std::vector<MatrixX<Scalar>>& batch,
                         const VectorX<Scalar>& gamma,
                         const VectorX<Scalar>& beta,
                         ArrayX<Scalar>& running_mean,
                         ArrayX<Scalar>& running_var, BatchNormMode mode,
                         Scalar eps, Scalar momentum) {
  BnStats<Scalar> stats;
  bn_forward<Scalar>(batch, gamma, beta, running_mean, running_var, mode, eps,
                     mode == BatchNormMode::Train ? &stats : nullptr, nullptr,
                     nullptr);
  if (mode == BatchNormMode::Train)
    update_running(running_mean, running_var, stats, momentum);
}

template <typename Scalar>
LstmGates<Scalar> lstm_gates(const ModelParams<Scalar>& params,
                             const std::string& direction) {
  const auto t = [&](const std::string& suffix) {
    return params.tensor(direction + suffix);
  };
  return LstmGates<Scalar>{t(".w_i"),  t(".w_f"),  t(".w_c"),  t(".w_o"),
                           t(".b_i"),  t(".b_f"),  t(".b_c"),  t(".b_o"),
                           t(".b2_i"), t(".b2_f"), t(".b2_c"), t(".b2_o")};
}

template <typename Scalar>
std::pair<VectorX<Scalar>, VectorX<Scalar>> lstm_cell(
    const VectorX<Scalar>& x_t, const VectorX<Scalar>& h_prev,
    const VectorX<Scalar>& c_prev, const LstmGates<Scalar>& gates) {
  const Eigen::Index h = h_prev.size();
  if (gates.w_i.cols() != h + x_t.size() || c_prev.size() != h)
    throw ShapeMismatch("lstm cell dimensions are inconsistent");

  VectorX<Scalar> concat(h + x_t.size());
  concat << h_prev, x_t;

  const auto gate = [&](const CMapM<Scalar>& w, const CMapM<Scalar>& b,
                        const CMapM<Scalar>& b2) -> VectorX<Scalar> {
    return w * concat + b.col(0) + b2.col(0);
  };
  const VectorX<Scalar> i = sigmoid<Scalar>(gate(gates.w_i, gates.b_i, gates.b2_i));
  const VectorX<Scalar> f = sigmoid<Scalar>(gate(gates.w_f, gates.b_f, gates.b2_f));
  const VectorX<Scalar> g =
      gate(gates.w_c, gates.b_c, gates.b2_c).array().tanh().matrix();
  const VectorX<Scalar> o = sigmoid<Scalar>(gate(gates.w_o, gates.b_o, gates.b2_o));

  VectorX<Scalar> c_t =
      (f.array() * c_prev.array() + i.array() * g.array()).matrix();
  VectorX<Scalar> h_t = (o.array() * c_t.array().tanh()).matrix();
  return {std::move(h_t), std::move(c_t)};
}

template <typename Scalar>
MatrixX<Scalar> bilstm_forward(const MatrixX<Scalar>& x,
                               const LstmGates<Scalar>& fwd,
                               const LstmGates<Scalar>& bwd) {
  const Eigen::Index h = fwd.w_i.rows();
  const Eigen::Index len = x.cols();
  if (fwd.w_i.cols() != h + x.rows())
    throw ShapeMismatch("bilstm input feature dimension mismatch");

  MatrixX<Scalar> out(2 * h, len);
  VectorX<Scalar> hs = VectorX<Scalar>::Zero(h);
  VectorX<Scalar> cs = VectorX<Scalar>::Zero(h);
  for (Eigen::Index t = 0; t < len; ++t) {
    std::tie(hs, cs) = lstm_cell<Scalar>(x.col(t), hs, cs, fwd);
    out.col(t).head(h) = hs;
  }
  hs.setZero();
  cs.setZero();
  for (Eigen::Index t = len - 1; t >= 0; --t) {
    std::tie(hs, cs) = lstm_cell<Scalar>(x.col(t), hs, cs, bwd);
    out.col(t).tail(h) = hs;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batched training engine
// ---------------------------------------------------------------------------

namespace {

template <typename Scalar>
struct DirCache {
  MatrixX<Scalar> i, f, g, o, c, tc, cprev, hprev;  // hidden x (L*B)
};

// One LSTM direction over timestep-major packed columns. Writes the hidden
// states into rows [row0, row0 + hidden) of out_full; fills the cache when
// given.
template <typename Scalar>
void lstm_dir_forward(const ModelParams<Scalar>& params,
                      const std::string& dir, const MatrixX<Scalar>& x_all,
                      Eigen::Index batch, bool reverse,
                      MatrixX<Scalar>& out_full, Eigen::Index row0,
                      DirCache<Scalar>* cache) {
  const Eigen::Index h = params.arch.hidden;
  const Eigen::Index x_dim = x_all.rows();
  const Eigen::Index lb = x_all.cols();
  const Eigen::Index len = lb / batch;

  std::vector<CMapM<Scalar>> w, b, b2;
  for (const char* g : kGateNames) {
    w.push_back(params.tensor(dir + ".w_" + g));
    b.push_back(params.tensor(dir + ".b_" + g));
    b2.push_back(params.tensor(dir + ".b2_" + std::string(g)));
  }

  // Input contributions for every timestep at once; only the recurrent part
  // stays sequential.
  std::array<MatrixX<Scalar>, 4> zx;
  for (int g = 0; g < 4; ++g) {
    zx[g].noalias() = w[g].rightCols(x_dim) * x_all;
    const VectorX<Scalar> bias = b[g].col(0) + b2[g].col(0);
    zx[g].colwise() += bias;
  }

  if (cache) {
    for (MatrixX<Scalar>* m : {&cache->i, &cache->f, &cache->g, &cache->o,
                               &cache->c, &cache->tc, &cache->cprev,
                               &cache->hprev})
      m->resize(h, lb);
  }

  MatrixX<Scalar> h_prev = MatrixX<Scalar>::Zero(h, batch);
  MatrixX<Scalar> c_prev = MatrixX<Scalar>::Zero(h, batch);
  MatrixX<Scalar> z(h, batch);
  for (Eigen::Index s = 0; s < len; ++s) {
    const Eigen::Index t = reverse ? len - 1 - s : s;
    const Eigen::Index col0 = t * batch;

    z.noalias() = w[0].leftCols(h) * h_prev;
    const MatrixX<Scalar> gi = sigmoid<Scalar>(zx[0].middleCols(col0, batch) + z);
    z.noalias() = w[1].leftCols(h) * h_prev;
    const MatrixX<Scalar> gf = sigmoid<Scalar>(zx[1].middleCols(col0, batch) + z);
    z.noalias() = w[2].leftCols(h) * h_prev;
    const MatrixX<Scalar> gc =
        (zx[2].middleCols(col0, batch) + z).array().tanh().matrix();
    z.noalias() = w[3].leftCols(h) * h_prev;
    const MatrixX<Scalar> go = sigmoid<Scalar>(zx[3].middleCols(col0, batch) + z);

    MatrixX<Scalar> c_t =
        (gf.array() * c_prev.array() + gi.array() * gc.array()).matrix();
    MatrixX<Scalar> tc = c_t.array().tanh().matrix();
    MatrixX<Scalar> h_t = (go.array() * tc.array()).matrix();

    if (cache) {
      cache->i.middleCols(col0, batch) = gi;
      cache->f.middleCols(col0, batch) = gf;
      cache->g.middleCols(col0, batch) = gc;
      cache->o.middleCols(col0, batch) = go;
      cache->c.middleCols(col0, batch) = c_t;
      cache->tc.middleCols(col0, batch) = tc;
      cache->cprev.middleCols(col0, batch) = c_prev;
      cache->hprev.middleCols(col0, batch) = h_prev;
    }
    out_full.block(row0, col0, h, batch) = h_t;
    h_prev = std::move(h_t);
    c_prev = std::move(c_t);
  }
}

template <typename Scalar>
void lstm_dir_backward(const ModelParams<Scalar>& params,
                       const std::string& dir, const MatrixX<Scalar>& x_all,
                       Eigen::Index batch, bool reverse,
                       const DirCache<Scalar>& cache,
                       const MatrixX<Scalar>& d_out_full, Eigen::Index row0,
                       VectorX<Scalar>& grad, MatrixX<Scalar>& dx_all) {
  const Eigen::Index h = params.arch.hidden;
  const Eigen::Index x_dim = x_all.rows();
  const Eigen::Index lb = x_all.cols();
  const Eigen::Index len = lb / batch;

  std::vector<CMapM<Scalar>> w;
  for (const char* g : kGateNames) w.push_back(params.tensor(dir + ".w_" + g));

  std::array<MatrixX<Scalar>, 4> dz;
  for (auto& m : dz) m.resize(h, lb);

  MatrixX<Scalar> dh_rec = MatrixX<Scalar>::Zero(h, batch);
  MatrixX<Scalar> dc = MatrixX<Scalar>::Zero(h, batch);
  for (Eigen::Index s = len - 1; s >= 0; --s) {
    const Eigen::Index t = reverse ? len - 1 - s : s;
    const Eigen::Index col0 = t * batch;

    const auto gi = cache.i.middleCols(col0, batch).array();
    const auto gf = cache.f.middleCols(col0, batch).array();
    const auto gc = cache.g.middleCols(col0, batch).array();
    const auto go = cache.o.middleCols(col0, batch).array();
    const auto tc = cache.tc.middleCols(col0, batch).array();

    const MatrixX<Scalar> dh = d_out_full.block(row0, col0, h, batch) + dh_rec;
    dc.array() += dh.array() * go * (Scalar(1) - tc.square());

    dz[3].middleCols(col0, batch) =
        (dh.array() * tc * go * (Scalar(1) - go)).matrix();
    dz[0].middleCols(col0, batch) =
        (dc.array() * gc * gi * (Scalar(1) - gi)).matrix();
    dz[2].middleCols(col0, batch) =
        (dc.array() * gi * (Scalar(1) - gc.square())).matrix();
    dz[1].middleCols(col0, batch) =
        (dc.array() * cache.cprev.middleCols(col0, batch).array() * gf *
         (Scalar(1) - gf))
            .matrix();
    dc.array() *= gf;

    dh_rec.noalias() = w[0].leftCols(h).transpose() * dz[0].middleCols(col0, batch);
    for (int g = 1; g < 4; ++g)
      dh_rec.noalias() +=
          w[g].leftCols(h).transpose() * dz[g].middleCols(col0, batch);
  }

  // Weight and input gradients in bulk; column blocks are indexed by
  // timestep in both factors, so processing order does not matter.
  for (int g = 0; g < 4; ++g) {
    const TensorSpec& wspec = params.layout.find(dir + ".w_" + kGateNames[g]);
    MapM<Scalar> dw = view(grad, wspec);
    dw.leftCols(h).noalias() += dz[g] * cache.hprev.transpose();
    dw.rightCols(x_dim).noalias() += dz[g] * x_all.transpose();

    const VectorX<Scalar> row_sum = dz[g].rowwise().sum();
    view(grad, params.layout.find(dir + ".b_" + kGateNames[g])).col(0) +=
        row_sum;
    view(grad, params.layout.find(dir + ".b2_" + std::string(kGateNames[g])))
        .col(0) += row_sum;

    dx_all.noalias() += w[g].rightCols(x_dim).transpose() * dz[g];
  }
}

struct ConvBlockDef {
  const char* weight;
  const char* bias;
  const char* gamma;
  const char* beta;
  int kernel;
  int bn_index;
};

std::array<ConvBlockDef, 3> conv_blocks(const Arch& arch) {
  return {{{"conv1.weight", "conv1.bias", "bn1.gamma", "bn1.beta", arch.k1, 0},
           {"conv2.weight", "conv2.bias", "bn2.gamma", "bn2.beta", arch.k2, 1},
           {"conv3.weight", "conv3.bias", "bn3.gamma", "bn3.beta", arch.k3,
            2}}};
}

template <typename Scalar>
struct BlockCache {
  std::vector<MatrixX<Scalar>> input;  // pre-conv activations, per sample
  std::vector<MatrixX<Scalar>> xhat;   // normalized pre-affine activations
  std::vector<MatrixX<Scalar>> out;    // post-relu activations
  ArrayX<Scalar> inv_std;
  BnStats<Scalar> stats;
};

template <typename Scalar>
struct EngineResult {
  double loss = 0.0;
  VectorX<Scalar> grad;
  std::array<BnStats<Scalar>, 3> bn_stats;
  Eigen::Index timesteps = 0;
};

// Forward + optional backward over one equal-length group of examples.
// Train-mode batch norm; running stats are reported, never written.
template <typename Scalar>
EngineResult<Scalar> run_group(const ModelParams<Scalar>& params,
                               const std::vector<const Example<Scalar>*>& group,
                               bool want_grad, double loss_scale,
                               VectorX<Scalar>* grad_accum) {
  const Arch& arch = params.arch;
  const auto batch = static_cast<Eigen::Index>(group.size());
  const Eigen::Index len = group.front()->input.cols();

  for (const Example<Scalar>* ex : group) {
    if (ex->input.rows() != arch.in_channels)
      throw ShapeMismatch("example channel count mismatch");
    if (ex->input.cols() != len)
      throw ShapeMismatch("examples in a group must share one length");
    if (static_cast<Eigen::Index>(ex->target.size()) != len)
      throw ShapeMismatch("target length must match the input length");
  }

  EngineResult<Scalar> result;
  result.timesteps = batch * len;

  // Conv -> BN -> ReLU stacks.
  std::array<BlockCache<Scalar>, 3> blocks;
  {
    std::vector<MatrixX<Scalar>> acts;
    acts.reserve(group.size());
    for (const Example<Scalar>* ex : group) acts.push_back(ex->input);
    for (const ConvBlockDef& def : conv_blocks(arch)) {
      BlockCache<Scalar>& cache = blocks[def.bn_index];
      cache.input = std::move(acts);
      const MatrixX<Scalar> weight = params.tensor(def.weight);
      const VectorX<Scalar> bias = params.tensor(def.bias).col(0);
      std::vector<MatrixX<Scalar>> conv_out;
      conv_out.reserve(group.size());
      for (const MatrixX<Scalar>& x : cache.input)
        conv_out.push_back(conv1d_forward<Scalar>(x, weight, bias, def.kernel));
      bn_forward<Scalar>(conv_out, params.tensor(def.gamma).col(0),
                         params.tensor(def.beta).col(0),
                         params.running_mean[def.bn_index],
                         params.running_var[def.bn_index],
                         BatchNormMode::Train, Scalar(1e-5), &cache.stats,
                         &cache.xhat, &cache.inv_std);
      result.bn_stats[def.bn_index] = cache.stats;
      cache.out.reserve(conv_out.size());
      for (MatrixX<Scalar>& m : conv_out) cache.out.push_back(relu<Scalar>(m));
      acts = cache.out;
    }
  }

  // Timestep-major packing: column t*B + b is sample b at step t.
  const Eigen::Index x_dim = arch.conv3;
  MatrixX<Scalar> x_all(x_dim, len * batch);
  for (Eigen::Index bidx = 0; bidx < batch; ++bidx)
    for (Eigen::Index t = 0; t < len; ++t)
      x_all.col(t * batch + bidx) = blocks[2].out[bidx].col(t);

  const Eigen::Index h = arch.hidden;
  MatrixX<Scalar> lstm_out(2 * h, len * batch);
  DirCache<Scalar> cache_fwd, cache_bwd;
  lstm_dir_forward<Scalar>(params, "lstm_fwd", x_all, batch, false, lstm_out,
                           0, want_grad ? &cache_fwd : nullptr);
  lstm_dir_forward<Scalar>(params, "lstm_bwd", x_all, batch, true, lstm_out,
                           h, want_grad ? &cache_bwd : nullptr);

  const CMapM<Scalar> head_w = params.tensor("head.weight");
  MatrixX<Scalar> logits = head_w * lstm_out;
  logits.colwise() += VectorX<Scalar>(params.tensor("head.bias").col(0));

  // Per-timestep softmax cross-entropy; dlogits carries the caller's scale.
  const Eigen::Index classes = arch.classes;
  MatrixX<Scalar> dlogits;
  if (want_grad) dlogits.resize(classes, len * batch);
  double loss_sum = 0.0;
  for (Eigen::Index bidx = 0; bidx < batch; ++bidx) {
    const auto& target = group[bidx]->target;
    for (Eigen::Index t = 0; t < len; ++t) {
      const Eigen::Index col = t * batch + bidx;
      const int y = target[static_cast<std::size_t>(t)];
      if (y < 0 || y >= classes)
        throw ShapeMismatch("target class out of range");
      const VectorX<Scalar> l = logits.col(col);
      const Scalar m = l.maxCoeff();
      const Scalar lse =
          m + std::log((l.array() - m).exp().sum());
      loss_sum += static_cast<double>(lse - l[y]);
      if (want_grad) {
        VectorX<Scalar> p = (l.array() - lse).exp().matrix();
        p[y] -= Scalar(1);
        dlogits.col(col) = p * static_cast<Scalar>(loss_scale);
      }
    }
  }
  result.loss = loss_sum;
  if (!want_grad) return result;

  VectorX<Scalar>& grad = *grad_accum;

  // Head.
  view(grad, params.layout.find("head.weight")).noalias() +=
      dlogits * lstm_out.transpose();
  view(grad, params.layout.find("head.bias")).col(0) +=
      dlogits.rowwise().sum();
  MatrixX<Scalar> d_lstm_out = head_w.transpose() * dlogits;

  // BiLSTM.
  MatrixX<Scalar> dx_all = MatrixX<Scalar>::Zero(x_dim, len * batch);
  lstm_dir_backward<Scalar>(params, "lstm_fwd", x_all, batch, false, cache_fwd,
                            d_lstm_out, 0, grad, dx_all);
  lstm_dir_backward<Scalar>(params, "lstm_bwd", x_all, batch, true, cache_bwd,
                            d_lstm_out, h, grad, dx_all);

  // Unpack to per-sample gradients.
  std::vector<MatrixX<Scalar>> d_out(group.size());
  for (Eigen::Index bidx = 0; bidx < batch; ++bidx) {
    d_out[bidx].resize(x_dim, len);
    for (Eigen::Index t = 0; t < len; ++t)
      d_out[bidx].col(t) = dx_all.col(t * batch + bidx);
  }

  // Conv blocks, top down.
  const auto defs = conv_blocks(arch);
  for (int bi = 2; bi >= 0; --bi) {
    const ConvBlockDef& def = defs[bi];
    BlockCache<Scalar>& cache = blocks[bi];
    const auto n = static_cast<Scalar>(cache.stats.count);
    const VectorX<Scalar> gamma = params.tensor(def.gamma).col(0);

    // ReLU mask, then the batch-norm reduction terms.
    ArrayX<Scalar> sum_dy = ArrayX<Scalar>::Zero(gamma.size());
    ArrayX<Scalar> sum_dy_xhat = ArrayX<Scalar>::Zero(gamma.size());
    for (std::size_t bidx = 0; bidx < group.size(); ++bidx) {
      d_out[bidx].array() *=
          (cache.out[bidx].array() > Scalar(0)).template cast<Scalar>();
      sum_dy += d_out[bidx].array().rowwise().sum();
      sum_dy_xhat +=
          (d_out[bidx].array() * cache.xhat[bidx].array()).rowwise().sum();
    }
    view(grad, params.layout.find(def.gamma)).col(0) += sum_dy_xhat.matrix();
    view(grad, params.layout.find(def.beta)).col(0) += sum_dy.matrix();

    const ArrayX<Scalar> scale = gamma.array() * cache.inv_std;
    const ArrayX<Scalar> mean_dy = sum_dy / n;
    const ArrayX<Scalar> mean_dy_xhat = sum_dy_xhat / n;

    const MatrixX<Scalar> weight = params.tensor(def.weight);
    MapM<Scalar> dw = view(grad, params.layout.find(def.weight));
    MapM<Scalar> db = view(grad, params.layout.find(def.bias));
    std::vector<MatrixX<Scalar>> d_in(group.size());
    for (std::size_t bidx = 0; bidx < group.size(); ++bidx) {
      MatrixX<Scalar> da =
          (((d_out[bidx].array().colwise() - mean_dy) -
            cache.xhat[bidx].array().colwise() * mean_dy_xhat)
               .colwise() *
           scale)
              .matrix();
      const MatrixX<Scalar> col = im2col(cache.input[bidx], def.kernel);
      dw.noalias() += da * col.transpose();
      db.col(0) += da.rowwise().sum();
      if (bi > 0)
        d_in[bidx] = col2im<Scalar>(weight.transpose() * da,
                                    cache.input[bidx].rows(), def.kernel, len);
    }
    d_out = std::move(d_in);
  }
  return result;
}

// Deterministic equal-length grouping, first-seen order inside each group.
template <typename Scalar>
std::map<Eigen::Index, std::vector<const Example<Scalar>*>> group_by_length(
    const std::vector<Example<Scalar>>& batch) {
  std::map<Eigen::Index, std::vector<const Example<Scalar>*>> groups;
  for (const Example<Scalar>& ex : batch) groups[ex.input.cols()].push_back(&ex);
  return groups;
}

}  // namespace

namespace detail {
template <typename Scalar>
MatrixX<Scalar> bilstm_forward_batched(const ModelParams<Scalar>& params,
                                       const MatrixX<Scalar>& x_all,
                                       Eigen::Index batch) {
  MatrixX<Scalar> out(2 * params.arch.hidden, x_all.cols());
  lstm_dir_forward<Scalar>(params, "lstm_fwd", x_all, batch, false, out, 0,
                           nullptr);
  lstm_dir_forward<Scalar>(params, "lstm_bwd", x_all, batch, true, out,
                           params.arch.hidden, nullptr);
  return out;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Whole-model entry points
// ---------------------------------------------------------------------------

template <typename Scalar>
MatrixX<Scalar> forward_sequence(const ModelParams<Scalar>& params,
                                 const MatrixX<Scalar>& input,
                                 BatchNormMode mode) {
  const Arch& arch = params.arch;
  if (input.rows() != arch.in_channels)
    throw ShapeMismatch("expected " + std::to_string(arch.in_channels) +
                        " input channels, got " + std::to_string(input.rows()));
  if (input.cols() < 1) throw ShapeMismatch("empty input sequence");

  std::vector<MatrixX<Scalar>> acts{input};
  for (const ConvBlockDef& def : conv_blocks(arch)) {
    acts[0] = conv1d_forward<Scalar>(acts[0], params.tensor(def.weight),
                                     params.tensor(def.bias).col(0),
                                     def.kernel);
    bn_forward<Scalar>(acts, params.tensor(def.gamma).col(0),
                       params.tensor(def.beta).col(0),
                       params.running_mean[def.bn_index],
                       params.running_var[def.bn_index], mode, Scalar(1e-5),
                       nullptr, nullptr, nullptr);
    acts[0] = relu<Scalar>(acts[0]);
  }

  const MatrixX<Scalar> lstm_out = detail::bilstm_forward_batched(
      params, acts[0], /*batch=*/1);
  MatrixX<Scalar> logits = params.tensor("head.weight") * lstm_out;
  logits.colwise() += VectorX<Scalar>(params.tensor("head.bias").col(0));
  return logits;
}

template <typename Scalar>
MatrixX<Scalar> model_forward(const ModelParams<Scalar>& params,
                              const SampledSignal& signal,
                              BatchNormMode mode) {
  if (signal.size() > kCanonicalWindow)
    throw ShapeMismatch("input length " + std::to_string(signal.size()) +
                        " exceeds the canonical window " +
                        std::to_string(kCanonicalWindow) +
                        "; chunk the signal first");
  MatrixX<Scalar> input = MatrixX<Scalar>::Zero(1, kCanonicalWindow);
  for (Eigen::Index i = 0; i < signal.size(); ++i)
    input(0, i) = static_cast<Scalar>(signal.samples[i]);
  return forward_sequence(params, input, mode);
}

template <typename Scalar>
std::vector<std::uint8_t> predict_binary(const ModelParams<Scalar>& params,
                                         const SampledSignal& signal) {
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(signal.size()));
  Eigen::Index done = 0;
  while (done < signal.size()) {
    const Eigen::Index chunk =
        std::min<Eigen::Index>(kCanonicalWindow, signal.size() - done);
    MatrixX<Scalar> input(1, chunk);
    for (Eigen::Index i = 0; i < chunk; ++i)
      input(0, i) = static_cast<Scalar>(signal.samples[done + i]);
    const MatrixX<Scalar> logits =
        forward_sequence(params, input, BatchNormMode::Eval);
    for (Eigen::Index t = 0; t < chunk; ++t) {
      Eigen::Index best = 0;
      logits.col(t).maxCoeff(&best);
      labels[static_cast<std::size_t>(done + t)] =
          static_cast<std::uint8_t>(best);
    }
    done += chunk;
  }
  return labels;
}

template <typename Scalar>
LossGrad<Scalar> loss_and_grad(const ModelParams<Scalar>& params,
                               const std::vector<Example<Scalar>>& batch) {
  if (batch.empty()) throw EmptyDataset("loss over an empty batch");

  Eigen::Index total_steps = 0;
  for (const Example<Scalar>& ex : batch) total_steps += ex.input.cols();
  const double scale = 1.0 / static_cast<double>(total_steps);

  LossGrad<Scalar> out;
  out.grad = VectorX<Scalar>::Zero(params.layout.total());
  for (const auto& [len, group] : group_by_length(batch)) {
    const EngineResult<Scalar> res =
        run_group<Scalar>(params, group, true, scale, &out.grad);
    out.loss += res.loss * scale;
  }
  return out;
}

template <typename Scalar>
double eval_loss(const ModelParams<Scalar>& params,
                 const std::vector<Example<Scalar>>& batch) {
  if (batch.empty()) throw EmptyDataset("loss over an empty batch");
  double loss_sum = 0.0;
  Eigen::Index total_steps = 0;
  for (const Example<Scalar>& ex : batch) {
    const MatrixX<Scalar> logits =
        forward_sequence(params, ex.input, BatchNormMode::Eval);
    for (Eigen::Index t = 0; t < logits.cols(); ++t) {
      const VectorX<Scalar> l = logits.col(t);
      const Scalar m = l.maxCoeff();
      const Scalar lse = m + std::log((l.array() - m).exp().sum());
      loss_sum += static_cast<double>(
          lse - l[ex.target[static_cast<std::size_t>(t)]]);
    }
    total_steps += logits.cols();
  }
  return loss_sum / static_cast<double>(total_steps);
}

std::vector<std::uint8_t> binary_target(const LabelMask& mask,
                                        WaveClass wave) {
  std::vector<std::uint8_t> target(mask.classes.size());
  for (std::size_t i = 0; i < mask.classes.size(); ++i)
    target[i] = mask.classes[i] == wave ? 1 : 0;
  return target;
}

template <typename Scalar>
TrainResult<Scalar> train(const TrainConfig& config, const Arch& arch,
                          const std::vector<Example<Scalar>>& dataset) {
  if (dataset.empty()) throw EmptyDataset("training needs at least one example");
  if (config.epochs < 1 || config.batch_size < 1 ||
      !(config.learning_rate > 0.0))
    throw InvalidArgument("epochs, batch_size and learning_rate must be positive");

  std::mt19937_64 rng(config.seed);
  ModelParams<Scalar> params = init_params<Scalar>(arch, rng());

  const Eigen::Index n_params = params.layout.total();
  VectorX<Scalar> m = VectorX<Scalar>::Zero(n_params);
  VectorX<Scalar> v = VectorX<Scalar>::Zero(n_params);
  const Scalar beta1 = Scalar(0.9), beta2 = Scalar(0.999), eps = Scalar(1e-8);
  long step = 0;

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult<Scalar> result{std::move(params), {}};
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    Eigen::Index epoch_steps = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(
          order.size(), begin + static_cast<std::size_t>(config.batch_size));

      Eigen::Index batch_steps = 0;
      for (std::size_t i = begin; i < end; ++i)
        batch_steps += dataset[order[i]].input.cols();
      const double scale = 1.0 / static_cast<double>(batch_steps);

      std::map<Eigen::Index, std::vector<const Example<Scalar>*>> groups;
      for (std::size_t i = begin; i < end; ++i) {
        const Example<Scalar>& ex = dataset[order[i]];
        groups[ex.input.cols()].push_back(&ex);
      }

      VectorX<Scalar> grad = VectorX<Scalar>::Zero(n_params);
      double batch_loss = 0.0;
      for (const auto& [len, group] : groups) {
        const EngineResult<Scalar> res =
            run_group<Scalar>(result.params, group, true, scale, &grad);
        batch_loss += res.loss * scale;
        for (int bi = 0; bi < 3; ++bi)
          update_running<Scalar>(result.params.running_mean[bi],
                                 result.params.running_var[bi],
                                 res.bn_stats[bi], Scalar(0.1));
      }

      ++step;
      const Scalar corr1 = Scalar(1) - std::pow(beta1, Scalar(step));
      const Scalar corr2 = Scalar(1) - std::pow(beta2, Scalar(step));
      m = beta1 * m + (Scalar(1) - beta1) * grad;
      v.array() = beta2 * v.array() +
                  (Scalar(1) - beta2) * grad.array().square();
      result.params.flat.array() -=
          static_cast<Scalar>(config.learning_rate) * (m.array() / corr1) /
          ((v.array() / corr2).sqrt() + eps);

      epoch_loss += batch_loss * static_cast<double>(batch_steps);
      epoch_steps += batch_steps;
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(epoch_steps));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Explicit instantiations
// ---------------------------------------------------------------------------

#define ECG_INSTANTIATE(S)                                                    \
  template struct ModelParams<S>;                                             \
  template ModelParams<float> ModelParams<S>::cast<float>() const;           \
  template ModelParams<double> ModelParams<S>::cast<double>() const;         \
  template ModelParams<S> init_params<S>(const Arch&, std::uint64_t);        \
  template MatrixX<S> conv1d_forward<S>(const MatrixX<S>&, const MatrixX<S>&, \
                                        const VectorX<S>&, int);             \
  template MatrixX<S> relu<S>(const MatrixX<S>&);                            \
  template void batchnorm1d_forward<S>(std::vector<MatrixX<S>>&,             \
                                       const VectorX<S>&, const VectorX<S>&, \
                                       ArrayX<S>&, ArrayX<S>&, BatchNormMode, \
                                       S, S);                                 \
  template LstmGates<S> lstm_gates<S>(const ModelParams<S>&,                 \
                                      const std::string&);                   \
  template std::pair<VectorX<S>, VectorX<S>> lstm_cell<S>(                   \
      const VectorX<S>&, const VectorX<S>&, const VectorX<S>&,               \
      const LstmGates<S>&);                                                   \
  template MatrixX<S> bilstm_forward<S>(const MatrixX<S>&,                   \
                                        const LstmGates<S>&,                 \
                                        const LstmGates<S>&);                \
  template MatrixX<S> forward_sequence<S>(const ModelParams<S>&,             \
                                          const MatrixX<S>&, BatchNormMode); \
  template MatrixX<S> model_forward<S>(const ModelParams<S>&,                \
                                       const SampledSignal&, BatchNormMode); \
  template std::vector<std::uint8_t> predict_binary<S>(                      \
      const ModelParams<S>&, const SampledSignal&);                          \
  template LossGrad<S> loss_and_grad<S>(const ModelParams<S>&,               \
                                        const std::vector<Example<S>>&);     \
  template double eval_loss<S>(const ModelParams<S>&,                        \
                               const std::vector<Example<S>>&);              \
  template TrainResult<S> train<S>(const TrainConfig&, const Arch&,          \
                                   const std::vector<Example<S>>&);          \
  template MatrixX<S> detail::bilstm_forward_batched<S>(                     \
      const ModelParams<S>&, const MatrixX<S>&, Eigen::Index)

ECG_INSTANTIATE(float);
ECG_INSTANTIATE(double);

#undef ECG_INSTANTIATE

}  // namespace ecg
