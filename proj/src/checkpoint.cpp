#include "ecg/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "ecg/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace ecg {

namespace {

constexpr char kMagic[8] = {'E', 'C', 'G', 'S', 'E', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_tensor(std::ofstream& out, const std::string& name,
                  const std::vector<Eigen::Index>& dims, const double* data,
                  Eigen::Index rows) {
  write_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(out, static_cast<std::uint32_t>(dims.size()));
  Eigen::Index size = 1;
  for (const Eigen::Index d : dims) {
    write_u64(out, static_cast<std::uint64_t>(d));
    size *= d;
  }
  // In memory a tensor is a column-major (dims[0] x rest) matrix; on disk it
  // is row-major by dims, so walk rows in the outer loop.
  const Eigen::Index cols = size / rows;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double v = data[c * rows + r];
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
}

struct RawTensor {
  std::vector<Eigen::Index> dims;
  std::vector<double> data;  // row-major by dims
};

std::uint32_t read_u32(std::ifstream& in, const std::string& what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
    throw ParseError("checkpoint truncated while reading " + what);
  return v;
}

std::map<std::string, RawTensor> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path.string());

  char magic[8];
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ParseError(path.string() + ": bad checkpoint magic");
  const std::uint32_t version = read_u32(in, "version");
  if (version != kVersion)
    throw ParseError(path.string() + ": unsupported checkpoint version " +
                     std::to_string(version));

  std::map<std::string, RawTensor> tensors;
  while (true) {
    std::uint32_t name_len = 0;
    if (!in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len))) break;
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len))
      throw ParseError(path.string() + ": truncated tensor name");
    RawTensor tensor;
    const std::uint32_t rank = read_u32(in, "rank of " + name);
    if (rank == 0 || rank > 8)
      throw ParseError(path.string() + ": implausible rank for " + name);
    Eigen::Index size = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      std::uint64_t d = 0;
      if (!in.read(reinterpret_cast<char*>(&d), sizeof(d)))
        throw ParseError(path.string() + ": truncated dims of " + name);
      tensor.dims.push_back(static_cast<Eigen::Index>(d));
      size *= static_cast<Eigen::Index>(d);
    }
    if (size <= 0 || size > (1 << 28))
      throw ParseError(path.string() + ": implausible size for " + name);
    tensor.data.resize(static_cast<std::size_t>(size));
    if (!in.read(reinterpret_cast<char*>(tensor.data.data()),
                 static_cast<std::streamsize>(size * 8)))
      throw ParseError(path.string() + ": truncated data of " + name);
    tensors.emplace(std::move(name), std::move(tensor));
  }
  return tensors;
}

const RawTensor& need(const std::map<std::string, RawTensor>& tensors,
                      const std::string& name) {
  const auto it = tensors.find(name);
  if (it == tensors.end())
    throw ParseError("checkpoint is missing tensor '" + name + "'");
  return it->second;
}

}  // namespace

void save_checkpoint(const ModelParams<double>& params,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);

  for (const TensorSpec& spec : params.layout.tensors())
    write_tensor(out, spec.name, spec.dims, params.flat.data() + spec.offset,
                 spec.dims[0]);

  for (int i = 0; i < 3; ++i) {
    const std::string prefix = "bn" + std::to_string(i + 1);
    const auto n = params.running_mean[i].size();
    write_tensor(out, prefix + ".running_mean", {n},
                 params.running_mean[i].data(), n);
    write_tensor(out, prefix + ".running_var", {n},
                 params.running_var[i].data(), n);
  }
  if (!out) throw IoFailure("write failed for " + path.string());
}

ModelParams<double> load_checkpoint(const std::filesystem::path& path) {
  const auto tensors = read_all(path);

  Arch arch;
  const RawTensor& c1 = need(tensors, "conv1.weight");
  const RawTensor& c2 = need(tensors, "conv2.weight");
  const RawTensor& c3 = need(tensors, "conv3.weight");
  const RawTensor& w_i = need(tensors, "lstm_fwd.w_i");
  const RawTensor& head = need(tensors, "head.weight");
  if (c1.dims.size() != 3 || c2.dims.size() != 3 || c3.dims.size() != 3 ||
      w_i.dims.size() != 2 || head.dims.size() != 2)
    throw ParseError(path.string() + ": unexpected tensor ranks");
  arch.conv1 = static_cast<int>(c1.dims[0]);
  arch.in_channels = static_cast<int>(c1.dims[1]);
  arch.k1 = static_cast<int>(c1.dims[2]);
  arch.conv2 = static_cast<int>(c2.dims[0]);
  arch.k2 = static_cast<int>(c2.dims[2]);
  arch.conv3 = static_cast<int>(c3.dims[0]);
  arch.k3 = static_cast<int>(c3.dims[2]);
  arch.hidden = static_cast<int>(w_i.dims[0]);
  arch.classes = static_cast<int>(head.dims[0]);

  ModelParams<double> params(arch);

  Eigen::Index learnable = 0;
  for (const TensorSpec& spec : params.layout.tensors()) {
    const RawTensor& tensor = need(tensors, spec.name);
    if (tensor.dims != spec.dims)
      throw ParseError(path.string() + ": tensor '" + spec.name +
                       "' has unexpected dims");
    double* dst = params.flat.data() + spec.offset;
    const Eigen::Index rows = spec.dims[0];
    const Eigen::Index cols = spec.size / rows;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        dst[c * rows + r] =
            tensor.data[static_cast<std::size_t>(r * cols + c)];
    learnable += spec.size;
  }
  if (learnable != params.layout.total())
    throw ParseError(path.string() + ": learnable parameter count " +
                     std::to_string(learnable) + " != layout total " +
                     std::to_string(params.layout.total()));

  for (int i = 0; i < 3; ++i) {
    const std::string prefix = "bn" + std::to_string(i + 1);
    const RawTensor& mean = need(tensors, prefix + ".running_mean");
    const RawTensor& var = need(tensors, prefix + ".running_var");
    if (static_cast<Eigen::Index>(mean.data.size()) !=
            params.running_mean[i].size() ||
        static_cast<Eigen::Index>(var.data.size()) !=
            params.running_var[i].size())
      throw ParseError(path.string() + ": running stat size mismatch for " +
                       prefix);
    for (Eigen::Index j = 0; j < params.running_mean[i].size(); ++j) {
      params.running_mean[i][j] = mean.data[static_cast<std::size_t>(j)];
      params.running_var[i][j] = var.data[static_cast<std::size_t>(j)];
      if (!(params.running_var[i][j] > 0.0))
        throw ParseError(path.string() + ": non-positive running variance");
    }
  }
  return params;
}

}  // namespace ecg
