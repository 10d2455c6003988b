#include <cmath>

#include "htd/denoiser.hpp"
#include "htd/errors.hpp"
#include "htd/io.hpp"

namespace htd {
namespace {

constexpr char kMagic[8] = {'H', 'T', 'D', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void put_dof(std::string& buf, const DofSpec& dof, std::size_t d) {
  put_u32(buf, dof.is_per_dimension() ? 1u : 0u);
  const std::size_t n = dof.is_per_dimension() ? d : 1;
  put_u32(buf, static_cast<std::uint32_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = dof.at(i);
    put_u32(buf, v ? 1u : 0u);  // 0 marks the infinite (Gaussian) sentinel
    put_f64(buf, v ? *v : 0.0);
  }
}

DofSpec get_dof(ByteReader& r) {
  const bool per_dim = r.u32() == 1;
  const std::uint32_t n = r.u32();
  std::vector<std::optional<double>> vals;
  for (std::uint32_t i = 0; i < n; ++i) {
    const bool finite = r.u32() == 1;
    const double v = r.f64();
    vals.push_back(finite ? std::optional<double>(v) : std::nullopt);
  }
  if (per_dim) return DofSpec::per_dimension(vals);
  if (vals.size() != 1) throw ConfigError("checkpoint: malformed dof block");
  return vals[0] ? DofSpec::scalar(*vals[0]) : DofSpec::gaussian();
}

void put_vec(std::string& buf, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(buf, v[i]);
}

Vector get_vec(ByteReader& r, std::size_t n) {
  Vector v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = r.f64();
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Denoiser& net, const AdamState* state) {
  std::string buf(kMagic, 8);
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<std::uint32_t>(net.kind()));
  put_u32(buf, static_cast<std::uint32_t>(net.dim()));
  put_u32(buf, static_cast<std::uint32_t>(net.cond_dim()));
  const auto& hidden = net.net().shape().hidden;
  put_u32(buf, static_cast<std::uint32_t>(hidden.size()));
  for (int h : hidden) put_u32(buf, static_cast<std::uint32_t>(h));
  put_u32(buf, static_cast<std::uint32_t>(net.net().shape().activation));
  put_dof(buf, net.dof(), static_cast<std::size_t>(net.dim()));
  put_f64(buf, net.sigma_data());
  const Vector& p = net.net().params();
  put_u64(buf, static_cast<std::uint64_t>(p.size()));
  put_vec(buf, p);
  put_u32(buf, state ? 1u : 0u);
  if (state) {
    put_u64(buf, static_cast<std::uint64_t>(state->step));
    put_f64(buf, state->lr);
    put_f64(buf, state->beta1);
    put_f64(buf, state->beta2);
    put_f64(buf, state->eps);
    put_vec(buf, state->m.size() ? state->m : Vector::Zero(p.size()));
    put_vec(buf, state->v.size() ? state->v : Vector::Zero(p.size()));
  }
  write_file(path, buf);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  ByteReader r(read_file(path), path);
  if (r.bytes(8) != std::string(kMagic, 8)) throw ConfigError(path + ": not a checkpoint");
  if (r.u32() != kVersion) throw ConfigError(path + ": unsupported checkpoint version");
  const std::uint32_t kind = r.u32();
  if (kind > 2) throw ConfigError(path + ": unknown preconditioner kind");
  const int d = static_cast<int>(r.u32());
  const int cond_dim = static_cast<int>(r.u32());
  std::vector<int> hidden(r.u32());
  for (int& h : hidden) h = static_cast<int>(r.u32());
  if (r.u32() != static_cast<std::uint32_t>(Activation::silu))
    throw ConfigError(path + ": unknown activation");
  DofSpec dof = get_dof(r);
  const double sigma_data = r.f64();
  LoadedCheckpoint out{Denoiser(d, cond_dim, hidden, static_cast<PrecondKind>(kind), dof, sigma_data),
                       std::nullopt};
  const std::uint64_t n = r.u64();
  if (n != out.net.net().shape().num_params())
    throw ConfigError(path + ": parameter count does not match the architecture");
  out.net.net().params() = get_vec(r, n);
  if (r.u32() == 1) {
    AdamState st;
    st.step = static_cast<std::int64_t>(r.u64());
    st.lr = r.f64();
    st.beta1 = r.f64();
    st.beta2 = r.f64();
    st.eps = r.f64();
    st.m = get_vec(r, n);
    st.v = get_vec(r, n);
    out.state = std::move(st);
  }
  if (!r.at_end()) throw ConfigError(path + ": trailing bytes in checkpoint");
  return out;
}

}  // namespace htd
