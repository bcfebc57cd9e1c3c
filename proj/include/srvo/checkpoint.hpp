#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srvo/binio.hpp"
#include "srvo/params.hpp"

namespace srvo {

// Checkpoint layout: magic "SRVO", u32 version, then self-describing records
// (u32 name length, UTF-8 name, u32 rank, u64 dims, little-endian float64
// payload). Optimizer state follows under "__adam__." reserved names, the
// resolved config under "__meta__.", and a trailing FNV-1a hash of everything
// before it. Roundtrips are bit-exact.
inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_record(std::string& out, const std::string& name, const Tensor& t) {
  binio::put_u32(out, static_cast<uint32_t>(name.size()));
  out.append(name);
  binio::put_u32(out, static_cast<uint32_t>(t.shape.size()));
  for (int64_t d : t.shape) binio::put_u64(out, static_cast<uint64_t>(d));
  binio::put_bytes(out, t.data.data(), t.data.size() * 8);
}

inline std::pair<std::string, Tensor> get_record(binio::Reader& r) {
  const uint32_t name_len = r.u32();
  std::string name = r.bytes(name_len);
  const uint32_t rank = r.u32();
  std::vector<int64_t> shape(rank);
  for (auto& d : shape) d = static_cast<int64_t>(r.u64());
  Tensor t(shape);
  r.f64_into(t.data.data(), t.data.size());
  return {std::move(name), std::move(t)};
}

inline Tensor string_to_tensor(const std::string& s) {
  Tensor t({static_cast<int64_t>(s.size())});
  for (size_t i = 0; i < s.size(); ++i) t.data[i] = static_cast<double>(static_cast<unsigned char>(s[i]));
  return t;
}

inline std::string tensor_to_string(const Tensor& t) {
  std::string s;
  s.reserve(t.data.size());
  for (double v : t.data) s.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  return s;
}

}  // namespace detail

struct Checkpoint {
  ParamStore params;
  AdamState adam;
  std::string config_json;
};

inline std::string serialize_checkpoint(const ParamStore& params, const AdamState& adam,
                                        const std::string& config_json) {
  std::string out;
  out.append("SRVO");
  binio::put_u32(out, kCheckpointVersion);
  std::string body;
  binio::put_u64(body, params.all().size());
  for (const auto& [name, t] : params.all()) detail::put_record(body, name, t);
  uint64_t n_adam = adam.m.size() + adam.v.size() + 1;
  binio::put_u64(body, n_adam);
  for (const auto& [name, t] : adam.m) detail::put_record(body, "__adam__.m." + name, t);
  for (const auto& [name, t] : adam.v) detail::put_record(body, "__adam__.v." + name, t);
  detail::put_record(body, "__adam__.hyper",
                     vec({adam.cfg.lr, adam.cfg.beta1, adam.cfg.beta2, adam.cfg.eps, adam.cfg.decay,
                          static_cast<double>(adam.cfg.decay_steps), static_cast<double>(adam.t)}));
  binio::put_u64(body, 1);
  detail::put_record(body, "__meta__.config_utf8", detail::string_to_tensor(config_json));
  out.append(body);
  binio::put_u64(out, fnv1a64(out.data(), out.size()));
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16) throw StructuralError("checkpoint too short");
  const std::string payload = bytes.substr(0, bytes.size() - 8);
  binio::Reader hash_reader(bytes, bytes.size() - 8);
  if (hash_reader.u64() != fnv1a64(payload.data(), payload.size()))
    throw StructuralError("checkpoint hash mismatch");

  binio::Reader r(payload);
  if (r.bytes(4) != "SRVO") throw StructuralError("bad checkpoint magic");
  if (r.u32() != kCheckpointVersion) throw StructuralError("unsupported checkpoint version");
  Checkpoint ckpt;
  const uint64_t n_params = r.u64();
  for (uint64_t i = 0; i < n_params; ++i) {
    auto [name, t] = detail::get_record(r);
    ckpt.params.add(name, std::move(t));
  }
  const uint64_t n_adam = r.u64();
  for (uint64_t i = 0; i < n_adam; ++i) {
    auto [name, t] = detail::get_record(r);
    if (name.rfind("__adam__.m.", 0) == 0) {
      ckpt.adam.m.emplace(name.substr(11), std::move(t));
    } else if (name.rfind("__adam__.v.", 0) == 0) {
      ckpt.adam.v.emplace(name.substr(11), std::move(t));
    } else if (name == "__adam__.hyper") {
      ckpt.adam.cfg.lr = t.data[0];
      ckpt.adam.cfg.beta1 = t.data[1];
      ckpt.adam.cfg.beta2 = t.data[2];
      ckpt.adam.cfg.eps = t.data[3];
      ckpt.adam.cfg.decay = t.data[4];
      ckpt.adam.cfg.decay_steps = static_cast<int64_t>(t.data[5]);
      ckpt.adam.t = static_cast<int64_t>(t.data[6]);
    } else {
      throw StructuralError("unknown reserved record: " + name);
    }
  }
  const uint64_t n_meta = r.u64();
  for (uint64_t i = 0; i < n_meta; ++i) {
    auto [name, t] = detail::get_record(r);
    if (name == "__meta__.config_utf8") ckpt.config_json = detail::tensor_to_string(t);
  }
  return ckpt;
}

inline void save_checkpoint(const std::string& path, const ParamStore& params, const AdamState& adam,
                            const std::string& config_json) {
  binio::write_file(path, serialize_checkpoint(params, adam, config_json));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return deserialize_checkpoint(binio::read_file(path));
}

}  // namespace srvo
