#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "sketchlab/discriminator.hpp"
#include "sketchlab/errors.hpp"
#include "sketchlab/generator.hpp"
#include "sketchlab/hash.hpp"
#include "sketchlab/params.hpp"

namespace sketchlab {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr char kBlobMagic[4] = {'S', 'K', 'L', 'B'};

/// Sidecar metadata stored next to a parameter blob as `<blob>.json`.
struct CheckpointMeta {
  GeneratorSpec generator;
  DiscriminatorSpec discriminator;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  std::string dataset_hash;
  int image_size = 0;
  int format_version = kCheckpointFormatVersion;
};

inline void to_json(nlohmann::json& j, const GeneratorSpec& s) {
  j = {{"base_channels", s.base_channels},   {"n_downsample", s.n_downsample},
       {"n_resblocks", s.n_resblocks},       {"norm_free_prefix", s.norm_free_prefix},
       {"input_channels", s.input_channels}, {"output_channels", s.output_channels}};
}

inline void from_json(const nlohmann::json& j, GeneratorSpec& s) {
  j.at("base_channels").get_to(s.base_channels);
  j.at("n_downsample").get_to(s.n_downsample);
  j.at("n_resblocks").get_to(s.n_resblocks);
  j.at("norm_free_prefix").get_to(s.norm_free_prefix);
  j.at("input_channels").get_to(s.input_channels);
  j.at("output_channels").get_to(s.output_channels);
}

inline void to_json(nlohmann::json& j, const DiscriminatorSpec& s) {
  j = {{"input_channels", s.input_channels},
       {"base_channels", s.base_channels},
       {"n_layers", s.n_layers},
       {"n_scales", s.n_scales}};
}

inline void from_json(const nlohmann::json& j, DiscriminatorSpec& s) {
  j.at("input_channels").get_to(s.input_channels);
  j.at("base_channels").get_to(s.base_channels);
  j.at("n_layers").get_to(s.n_layers);
  j.at("n_scales").get_to(s.n_scales);
}

inline void to_json(nlohmann::json& j, const CheckpointMeta& m) {
  j = {{"format_version", m.format_version},
       {"generator", m.generator},
       {"discriminator", m.discriminator},
       {"seed", m.seed},
       {"step", m.step},
       {"dataset_hash", m.dataset_hash},
       {"image_size", m.image_size}};
}

inline void from_json(const nlohmann::json& j, CheckpointMeta& m) {
  j.at("format_version").get_to(m.format_version);
  j.at("generator").get_to(m.generator);
  if (j.contains("discriminator")) j.at("discriminator").get_to(m.discriminator);
  j.at("seed").get_to(m.seed);
  j.at("step").get_to(m.step);
  j.at("dataset_hash").get_to(m.dataset_hash);
  j.at("image_size").get_to(m.image_size);
}

/// Named float32 arrays read back from a blob.
struct ParamRecord {
  std::vector<int> dims;
  std::vector<float> values;
};
using ParamBlob = std::map<std::string, ParamRecord>;

namespace detail {

template <typename V>
void write_pod(std::ostream& os, const V& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::istream& is) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw ValidationError("truncated parameter blob");
  return v;
}

}  // namespace detail

/// Binary layout (little-endian): magic "SKLB", u32 version, u32 count, then
/// per parameter: u32 name length, name bytes, u32 rank, i32 dims[rank],
/// u64 element count, float32 values.
template <typename T>
void write_param_blob(const std::filesystem::path& path, const ParamRefs<T>& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(kBlobMagic, 4);
  detail::write_pod(os, static_cast<std::uint32_t>(kCheckpointFormatVersion));
  detail::write_pod(os, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    detail::write_pod(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    detail::write_pod(os, static_cast<std::uint32_t>(p->dims.size()));
    for (int d : p->dims) detail::write_pod(os, static_cast<std::int32_t>(d));
    detail::write_pod(os, static_cast<std::uint64_t>(p->value.size()));
    for (T v : p->value) detail::write_pod(os, static_cast<float>(v));
  }
  if (!os) throw IoError("failed writing " + path.string());
}

inline ParamBlob read_param_blob(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kBlobMagic, 4) != 0) {
    throw ValidationError(path.string() + " is not a parameter blob");
  }
  const auto version = detail::read_pod<std::uint32_t>(is);
  if (version != static_cast<std::uint32_t>(kCheckpointFormatVersion)) {
    throw ValidationError("unsupported blob version " + std::to_string(version));
  }
  const auto count = detail::read_pod<std::uint32_t>(is);
  ParamBlob blob;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::read_pod<std::uint32_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    ParamRecord rec;
    const auto rank = detail::read_pod<std::uint32_t>(is);
    for (std::uint32_t r = 0; r < rank; ++r) rec.dims.push_back(detail::read_pod<std::int32_t>(is));
    const auto n = detail::read_pod<std::uint64_t>(is);
    rec.values.resize(n);
    is.read(reinterpret_cast<char*>(rec.values.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!is) throw ValidationError("truncated parameter blob " + path.string());
    blob.emplace(std::move(name), std::move(rec));
  }
  return blob;
}

/// Copies every parameter in `params` from `blob`; a missing name or a shape
/// mismatch is an error.
template <typename T>
void load_params(const ParamBlob& blob, const ParamRefs<T>& params) {
  for (auto* p : params) {
    auto it = blob.find(p->name);
    if (it == blob.end()) throw ValidationError("parameter " + p->name + " missing from blob");
    if (it->second.dims != p->dims) {
      throw ShapeError("parameter " + p->name + " has mismatched dimensions");
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = static_cast<T>(it->second.values[i]);
  }
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& blob) {
  return std::filesystem::path(blob.string() + ".json");
}

inline void write_meta(const std::filesystem::path& blob, const CheckpointMeta& meta) {
  std::ofstream os(sidecar_path(blob), std::ios::trunc);
  if (!os) throw IoError("cannot write " + sidecar_path(blob).string());
  os << nlohmann::json(meta).dump(2) << "\n";
}

inline CheckpointMeta read_meta(const std::filesystem::path& blob) {
  std::ifstream is(sidecar_path(blob));
  if (!is) throw IoError("cannot read " + sidecar_path(blob).string());
  try {
    auto meta = nlohmann::json::parse(is).get<CheckpointMeta>();
    if (meta.format_version != kCheckpointFormatVersion) {
      throw ValidationError("unsupported checkpoint format_version " +
                            std::to_string(meta.format_version));
    }
    return meta;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed checkpoint metadata: " + std::string(e.what()));
  }
}

/// Writes generator (and optionally discriminator) parameters plus sidecar.
inline void save_checkpoint(const std::filesystem::path& blob, Generator<float>& g,
                            MultiScaleDiscriminator<float>* d, CheckpointMeta meta) {
  meta.generator = g.spec();
  meta.seed = g.seed();
  if (d) meta.discriminator = d->spec();
  ParamRefs<float> params = g.params();
  if (d) {
    auto dp = d->params();
    params.insert(params.end(), dp.begin(), dp.end());
  }
  write_param_blob(blob, params);
  write_meta(blob, meta);
}

struct LoadedGenerator {
  CheckpointMeta meta;
  Generator<float> generator;
};

inline LoadedGenerator load_generator(const std::filesystem::path& blob) {
  CheckpointMeta meta = read_meta(blob);
  Generator<float> g(meta.generator, meta.seed);
  load_params(read_param_blob(blob), g.params());
  return {std::move(meta), std::move(g)};
}

inline MultiScaleDiscriminator<float> load_discriminator(const std::filesystem::path& blob,
                                                         const CheckpointMeta& meta) {
  MultiScaleDiscriminator<float> d(meta.discriminator, meta.seed + 1);
  load_params(read_param_blob(blob), d.params());
  return d;
}

}  // namespace sketchlab
