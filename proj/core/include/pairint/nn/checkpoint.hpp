#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>

#include "pairint/nn/layers.hpp"

namespace pairint::nn {

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Named float tensors. Learnable entries are stored under "param.<name>",
/// everything else (running statistics, standardization, metadata) under "buffer.<name>".
struct ParamStore {
  std::map<std::string, Tensor<float>> entries;

  bool contains(const std::string& name) const { return entries.count(name) != 0; }
  const Tensor<float>& at(const std::string& name) const;
  void put(const std::string& name, Tensor<float> t);

  /// Scalar metadata stored as a one-element buffer.
  void set_scalar(const std::string& name, double v);
  double scalar(const std::string& name) const;

  friend bool operator==(const ParamStore&, const ParamStore&) = default;
};

std::string encode_checkpoint(const ParamStore& store);
ParamStore decode_checkpoint(std::span<const char> bytes);
void save_checkpoint(const ParamStore& store, const std::filesystem::path& path);
ParamStore load_checkpoint(const std::filesystem::path& path);

template <class T>
void export_tensors(std::span<const ParamRef<T>> params, std::span<const BufferRef<T>> buffers, ParamStore& store) {
  for (const auto& p : params) store.put("param." + p.name, p.value->template cast<float>());
  for (const auto& b : buffers) store.put("buffer." + b.name, b.value->template cast<float>());
}

/// Copies every referenced tensor from the store; missing names or changed
/// shapes are ShapeMismatch errors.
template <class T>
void import_tensors(const ParamStore& store, std::span<const ParamRef<T>> params,
                    std::span<const BufferRef<T>> buffers) {
  auto load = [&](const std::string& key, Tensor<T>& dst) {
    auto it = store.entries.find(key);
    if (it == store.entries.end()) throw Error(ErrorCode::ShapeMismatch, "checkpoint has no entry '" + key + "'");
    if (it->second.shape != dst.shape) {
      throw Error(ErrorCode::ShapeMismatch, "checkpoint entry '" + key + "' has shape " +
                                                shape_string(it->second.shape) + ", model expects " +
                                                shape_string(dst.shape));
    }
    dst = it->second.template cast<T>();
  };
  for (const auto& p : params) load("param." + p.name, *p.value);
  for (const auto& b : buffers) load("buffer." + b.name, *b.value);
}

}  // namespace pairint::nn
