/*
 * Copyright 2026 The kdlite Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "kdlite/serialization.hpp"

#include <cstring>

#include "detail/binary_io.hpp"
#include "kdlite/dataset.hpp"
#include "kdlite/errors.hpp"

namespace kdlite {

std::vector<std::uint8_t> serialize_model(const Model& model) {
  detail::ByteWriter w;
  w.put_bytes("LCNN", 4);
  w.put<std::uint16_t>(kModelFormatMajor);
  w.put<std::uint16_t>(kModelFormatMinor);
  w.put<std::uint64_t>(model.seed());
  const std::string spec = to_text(model.spec());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.size()));
  w.put_bytes(spec.data(), spec.size());
  const auto params = model.parameters();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    if (p.name.size() > 0xFFFF) throw ContractError("parameter name too long: " + p.name);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(p.name.size()));
    w.put_bytes(p.name.data(), p.name.size());
    w.put<std::uint8_t>(p.trainable ? 1 : 0);
    const auto& shape = p.value.shape();
    w.put<std::uint8_t>(static_cast<std::uint8_t>(shape.size()));
    for (std::size_t d : shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.put_floats(p.value.data());
  }
  w.seal();
  return w.take();
}

Model deserialize_model(std::span<const std::uint8_t> bytes) {
  const std::string what = "LCNN";
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "LCNN", 4) != 0) {
    throw DataError("LCNN: bad magic (not a model file)");
  }
  {
    detail::ByteReader header(bytes, what);
    header.get_string(4);
    const auto major = header.get<std::uint16_t>();
    const auto minor = header.get<std::uint16_t>();
    if (major > kModelFormatMajor || major == 0) {
      throw VersionError("LCNN: file format " + std::to_string(major) + "." +
                         std::to_string(minor) + " is not readable by this version (supports " +
                         std::to_string(kModelFormatMajor) + ".x)");
    }
  }
  detail::ByteReader r(bytes.first(bytes.size() - std::min<std::size_t>(4, bytes.size())), what);
  r.get_string(4);
  r.get<std::uint16_t>();
  r.get<std::uint16_t>();
  const auto seed = r.get<std::uint64_t>();
  const auto spec_len = r.get<std::uint32_t>();
  if (spec_len > r.remaining()) throw DataError("LCNN: truncated file");
  const std::string spec_text = r.get_string(spec_len);
  const auto count = r.get<std::uint32_t>();
  std::vector<Parameter<float>> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    Parameter<float> p;
    const auto name_len = r.get<std::uint16_t>();
    p.name = r.get_string(name_len);
    p.trainable = r.get<std::uint8_t>() != 0;
    const auto rank = r.get<std::uint8_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint32_t>();
    const std::size_t n = numel(shape);
    if (n > r.remaining() / sizeof(float)) throw DataError("LCNN: truncated file");
    std::vector<float> data(n);
    r.get_floats(data);
    p.value = Tensor<float>(shape, std::move(data));
    params.push_back(std::move(p));
  }
  if (r.remaining() != 0) throw DataError("LCNN: trailing bytes after the last parameter");
  detail::verify_crc(bytes, what);

  try {
    return Model::from_parameters(parse_model_spec(spec_text), seed, std::move(params));
  } catch (const DataError&) {
    throw;
  } catch (const Error& e) {
    throw DataError(std::string("LCNN: invalid model: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const Model& model) {
  write_file_bytes(path, serialize_model(model));
}

Model load_model(const std::filesystem::path& path) {
  return deserialize_model(read_file_bytes(path));
}

}  // namespace kdlite
