// Copyright 2026 The R2D2 Engine Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstring>
#include <fstream>

#include "r2d2/errors.h"
#include "r2d2/ext_reader.h"
#include "r2d2/jsonl.h"

namespace r2d2 {
namespace {

constexpr char kMagic[8] = {'R', '2', 'D', '2', 'E', 'N', 'C', '1'};
constexpr uint32_t kNoOffset = 0xFFFFFFFFu;

template <typename T>
void Put(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T Get(std::ifstream& in, const std::filesystem::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) Fail(ErrorCode::kTruncated, "unexpected end of " + path.string());
  return value;
}

Json EncodeTensor(const std::vector<double>& values, std::vector<size_t> shape) {
  std::vector<float> narrow(values.begin(), values.end());
  const auto* bytes = reinterpret_cast<const unsigned char*>(narrow.data());
  return {{"shape", shape},
          {"data", Base64Encode({bytes, narrow.size() * sizeof(float)})}};
}

std::vector<double> DecodeTensor(const Json& doc, const char* name,
                                 size_t expected) {
  if (!doc.contains(name)) Fail(ErrorCode::kFormat, std::string("missing tensor ") + name);
  const Json& tensor = doc.at(name);
  const std::vector<unsigned char> bytes =
      Base64Decode(tensor.at("data").get<std::string>());
  size_t declared = 1;
  for (size_t dim : tensor.at("shape").get<std::vector<size_t>>()) declared *= dim;
  if (declared != expected || bytes.size() != expected * sizeof(float)) {
    Fail(ErrorCode::kDimensionMismatch,
         std::string("tensor ") + name + " has the wrong size");
  }
  std::vector<float> narrow(expected);
  std::memcpy(narrow.data(), bytes.data(), bytes.size());
  return {narrow.begin(), narrow.end()};
}

}  // namespace

void WriteEncoderOutput(const EncoderOutput& enc, const std::filesystem::path& path) {
  enc.Validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  Put(out, static_cast<uint32_t>(enc.tokens()));
  Put(out, static_cast<uint32_t>(enc.hidden_dim));
  for (TokenKind kind : enc.kinds) Put(out, static_cast<uint8_t>(kind));
  for (const auto& span : enc.token_to_char) {
    Put(out, span ? span->begin : kNoOffset);
    Put(out, span ? span->end : kNoOffset);
  }
  out.write(reinterpret_cast<const char*>(enc.hidden.data()),
            static_cast<std::streamsize>(enc.hidden.size() * sizeof(float)));
  if (!out) Fail(ErrorCode::kIo, "short write to " + path.string());
}

EncoderOutput ReadEncoderOutput(const std::filesystem::path& path,
                                PassageId passage_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    Fail(ErrorCode::kFormat, "bad magic in " + path.string());
  }
  const auto t_count = Get<uint32_t>(in, path);
  const auto h = Get<uint32_t>(in, path);
  if (t_count == 0 || t_count > kMaxEncoderTokens || h == 0) {
    Fail(ErrorCode::kFormat, "implausible encoder header in " + path.string());
  }
  EncoderOutput enc;
  enc.passage_id = passage_id;
  enc.hidden_dim = h;
  for (uint32_t i = 0; i < t_count; ++i) {
    const auto raw = Get<uint8_t>(in, path);
    if (raw > static_cast<uint8_t>(TokenKind::kSep)) {
      Fail(ErrorCode::kFormat, "unknown token kind in " + path.string());
    }
    enc.kinds.push_back(static_cast<TokenKind>(raw));
  }
  for (uint32_t i = 0; i < t_count; ++i) {
    const auto begin = Get<uint32_t>(in, path);
    const auto end = Get<uint32_t>(in, path);
    if (begin == kNoOffset || end == kNoOffset) {
      enc.token_to_char.emplace_back(std::nullopt);
    } else {
      enc.token_to_char.emplace_back(CharSpan{begin, end});
    }
  }
  enc.hidden.resize(static_cast<size_t>(t_count) * h);
  in.read(reinterpret_cast<char*>(enc.hidden.data()),
          static_cast<std::streamsize>(enc.hidden.size() * sizeof(float)));
  if (!in) Fail(ErrorCode::kTruncated, "hidden states truncated in " + path.string());
  enc.Validate();
  return enc;
}

void WriteReaderHeads(const ReaderHeads& heads, const std::filesystem::path& path) {
  heads.Validate();
  const size_t h = heads.hidden_dim;
  const Json doc = {
      {"hidden_dim", h},
      {"w_start", EncodeTensor(heads.w_start, {h})},
      {"w_end", EncodeTensor(heads.w_end, {h})},
      {"w_joint", EncodeTensor(heads.w_joint, {h, h})},
      {"b_joint", EncodeTensor(heads.b_joint, {h})},
      {"w_passage", EncodeTensor(heads.w_passage, {h})},
  };
  WriteJsonFile(path, doc);
}

ReaderHeads ReadReaderHeads(const std::filesystem::path& path) {
  const Json doc = ReadJsonFile(path);
  ReaderHeads heads;
  try {
    heads.hidden_dim = doc.at("hidden_dim").get<size_t>();
    const size_t h = heads.hidden_dim;
    heads.w_start = DecodeTensor(doc, "w_start", h);
    heads.w_end = DecodeTensor(doc, "w_end", h);
    heads.w_joint = DecodeTensor(doc, "w_joint", h * h);
    heads.b_joint = DecodeTensor(doc, "b_joint", h);
    heads.w_passage = DecodeTensor(doc, "w_passage", h);
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  heads.Validate();
  return heads;
}

}  // namespace r2d2
