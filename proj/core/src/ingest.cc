/*
 * Copyright 2026 The instapop Authors.
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

#include "instapop/ingest.h"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "instapop/error.h"
#include "json.hpp"

namespace instapop {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv_word(std::uint64_t h, std::uint64_t word) {
  for (int i = 0; i < 8; ++i) {
    h ^= (word >> (8 * i)) & 0xFFu;
    h *= kFnvPrime;
  }
  return h;
}

void append_number(std::string& out, double v, ColumnKind kind) {
  char buf[32];
  std::to_chars_result r;
  if (kind == ColumnKind::kContinuous) {
    r = std::to_chars(buf, buf + sizeof(buf), v);
  } else {
    r = std::to_chars(buf, buf + sizeof(buf), static_cast<long long>(v));
  }
  out.append(buf, r.ptr);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open '" + path.string() + "'", 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

void validate_values(const FeatureSchema& schema, std::span<const double> values,
                     std::uint64_t row_number) {
  if (values.size() != schema.size()) {
    throw IngestError("expected " + std::to_string(schema.size()) +
                          " values, got " + std::to_string(values.size()),
                      row_number);
  }
  for (std::size_t j = 0; j < values.size(); ++j) {
    const ColumnSpec& c = schema.column(j);
    const double v = values[j];
    if (!std::isfinite(v)) {
      throw IngestError("non-finite value in column '" + c.name + "'",
                        row_number);
    }
    if (c.kind == ColumnKind::kContinuous) continue;
    if (v != std::trunc(v)) {
      throw IngestError("non-integral value in " +
                            std::string(to_string(c.kind)) + " column '" +
                            c.name + "'",
                        row_number);
    }
    if (c.kind == ColumnKind::kCategorical &&
        (v < 0 || v >= static_cast<double>(*c.cardinality))) {
      throw IngestError("categorical code " +
                            std::to_string(static_cast<long long>(v)) +
                            " out of range [0, " +
                            std::to_string(*c.cardinality - 1) +
                            "] in column '" + c.name + "'",
                        row_number);
    }
    if (c.group == GroupCode::kY && v < 0) {
      throw IngestError("negative object count in column '" + c.name + "'",
                        row_number);
    }
  }
}

void Dataset::reserve(std::size_t rows) {
  likes_.reserve(rows);
  values_.reserve(rows * n_cols());
}

void Dataset::append(const PostRecord& record) {
  append(record.likes, record.values);
}

void Dataset::append(std::uint64_t likes, std::span<const double> values) {
  validate_values(schema_, values, n_rows() + 1);
  likes_.push_back(likes);
  values_.insert(values_.end(), values.begin(), values.end());
}

PostRecord Dataset::record(std::size_t i) const {
  const auto r = row(i);
  return {likes_[i], std::vector<double>(r.begin(), r.end())};
}

std::uint64_t Dataset::checksum() const {
  std::uint64_t h = fnv_word(kFnvOffset, schema_.hash());
  for (std::uint64_t l : likes_) h = fnv_word(h, l);
  for (double v : values_) h = fnv_word(h, std::bit_cast<std::uint64_t>(v));
  return h;
}

void SynthConfig::validate() const {
  if (n_rows == 0) throw InvalidArgument("n_rows must be >= 1");
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) {
    throw InvalidArgument("noise_sd must be a finite value >= 0");
  }
  for (const auto& g : kFeatureGroups) {
    const double w = signal(g.code);
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw InvalidArgument(std::string("signal weight for group ") +
                            g.letter + " must be a finite value >= 0");
    }
  }
}

std::string SynthConfig::to_json() const {
  nlohmann::ordered_json doc;
  doc["n_rows"] = n_rows;
  doc["seed"] = seed;
  nlohmann::ordered_json signal_doc = nlohmann::ordered_json::object();
  for (const auto& g : kFeatureGroups) {
    signal_doc[std::string(1, g.letter)] = signal(g.code);
  }
  doc["group_signal"] = std::move(signal_doc);
  doc["noise_sd"] = noise_sd;
  doc["rng"] = "splitmix64-counter";
  return doc.dump();
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  std::filesystem::path p = csv_path;
  p.replace_extension(".json");
  return p;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& csv_path,
                   const std::optional<SynthConfig>& generator) {
  const FeatureSchema& schema = ds.schema();
  {
    std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + csv_path.string() + "'");
    std::string line = schema.target_name();
    for (const auto& c : schema.columns()) {
      line.push_back(',');
      line += c.name;
    }
    line.push_back('\n');
    out << line;
    for (std::size_t i = 0; i < ds.n_rows(); ++i) {
      line.clear();
      line += std::to_string(ds.likes(i));
      const auto row = ds.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) {
        line.push_back(',');
        append_number(line, row[j], schema.column(j).kind);
      }
      line.push_back('\n');
      out << line;
    }
    if (!out) throw IoError("write failed for '" + csv_path.string() + "'");
  }

  nlohmann::ordered_json doc;
  doc["schema_version"] = FeatureSchema::kVersion;
  doc["schema_hash"] = hash_to_hex(schema.hash());
  doc["n_rows"] = ds.n_rows();
  doc["schema"] = nlohmann::ordered_json::parse(schema.to_json());
  if (generator) {
    doc["generator"] = nlohmann::ordered_json::parse(generator->to_json());
  }
  std::ofstream side(sidecar_path(csv_path), std::ios::trunc);
  if (!side) {
    throw IoError("cannot write '" + sidecar_path(csv_path).string() + "'");
  }
  side << doc.dump(2) << '\n';
  if (!side) throw IoError("write failed for sidecar");
}

FeatureSchema read_sidecar_schema(const std::filesystem::path& csv_path) {
  const std::string side_text = read_file(sidecar_path(csv_path));
  try {
    const auto side = nlohmann::json::parse(side_text);
    return FeatureSchema::from_json(side.at("schema").dump());
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(std::string("malformed sidecar: ") + e.what(), 0);
  } catch (const IngestError&) {
    throw;
  } catch (const Error& e) {
    throw IngestError(std::string("malformed sidecar schema: ") + e.what(), 0);
  }
}

Dataset read_dataset(const std::filesystem::path& csv_path,
                     const FeatureSchema& schema) {
  const std::string side_text = read_file(sidecar_path(csv_path));
  nlohmann::json side;
  std::uint64_t declared_rows = 0;
  try {
    side = nlohmann::json::parse(side_text);
    if (side.at("schema_version").get<int>() != FeatureSchema::kVersion) {
      throw IngestError("unsupported schema_version in sidecar", 0);
    }
    const std::uint64_t declared =
        hash_from_hex(side.at("schema_hash").get<std::string>());
    if (declared != schema.hash()) {
      throw IngestError("schema-hash mismatch: file declares " +
                            hash_to_hex(declared) + ", expected " +
                            hash_to_hex(schema.hash()),
                        0);
    }
    declared_rows = side.at("n_rows").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(std::string("malformed sidecar: ") + e.what(), 0);
  } catch (const SchemaMismatch& e) {
    throw IngestError(e.what(), 0);
  }

  const std::string text = read_file(csv_path);
  std::string_view rest(text);
  const auto next_line = [&rest]() -> std::string_view {
    const std::size_t nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view() : rest.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
  };

  const std::string_view header_line = next_line();
  const auto header = split_line(header_line);
  if (header.empty() || header[0] != schema.target_name()) {
    throw IngestError("header must start with target column '" +
                          schema.target_name() + "'",
                      0);
  }
  // source field index for each schema column
  std::vector<std::size_t> field_of(schema.size(), SIZE_MAX);
  for (std::size_t f = 1; f < header.size(); ++f) {
    const auto idx = schema.find(header[f]);
    if (!idx) {
      throw IngestError("unknown column '" + std::string(header[f]) + "'", 0);
    }
    if (field_of[*idx] != SIZE_MAX) {
      throw IngestError("duplicate column '" + std::string(header[f]) + "'", 0);
    }
    field_of[*idx] = f;
  }
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (field_of[j] == SIZE_MAX) {
      throw IngestError("missing column '" + schema.column(j).name + "'", 0);
    }
  }

  Dataset ds(schema);
  ds.reserve(declared_rows);
  std::vector<double> values(schema.size());
  std::vector<std::string_view> fields;
  std::uint64_t row_number = 0;
  while (!rest.empty()) {
    const std::string_view line = next_line();
    if (line.empty()) continue;
    ++row_number;
    fields = split_line(line);
    if (fields.size() != header.size()) {
      throw IngestError("expected " + std::to_string(header.size()) +
                            " fields, got " + std::to_string(fields.size()),
                        row_number);
    }
    std::uint64_t likes = 0;
    {
      const auto f = fields[0];
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), likes);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw IngestError("likes must be a non-negative integer", row_number);
      }
    }
    for (std::size_t j = 0; j < schema.size(); ++j) {
      const auto f = fields[field_of[j]];
      double v = 0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw IngestError("unparseable value '" + std::string(f) +
                              "' in column '" + schema.column(j).name + "'",
                          row_number);
      }
      values[j] = v;
    }
    ds.append(likes, values);
  }
  if (row_number != declared_rows) {
    throw IngestError("sidecar declares " + std::to_string(declared_rows) +
                          " rows, file has " + std::to_string(row_number),
                      0);
  }
  return ds;
}

}  // namespace instapop
