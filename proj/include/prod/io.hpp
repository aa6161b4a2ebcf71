#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "prod/errors.hpp"
#include "prod/labelkit.hpp"
#include "prod/lengthdist.hpp"
#include "prod/predictor.hpp"
#include "prod/rng.hpp"
#include "prod/surrogate.hpp"

namespace prod::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Trace records (JSONL, one object per line)
// ---------------------------------------------------------------------------

struct TraceRecord {
  std::string prompt_id;
  std::optional<linalg::Vec> phi;
  std::vector<int> lengths;
  std::map<std::string, std::string> meta;
};

inline json to_json(const TraceRecord& rec) {
  json j;
  j["prompt_id"] = rec.prompt_id;
  if (rec.phi) j["phi"] = *rec.phi;
  j["lengths"] = rec.lengths;
  if (!rec.meta.empty()) j["meta"] = rec.meta;
  return j;
}

/// Validated all-or-nothing JSONL ingestion; malformed lines are reported with
/// their line number and nothing is returned.
inline std::vector<TraceRecord> ingest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace file: " + path.string());

  std::vector<TraceRecord> records;
  std::map<std::string, int> seen;  // prompt_id -> line
  std::optional<size_t> phi_dim;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError("line " + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")");
    }
    const std::string where = "line " + std::to_string(line_no);
    if (!j.is_object()) throw IoError(where + ": record must be a JSON object");
    if (!j.contains("prompt_id") || !j["prompt_id"].is_string())
      throw IoError(where + ": missing string field 'prompt_id'");
    if (!j.contains("lengths") || !j["lengths"].is_array())
      throw IoError(where + ": missing array field 'lengths'");

    TraceRecord rec;
    rec.prompt_id = j["prompt_id"].get<std::string>();
    if (auto [it, inserted] = seen.emplace(rec.prompt_id, line_no); !inserted)
      throw IoError(where + ": duplicate prompt_id '" + rec.prompt_id + "' (first seen at line " +
                    std::to_string(it->second) + ")");

    if (j["lengths"].empty()) throw IoError(where + ": 'lengths' must be non-empty");
    for (const auto& v : j["lengths"]) {
      if (!v.is_number_integer() || v.get<long long>() < 0)
        throw IoError(where + ": lengths must be non-negative integers");
      rec.lengths.push_back(v.get<int>());
    }

    if (j.contains("phi")) {
      if (!j["phi"].is_array()) throw IoError(where + ": 'phi' must be an array of numbers");
      linalg::Vec phi;
      for (const auto& v : j["phi"]) {
        if (!v.is_number()) throw IoError(where + ": 'phi' must be an array of numbers");
        phi.push_back(v.get<double>());
      }
      if (phi_dim && *phi_dim != phi.size())
        throw IoError(where + ": phi dimension " + std::to_string(phi.size()) +
                      " differs from earlier dimension " + std::to_string(*phi_dim));
      phi_dim = phi.size();
      rec.phi = std::move(phi);
    }

    if (j.contains("meta")) {
      if (!j["meta"].is_object()) throw IoError(where + ": 'meta' must be an object of strings");
      for (const auto& [k, v] : j["meta"].items()) {
        if (!v.is_string()) throw IoError(where + ": meta values must be strings");
        rec.meta[k] = v.get<std::string>();
      }
    }
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw IoError("trace file holds no records: " + path.string());
  return records;
}

inline void write_traces(const std::vector<TraceRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace file: " + path.string());
  for (const auto& rec : records) out << to_json(rec).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Full-precision text formatting
// ---------------------------------------------------------------------------

inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path.string());
  out << content;
}

// Tidy CSV accumulator; all numeric cells use full-precision decimal text.
// An optional leading '#' comment carries run provenance (config hash, seeds).
class Csv {
 public:
  explicit Csv(std::vector<std::string> header, const std::string& comment = "") : cols_(header.size()) {
    if (!comment.empty()) body_ += "# " + comment + "\n";
    append_row(header);
  }

  void append_row(const std::vector<std::string>& cells) {
    if (cells.size() != cols_) throw ArgumentError("csv row width mismatch");
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) body_ += ',';
      body_ += cells[i];
    }
    body_ += '\n';
  }

  const std::string& str() const { return body_; }
  void write(const std::filesystem::path& path) const { write_text_file(path, body_); }

 private:
  size_t cols_;
  std::string body_;
};

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

inline std::string hex64(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string hash_of(const json& j) { return hex64(rng::hash_bytes(j.dump())); }

inline std::string grid_id(const labelkit::BinGrid& grid) {
  json j;
  j["edges"] = grid.edges;
  j["open_last"] = grid.open_last;
  return hash_of(j);
}

// ---------------------------------------------------------------------------
// Surrogate trial batches
// ---------------------------------------------------------------------------

inline void write_trial_records(const std::vector<surrogate::TrialRecord>& records,
                                const std::filesystem::path& path) {
  Csv csv({"seed", "N", "r", "lambda", "probe_idx", "err", "bound", "violated"});
  for (const auto& rec : records)
    for (size_t p = 0; p < rec.probes.size(); ++p)
      csv.append_row({std::to_string(rec.seed), std::to_string(rec.n), std::to_string(rec.r),
                      format_double(rec.lambda), std::to_string(p), format_double(rec.probes[p].err),
                      format_double(rec.probes[p].bound), rec.probes[p].violated ? "1" : "0"});
  csv.write(path);
}

// ---------------------------------------------------------------------------
// Grid and label serialization
// ---------------------------------------------------------------------------

inline json to_json(const labelkit::BinGrid& grid) {
  json j;
  j["edges"] = grid.edges;
  j["open_last"] = grid.open_last;
  j["grid_id"] = grid_id(grid);
  return j;
}

inline labelkit::BinGrid grid_from_json(const json& j) {
  labelkit::BinGrid grid;
  grid.edges = j.at("edges").get<std::vector<double>>();
  grid.open_last = j.at("open_last").get<bool>();
  grid.check();
  return grid;
}

inline void write_labels(const std::vector<labelkit::MedianLabel>& medians,
                         const std::vector<labelkit::DistLabel>& hists, const labelkit::BinGrid& grid,
                         const std::filesystem::path& path) {
  if (medians.size() != hists.size()) throw ArgumentError("label lists must align");
  const std::string gid = grid_id(grid);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write label file: " + path.string());
  for (size_t i = 0; i < medians.size(); ++i) {
    json j;
    j["prompt_id"] = medians[i].prompt_id;
    j["median"] = medians[i].median_length;
    j["hist"] = hists[i].hist;
    j["grid_id"] = gid;
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Predictor parameter archive: JSON header plus flat text tensors
// ---------------------------------------------------------------------------

inline void write_params(const predictor::PredictorParams& p, const labelkit::BinGrid& grid,
                         const std::string& train_mode, const std::string& config_hash,
                         const std::filesystem::path& path) {
  json j;
  j["schema_version"] = 1;
  j["kind"] = "predictor-params";
  j["d"] = p.d;
  j["hidden"] = p.hidden;
  j["k"] = p.k;
  j["grid"] = to_json(grid);
  j["train_mode"] = train_mode;
  j["config_hash"] = config_hash;
  j["tensors"]["w1"] = p.w1;
  j["tensors"]["b1"] = p.b1;
  j["tensors"]["w2"] = p.w2;
  j["tensors"]["b2"] = p.b2;
  write_text_file(path, j.dump(2) + "\n");
}

struct LoadedParams {
  predictor::PredictorParams params;
  labelkit::BinGrid grid;
  std::string train_mode;
  std::string config_hash;
};

inline LoadedParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open params file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("invalid params file " + path.string() + ": " + e.what());
  }
  if (j.value("kind", "") != "predictor-params") throw IoError("not a predictor-params archive: " + path.string());

  LoadedParams loaded;
  loaded.params.d = j.at("d").get<int>();
  loaded.params.hidden = j.at("hidden").get<int>();
  loaded.params.k = j.at("k").get<int>();
  loaded.params.w1 = j.at("tensors").at("w1").get<linalg::Vec>();
  loaded.params.b1 = j.at("tensors").at("b1").get<linalg::Vec>();
  loaded.params.w2 = j.at("tensors").at("w2").get<linalg::Vec>();
  loaded.params.b2 = j.at("tensors").at("b2").get<linalg::Vec>();
  loaded.grid = grid_from_json(j.at("grid"));
  loaded.train_mode = j.value("train_mode", "");
  loaded.config_hash = j.value("config_hash", "");

  const auto& p = loaded.params;
  if (p.w1.size() != static_cast<size_t>(p.hidden) * p.d || p.b1.size() != static_cast<size_t>(p.hidden) ||
      p.w2.size() != static_cast<size_t>(p.k) * p.hidden || p.b2.size() != static_cast<size_t>(p.k) ||
      loaded.grid.bins() != p.k)
    throw IoError("tensor shapes are inconsistent in " + path.string());
  return loaded;
}

}  // namespace prod::io
