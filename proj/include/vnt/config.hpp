#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "vnt/gt.hpp"
#include "vnt/pretrain.hpp"
#include "vnt/tasks.hpp"
#include "vnt/tuner.hpp"

namespace vnt {

// Structured run configuration: one file drives every command. Parsing is
// strict — unknown keys anywhere are rejected before any compute — and CLI
// flags override file values; the resolved merge is what gets snapshotted
// into each run directory.

struct VntSection {
  TuneConfig tune;
  int ensemble_size = 5;
  double noise_scale = 0.01;
};

struct GppeSection {
  int m = 48;
  int episodes = 1000;
  double lr = 1e-3;
};

struct EvalSection {
  std::string method = "vnt";
  std::string part = "test";
  int n_way = 2;
  int k_shot = 5;
  int r_query = 10;
  int tasks_per_rep = 100;
  int reps = 5;
  std::string checkpoint;   // encoder archive path
  std::string dictionary;   // prompt-dictionary archive path
  std::string module;       // evolution-module archive path
  bool ablate_unfreeze = false;  // swap vnt for the unfrozen-encoder variant
};

struct SweepSection {
  std::string axis = "M";  // one of: M | alpha | width_depth
  std::vector<int> m_values{0, 8, 16, 32, 48};
  std::vector<double> alpha_values{0.5, 1.0, 2.0};
  std::vector<int> widths{64, 128};
  std::vector<int> depths{1, 2, 4};
};

struct MakeDatasetSection {
  std::string preset = "cora-synth";
  bool binary_features = true;
};

struct ExportSection {
  std::string prompt;        // optional tuned-prompt archive
  std::string part = "test";
};

struct RunConfig {
  std::string dataset;   // dataset directory (VNT_DATA_ROOT is the fallback)
  std::string out = "runs";
  uint64_t seed = 0;
  int workers = 0;       // 0 = number of available cores
  GTConfig model;        // input_dim is resolved from the dataset at runtime
  PretrainConfig pretrain;
  VntSection vnt;
  GppeSection gppe;
  EvalSection eval;
  SweepSection sweep;
  MakeDatasetSection make_dataset;
  ExportSection export_emb;
};

// Strict JSON round trip. config_from_json rejects unknown keys with a
// config error naming the offending key.
nlohmann::json config_to_json(const RunConfig& c);
RunConfig config_from_json(const nlohmann::json& j);

// Load from file ("" gives pure defaults). io_error on unreadable file,
// config_error on malformed JSON or unknown keys.
RunConfig load_config(const std::string& path);

// Fills cfg.dataset from VNT_DATA_ROOT when the config left it empty.
void apply_env_fallback(RunConfig& cfg);

SplitPart parse_part(const std::string& name);
PromptInit parse_init(const std::string& name);
std::string init_name(PromptInit init);

// Creates out/<utc-timestamp>-<command>[-k] and returns the path; never
// reuses an existing directory (run directories are append-only).
std::string make_run_dir(const std::string& out, const std::string& command);

}  // namespace vnt
