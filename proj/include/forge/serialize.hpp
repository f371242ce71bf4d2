#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "forge/predictor.hpp"
#include "forge/problems.hpp"
#include "forge/smoothing.hpp"
#include "forge/surrogate.hpp"
#include "forge/trainer.hpp"

namespace forge {

using Json = nlohmann::json;

/// Dataset file: {family, config, seed, instances:[{x, y}], split:{train, val, test}}.
Json benchmark_to_json(const Benchmark& bench, const Json& gen_config);
Benchmark benchmark_from_json(const Json& j);
Json benchmark_gen_config(const Json& j);

void save_benchmark(const std::string& path, const Benchmark& bench, const Json& gen_config);
Benchmark load_benchmark(const std::string& path);

/// Model checkpoint: {arch, theta, norm_stats}.
Json model_to_json(const PredictorModel& model);
PredictorModel model_from_json(const Json& j);
void save_model(const std::string& path, const PredictorModel& model);
PredictorModel load_model(const std::string& path);

/// Per-epoch metrics stream.
void write_metrics_csv(const std::string& path, const std::vector<EpochRow>& rows);

/// Per-run report consumed by `forge report`.
Json report_to_json(const std::string& label, const std::string& family, std::uint64_t seed,
                    const RunMetrics& metrics, const Json& config);

/// Debug dump: one JSON object per archived sample.
void dump_banks_jsonl(const std::string& path, const std::vector<int>& train_idx,
                      const std::vector<SampleBank>& banks);

/// Inspection snapshot of one surrogate.
Json gp_snapshot(int example_id, const GpSurrogate& gp, const Vec& current_prediction);

/// FNV-1a fingerprint of a canonical config dump, for reproducibility checks.
std::uint64_t config_fingerprint(const Json& config);

Json vec_to_json(const Vec& v);
Vec vec_from_json(const Json& j);

}  // namespace forge
