#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mrp/evaluation.hpp"
#include "mrp/toy.hpp"
#include "mrp/training.hpp"

namespace mrp {

// Every format is line oriented: a "<tag> v1" header, an optional
// "config <json>" echo line, then records. Numbers use 17 significant digits
// so parse(serialize(x)) == x bit for bit. Malformed input throws IoError.

std::string format_double(double value);
double parse_double(std::string_view token);

std::string read_text(const std::filesystem::path& path);
/// Creates parent directories as needed.
void write_text(const std::filesystem::path& path, std::string_view text);

std::string serialize_scene(const SyntheticScene& scene);
SyntheticScene parse_scene(std::string_view text);

/// Scene files listed relative to the manifest's directory.
struct Manifest {
  std::string config;
  std::vector<std::string> scenes;
  bool operator==(const Manifest&) const = default;
};
std::string serialize_manifest(const Manifest& manifest);
Manifest parse_manifest(std::string_view text);

struct GroundTruthFile {
  std::string config;
  std::vector<GroundTruth> pairs;
  bool operator==(const GroundTruthFile&) const = default;
};
std::string serialize_ground_truth(const GroundTruthFile& file);
GroundTruthFile parse_ground_truth(std::string_view text);

struct EstimatesFile {
  std::string config;
  std::vector<Estimate> estimates;
  bool operator==(const EstimatesFile&) const = default;
};
std::string serialize_estimates(const EstimatesFile& file);
EstimatesFile parse_estimates(std::string_view text);

struct ReportFile {
  std::string config;
  EvalReport report;
  bool operator==(const ReportFile&) const = default;
};
std::string serialize_report(const ReportFile& file);
ReportFile parse_report(std::string_view text);

struct CurveFile {
  std::string config;
  PrecisionCurve curve;
};
bool operator==(const PrecisionCurve& a, const PrecisionCurve& b);
std::string serialize_curve(const CurveFile& file);
CurveFile parse_curve(std::string_view text);

struct HistoryFile {
  std::string config;
  std::vector<HistoryRecord> records;
  bool operator==(const HistoryFile&) const = default;
};
std::string serialize_history(const HistoryFile& file);
HistoryFile parse_history(std::string_view text);

struct Checkpoint {
  std::string config;
  long iteration = 0;
  ToyBackbone backbone;
  OptimizerState optimizer;
};
bool operator==(const Checkpoint& a, const Checkpoint& b);
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(std::string_view text);

}  // namespace mrp
