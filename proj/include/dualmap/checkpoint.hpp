#pragma once

// Checkpoint directory layout:
//   config.json        flat config, token vocabulary, parameter group names
//   trace.json         per-step loss records
//   <group>.bin        "DMPARAM1", u32 count, then per tensor:
//                      u32 name length, name, u32 rows, u32 cols, f64 values

#include "dualmap/config.hpp"
#include "dualmap/model.hpp"
#include "dualmap/trainer.hpp"

#include <filesystem>
#include <stdexcept>
#include <vector>

namespace dualmap {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  TrainConfig config;
  GroundingModel model;
  std::vector<LossRecord> trace;
};

void save_checkpoint(const std::filesystem::path& dir, const TrainConfig& cfg,
                     const GroundingModel& model, const std::vector<LossRecord>& trace);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

nlohmann::json trace_to_json(const std::vector<LossRecord>& trace);

}  // namespace dualmap
