#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "sgst/model.hpp"
#include "sgst/vocabulary.hpp"

namespace sgst {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  Vocabulary vocab;
};

// Layout: "SGST", u32 version, u64 header length, JSON header (config, vocab, tensor directory
// of name/shape/offset), then little-endian float64 payloads. All integers little-endian.
std::string save_checkpoint(const ModelParams& params, const Vocabulary& vocab);
Checkpoint load_checkpoint(std::string_view bytes);

void write_checkpoint_file(const std::string& path, const ModelParams& params, const Vocabulary& vocab);
Checkpoint read_checkpoint_file(const std::string& path);

// Model configuration as JSON text, shared by checkpoints and the CLI's inspect command.
std::string model_config_json(const ModelConfig& config);

}  // namespace sgst
