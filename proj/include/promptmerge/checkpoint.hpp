#pragma once

// Checkpoint directory: manifest.json (tensor table + metadata) and
// tensors.bin (little-endian float64, concatenated in manifest order).

#include "promptmerge/model.hpp"

#include <filesystem>
#include <optional>
#include <set>

namespace pm {

enum class Stage { LtR, Lmpm, FineTune };

std::string to_string(Stage stage);
Stage stage_from_string(const std::string& s);

struct CheckpointMeta {
    Stage stage = Stage::LtR;
    int step = 0;
    std::string plan_hash;
    std::string rng_state;
    Arm arm = Arm::Baseline;
    ModelConfig model;
    nlohmann::json extra = nlohmann::json::object();
};

struct TensorEntry {
    std::string name;
    Index rows = 0;
    Index cols = 0;
    std::uint64_t offset = 0; // bytes into tensors.bin
    std::string provenance;   // stage that produced the tensor
    bool trainable = true;
};

struct Checkpoint {
    CheckpointMeta meta;
    std::unique_ptr<ParameterStore> tensors;
    // name -> stage that produced it
    std::map<std::string, std::string> provenance;

    Model to_model() &&;
};

Checkpoint make_checkpoint(Model model, const CheckpointMeta& meta,
                           const std::map<std::string, std::string>& provenance = {});

Checkpoint clone(const Checkpoint& ckpt);

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
std::vector<TensorEntry> read_manifest(const std::filesystem::path& dir, CheckpointMeta* meta = nullptr);
// Loads everything, or only the named tensors when `names` is given.
Checkpoint load_checkpoint(const std::filesystem::path& dir,
                           const std::optional<std::set<std::string>>& names = std::nullopt);

// Carries every LtR tensor into a prompt-conditioned model. Cross-attention
// and its norm at each prompt site are the only new tensors; they are drawn
// from `seed`. StageError unless the source is an LtR checkpoint.
Checkpoint migrate_to_lmpm(const Checkpoint& ltr, const std::vector<int>& vilma_stages, std::uint64_t seed);

} // namespace pm
