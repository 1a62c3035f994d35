#pragma once

#include "json.hpp"

#include "sgan/adam.hpp"
#include "sgan/stego.hpp"
#include "sgan/training.hpp"

// JSON views of the configuration structs. Readers start from the defaults, override the
// keys that are present and reject unknown keys.
namespace sgan::config {

nlohmann::json to_json(const AdamConfig& c);
AdamConfig adam_from_json(const nlohmann::json& j, AdamConfig base = {});

nlohmann::json to_json(const stego::EmbedConfig& c);
stego::EmbedConfig embed_from_json(const nlohmann::json& j, stego::EmbedConfig base = {});

nlohmann::json to_json(const training::SganConfig& c);
training::SganConfig sgan_from_json(const nlohmann::json& j, training::SganConfig base = {});

/// Throws std::invalid_argument naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* where);

}  // namespace sgan::config
