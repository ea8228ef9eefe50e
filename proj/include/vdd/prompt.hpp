#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vdd/tensor.hpp"

namespace vdd {

inline constexpr int kPromptTokens = 8;  // fixed length, padded/truncated
inline constexpr int kPromptDim = 32;

// FNV-1a over the token's UTF-8 bytes; seeds the token's embedding row.
uint64_t hash_token(const std::string& token);

// Lowercase whitespace tokenization.
std::vector<std::string> tokenize_prompt(const std::string& text);

// Deterministic CLIP stand-in: each token's row is a unit-normalized 32-dim
// vector drawn from the counter-based stream seeded by hash_token; unused
// rows are the all-zero null token. The empty prompt is all null rows.
TensorPtr embed_prompt(const std::string& text);

TensorPtr null_text_embedding();

}  // namespace vdd
