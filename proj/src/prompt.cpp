#include "vdd/prompt.hpp"

#include <cctype>
#include <cmath>

#include "vdd/rng.hpp"

namespace vdd {

uint64_t hash_token(const std::string& token) {
    return fnv1a64(token.data(), token.size());
}

std::vector<std::string> tokenize_prompt(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) tokens.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

TensorPtr embed_prompt(const std::string& text) {
    auto emb = zeros<float>({kPromptTokens, kPromptDim});
    const auto tokens = tokenize_prompt(text);
    const int n = std::min<int>(kPromptTokens, static_cast<int>(tokens.size()));
    for (int i = 0; i < n; ++i) {
        Rng rng(hash_token(tokens[static_cast<size_t>(i)]));
        double norm_sq = 0;
        float* row = emb->data.data() + static_cast<size_t>(i) * kPromptDim;
        for (int j = 0; j < kPromptDim; ++j) {
            row[j] = static_cast<float>(rng.normal());
            norm_sq += static_cast<double>(row[j]) * row[j];
        }
        const float inv = static_cast<float>(1.0 / std::sqrt(norm_sq));
        for (int j = 0; j < kPromptDim; ++j) row[j] *= inv;
    }
    return emb;
}

TensorPtr null_text_embedding() { return zeros<float>({kPromptTokens, kPromptDim}); }

}  // namespace vdd
