#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "naflab/rng.hpp"

namespace naflab {

using TokenId = std::uint32_t;

// Token embedding table. Rows are unit-norm, so cosine similarity against an
// arbitrary vector reduces to a dot-product argmax.
class Vocabulary {
public:
    Vocabulary() = default;

    // Random unit-norm embeddings, one row per token.
    static Vocabulary random(std::size_t size, std::size_t embedding_dim, RandomStream& rng);

    // Takes ownership of an explicit table; rows are renormalized.
    static Vocabulary from_rows(Eigen::MatrixXd rows);

    std::size_t size() const { return static_cast<std::size_t>(embeddings_.rows()); }
    std::size_t embedding_dim() const { return static_cast<std::size_t>(embeddings_.cols()); }

    const Eigen::MatrixXd& embeddings() const { return embeddings_; }
    Eigen::VectorXd embedding(TokenId id) const;

private:
    Eigen::MatrixXd embeddings_;  // |V| x d_e
};

// Discrete prompt plus its pooled context vector. The context is the
// arithmetic mean of the token embedding rows, summed in token order so it
// is bit-reproducible.
struct Prompt {
    std::vector<TokenId> tokens;
    Eigen::VectorXd context;

    static Prompt from_tokens(const Vocabulary& vocab, std::vector<TokenId> tokens);
    static Prompt random(const Vocabulary& vocab, std::size_t n_tokens, RandomStream& rng);
};

// Recompute the context from the tokens; equals Prompt::context bit-exactly.
Eigen::VectorXd pooled_context(const Vocabulary& vocab, const std::vector<TokenId>& tokens);

}  // namespace naflab
