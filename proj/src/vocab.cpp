#include "naflab/vocab.hpp"

#include "naflab/errors.hpp"

namespace naflab {

Vocabulary Vocabulary::random(std::size_t size, std::size_t embedding_dim, RandomStream& rng) {
    if (size == 0 || embedding_dim == 0)
        throw InvalidSpec("vocabulary needs at least one token and one dimension");
    Eigen::MatrixXd rows(size, embedding_dim);
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        for (Eigen::Index j = 0; j < rows.cols(); ++j) rows(i, j) = rng.normal();
    }
    return from_rows(std::move(rows));
}

Vocabulary Vocabulary::from_rows(Eigen::MatrixXd rows) {
    Vocabulary v;
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        double norm = rows.row(i).norm();
        if (norm == 0.0) throw InvalidSpec("vocabulary row with zero norm");
        rows.row(i) /= norm;
    }
    v.embeddings_ = std::move(rows);
    return v;
}

Eigen::VectorXd Vocabulary::embedding(TokenId id) const {
    if (id >= size()) throw IndexOutOfRange("token id out of range");
    return embeddings_.row(id).transpose();
}

Eigen::VectorXd pooled_context(const Vocabulary& vocab, const std::vector<TokenId>& tokens) {
    if (tokens.empty()) throw InvalidSpec("prompt needs at least one token");
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(vocab.embedding_dim());
    for (TokenId id : tokens) {
        if (id >= vocab.size()) throw IndexOutOfRange("token id out of range");
        sum += vocab.embeddings().row(id).transpose();
    }
    return sum / static_cast<double>(tokens.size());
}

Prompt Prompt::from_tokens(const Vocabulary& vocab, std::vector<TokenId> tokens) {
    Prompt p;
    p.context = pooled_context(vocab, tokens);
    p.tokens = std::move(tokens);
    return p;
}

Prompt Prompt::random(const Vocabulary& vocab, std::size_t n_tokens, RandomStream& rng) {
    std::vector<TokenId> toks(n_tokens);
    for (auto& t : toks) t = static_cast<TokenId>(rng.uniform_index(vocab.size()));
    return from_tokens(vocab, std::move(toks));
}

}  // namespace naflab
