#pragma once

#include "autopent/task_graph.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace autopent {

inline constexpr std::size_t kDefaultWordsPerChunk = 750;
inline constexpr std::size_t kDefaultTopK = 3;
inline constexpr double kDefaultRelevanceThreshold = 0.5;

struct KnowledgeChunk {
    std::string chunk_id;      // "<source>#<index>"
    std::string source_doc;
    std::size_t index = 0;
    std::string kind = "knowledge";   // or "experience"
    std::string text;
    std::vector<float> embedding;

    bool operator==(const KnowledgeChunk&) const = default;
};

struct RetrievalHit {
    KnowledgeChunk chunk;
    double similarity = 0.0;
    double rerank_score = 0.0;
};

/// Whitespace-separated words, in order.
std::vector<std::string> tokenize_words(std::string_view text);

/// Groups words sequentially; every chunk but the last holds exactly
/// `words_per_chunk` words, joined by single spaces.
std::vector<std::string> chunk_document(std::string_view text, std::size_t words_per_chunk = kDefaultWordsPerChunk);

double cosine_similarity(std::span<const float> a, std::span<const float> b);

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<float> embed(std::string_view text) = 0;
};

/// Feature-hashing embedder: each lower-cased alphanumeric term adds ±1 to a
/// seeded bucket, then the vector is L2-normalised. Order-insensitive and
/// deterministic; needs no model.
class HashEmbedder final : public Embedder {
public:
    explicit HashEmbedder(std::size_t dimension = 256, std::uint64_t seed = 0x9e3779b97f4a7c15ULL);
    std::size_t dimension() const override { return dimension_; }
    std::vector<float> embed(std::string_view text) override;

private:
    std::size_t dimension_;
    std::uint64_t seed_;
};

class Reranker {
public:
    virtual ~Reranker() = default;
    virtual double score(std::string_view query, std::string_view text) = 0;
};

/// Fraction of distinct query terms present in the candidate text.
class TermOverlapReranker final : public Reranker {
public:
    double score(std::string_view query, std::string_view text) override;
};

struct HttpModelConfig {
    std::string base_url;
    std::string model;
    std::string api_key_env = "AUTOPENT_API_KEY";
    std::string response_path;   // defaults per client when empty
};

/// POST {prefix}/embed {"model", "input": [text]}; vector at "data.0.embedding".
class HttpEmbedder final : public Embedder {
public:
    HttpEmbedder(HttpModelConfig config, std::size_t dimension);
    std::size_t dimension() const override { return dimension_; }
    std::vector<float> embed(std::string_view text) override;

private:
    HttpModelConfig config_;
    std::size_t dimension_;
};

/// POST {prefix}/rerank {"model", "query", "documents": [text]}; score at
/// "results.0.relevance_score".
class HttpReranker final : public Reranker {
public:
    explicit HttpReranker(HttpModelConfig config);
    double score(std::string_view query, std::string_view text) override;

private:
    HttpModelConfig config_;
};

/// In-memory chunk store with optional single-file persistence (JSON lines:
/// a header record followed by one record per chunk). Reads may run
/// concurrently; writes take an exclusive lock.
class VectorStore {
public:
    VectorStore() = default;
    explicit VectorStore(std::filesystem::path file);

    /// Loads the backing file if it exists. Later records with the same id win.
    void load();
    /// Rewrites the backing file atomically.
    void save() const;

    /// Inserts or replaces by chunk_id. Throws DimensionMismatch.
    void upsert(KnowledgeChunk chunk);

    std::vector<KnowledgeChunk> snapshot() const;
    std::size_t size() const;
    std::optional<std::size_t> dimension() const;
    const std::optional<std::filesystem::path>& file() const { return file_; }

private:
    std::optional<std::filesystem::path> file_;
    mutable std::shared_mutex mutex_;
    std::vector<KnowledgeChunk> chunks_;
    std::optional<std::size_t> dimension_;
};

/// Embeds each chunk text and upserts it under "<source>#<i>". Returns the
/// number of chunks stored.
std::size_t embed_and_store(VectorStore& store, const std::string& source_doc,
                            const std::vector<std::string>& chunks, Embedder& embedder,
                            const std::string& kind = "knowledge");

/// Cosine-thresholded top-k, then reranked (descending, ties by chunk_id).
/// Without a reranker the similarity order stands.
std::vector<RetrievalHit> retrieve(const VectorStore& store, Embedder& embedder, std::string_view query,
                                   std::size_t k = kDefaultTopK, double threshold = kDefaultRelevanceThreshold,
                                   Reranker* reranker = nullptr);

/// Stores a completed task as an experience chunk. Throws RejectUnsuccessful.
std::string record_successful_task(VectorStore& store, const TaskNode& task, Embedder& embedder);

/// Chunks and stores every .txt/.md file below `dir`. Returns chunks stored.
std::size_t ingest_directory(VectorStore& store, const std::filesystem::path& dir, Embedder& embedder,
                             std::size_t words_per_chunk = kDefaultWordsPerChunk);

} // namespace autopent
