#include "autopent/memory_retriever.hpp"

#include "autopent/errors.hpp"
#include "autopent/llm_gateway.hpp"

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

namespace autopent {

namespace {

std::uint64_t fnv1a(std::string_view text, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    // final avalanche
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return h;
}

std::vector<std::string> terms(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

httplib::Headers auth_headers(const std::string& env) {
    httplib::Headers headers;
    if (!env.empty()) {
        if (const char* key = std::getenv(env.c_str()); key && *key) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }
    return headers;
}

nlohmann::json post_json(const HttpModelConfig& config, const std::string& endpoint, const nlohmann::json& body) {
    auto [origin, prefix] = split_base_url(config.base_url);
    httplib::Client client(origin);
    auto res = client.Post(prefix + endpoint, auth_headers(config.api_key_env), body.dump(), "application/json");
    if (!res) throw BackendUnavailable("model endpoint unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw BackendRejected(res->status, res->body);
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw BackendRejected(res->status, e.what());
    }
}

nlohmann::json chunk_to_json(const KnowledgeChunk& c) {
    return {{"id", c.chunk_id}, {"source", c.source_doc}, {"index", c.index},
            {"kind", c.kind},   {"text", c.text},         {"vector", c.embedding}};
}

} // namespace

std::vector<std::string> tokenize_words(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) words.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

std::vector<std::string> chunk_document(std::string_view text, std::size_t words_per_chunk) {
    if (words_per_chunk == 0) throw Error("words_per_chunk must be at least 1");
    auto words = tokenize_words(text);
    std::vector<std::string> chunks;
    for (std::size_t start = 0; start < words.size(); start += words_per_chunk) {
        auto end = std::min(words.size(), start + words_per_chunk);
        std::string chunk;
        for (auto i = start; i < end; ++i) {
            if (i != start) chunk.push_back(' ');
            chunk += words[i];
        }
        chunks.push_back(std::move(chunk));
    }
    return chunks;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw DimensionMismatch(a.size(), b.size());
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

HashEmbedder::HashEmbedder(std::size_t dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {
    if (dimension_ == 0) throw Error("embedding dimension must be positive");
}

std::vector<float> HashEmbedder::embed(std::string_view text) {
    std::vector<double> acc(dimension_, 0.0);
    for (const auto& term : terms(text)) {
        auto h = fnv1a(term, seed_);
        acc[h % dimension_] += (h >> 63) ? 1.0 : -1.0;
    }
    double norm = 0.0;
    for (double v : acc) norm += v * v;
    norm = std::sqrt(norm);
    std::vector<float> out(dimension_, 0.0f);
    if (norm > 0.0) {
        for (std::size_t i = 0; i < dimension_; ++i) out[i] = static_cast<float>(acc[i] / norm);
    }
    return out;
}

double TermOverlapReranker::score(std::string_view query, std::string_view text) {
    auto q = terms(query);
    std::set<std::string> query_terms(q.begin(), q.end());
    if (query_terms.empty()) return 0.0;
    auto t = terms(text);
    std::set<std::string> text_terms(t.begin(), t.end());
    std::size_t shared = 0;
    for (const auto& term : query_terms) shared += text_terms.contains(term) ? 1 : 0;
    return static_cast<double>(shared) / static_cast<double>(query_terms.size());
}

HttpEmbedder::HttpEmbedder(HttpModelConfig config, std::size_t dimension)
    : config_(std::move(config)), dimension_(dimension) {
    if (config_.response_path.empty()) config_.response_path = "data.0.embedding";
}

std::vector<float> HttpEmbedder::embed(std::string_view text) {
    auto doc = post_json(config_, "/embed", {{"model", config_.model}, {"input", {std::string(text)}}});
    const auto* vec = lookup_path(doc, config_.response_path);
    if (!vec || !vec->is_array()) throw BackendRejected(200, "no embedding at '" + config_.response_path + "'");
    auto out = vec->get<std::vector<float>>();
    if (out.size() != dimension_) throw DimensionMismatch(dimension_, out.size());
    return out;
}

HttpReranker::HttpReranker(HttpModelConfig config) : config_(std::move(config)) {
    if (config_.response_path.empty()) config_.response_path = "results.0.relevance_score";
}

double HttpReranker::score(std::string_view query, std::string_view text) {
    auto doc = post_json(config_, "/rerank",
                         {{"model", config_.model}, {"query", std::string(query)}, {"documents", {std::string(text)}}});
    const auto* value = lookup_path(doc, config_.response_path);
    if (!value || !value->is_number()) throw BackendRejected(200, "no score at '" + config_.response_path + "'");
    return value->get<double>();
}

// ── store ───────────────────────────────────────────────────────────

VectorStore::VectorStore(std::filesystem::path file) : file_(std::move(file)) {}

void VectorStore::load() {
    if (!file_ || !std::filesystem::exists(*file_)) return;
    std::ifstream in(*file_);
    if (!in) throw Error("cannot open vector store " + file_->string());

    std::vector<KnowledgeChunk> chunks;
    std::optional<std::size_t> dimension;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error("vector store " + file_->string() + " line " + std::to_string(lineno) + ": " + e.what());
        }
        if (lineno == 1) {
            if (rec.value("format", "") != "autopent-vector-store") {
                throw Error("vector store " + file_->string() + " has no header record");
            }
            if (rec.contains("dimension") && !rec["dimension"].is_null()) {
                dimension = rec["dimension"].get<std::size_t>();
            }
            continue;
        }
        KnowledgeChunk c;
        c.chunk_id = rec.at("id").get<std::string>();
        c.source_doc = rec.at("source").get<std::string>();
        c.index = rec.at("index").get<std::size_t>();
        c.kind = rec.value("kind", "knowledge");
        c.text = rec.at("text").get<std::string>();
        c.embedding = rec.at("vector").get<std::vector<float>>();
        if (dimension && c.embedding.size() != *dimension) throw DimensionMismatch(*dimension, c.embedding.size());
        dimension = c.embedding.size();
        auto it = std::find_if(chunks.begin(), chunks.end(), [&](const auto& x) { return x.chunk_id == c.chunk_id; });
        if (it != chunks.end()) {
            *it = std::move(c);
        } else {
            chunks.push_back(std::move(c));
        }
    }
    std::unique_lock lock(mutex_);
    chunks_ = std::move(chunks);
    dimension_ = dimension;
}

void VectorStore::save() const {
    if (!file_) return;
    std::shared_lock lock(mutex_);
    if (file_->has_parent_path()) std::filesystem::create_directories(file_->parent_path());
    auto tmp = *file_;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error("cannot write vector store " + tmp.string());
        nlohmann::json header = {{"format", "autopent-vector-store"}, {"version", 1}, {"count", chunks_.size()}};
        header["dimension"] = dimension_ ? nlohmann::json(*dimension_) : nlohmann::json(nullptr);
        out << header.dump() << '\n';
        for (const auto& c : chunks_) out << chunk_to_json(c).dump() << '\n';
    }
    std::filesystem::rename(tmp, *file_);
}

void VectorStore::upsert(KnowledgeChunk chunk) {
    std::unique_lock lock(mutex_);
    if (dimension_ && chunk.embedding.size() != *dimension_) {
        throw DimensionMismatch(*dimension_, chunk.embedding.size());
    }
    dimension_ = chunk.embedding.size();
    auto it = std::find_if(chunks_.begin(), chunks_.end(), [&](const auto& c) { return c.chunk_id == chunk.chunk_id; });
    if (it != chunks_.end()) {
        *it = std::move(chunk);
    } else {
        chunks_.push_back(std::move(chunk));
    }
}

std::vector<KnowledgeChunk> VectorStore::snapshot() const {
    std::shared_lock lock(mutex_);
    return chunks_;
}

std::size_t VectorStore::size() const {
    std::shared_lock lock(mutex_);
    return chunks_.size();
}

std::optional<std::size_t> VectorStore::dimension() const {
    std::shared_lock lock(mutex_);
    return dimension_;
}

std::size_t embed_and_store(VectorStore& store, const std::string& source_doc,
                            const std::vector<std::string>& chunks, Embedder& embedder, const std::string& kind) {
    std::vector<KnowledgeChunk> prepared;
    prepared.reserve(chunks.size());
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        auto vec = embedder.embed(chunks[i]);
        if (vec.size() != embedder.dimension()) throw DimensionMismatch(embedder.dimension(), vec.size());
        if (auto dim = store.dimension(); dim && *dim != vec.size()) throw DimensionMismatch(*dim, vec.size());
        prepared.push_back({source_doc + "#" + std::to_string(i), source_doc, i, kind, chunks[i], std::move(vec)});
    }
    for (auto& c : prepared) store.upsert(std::move(c));
    return prepared.size();
}

std::vector<RetrievalHit> retrieve(const VectorStore& store, Embedder& embedder, std::string_view query,
                                   std::size_t k, double threshold, Reranker* reranker) {
    auto chunks = store.snapshot();
    if (chunks.empty() || k == 0) return {};
    auto q = embedder.embed(query);

    std::vector<RetrievalHit> hits;
    for (auto& c : chunks) {
        double sim = cosine_similarity(q, c.embedding);
        if (sim > threshold) hits.push_back({std::move(c), sim, sim});
    }
    std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.chunk.chunk_id < b.chunk.chunk_id;
    });
    if (hits.size() > k) hits.resize(k);

    if (reranker) {
        for (auto& h : hits) h.rerank_score = reranker->score(query, h.chunk.text);
        std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
            if (a.rerank_score != b.rerank_score) return a.rerank_score > b.rerank_score;
            return a.chunk.chunk_id < b.chunk.chunk_id;
        });
    }
    return hits;
}

std::string record_successful_task(VectorStore& store, const TaskNode& task, Embedder& embedder) {
    if (!task.completed()) throw RejectUnsuccessful(task.id);

    std::ostringstream text;
    text << "Task: " << task.instruction << '\n';
    if (task.command) text << "Command: " << *task.command << '\n';
    std::string result = task.result.value_or("");
    if (result.size() > 1000) result = result.substr(0, 1000) + " [...]";
    text << "Result: " << result;

    std::ostringstream id;
    id << "experience#" << std::hex << fnv1a(normalize_instruction(task.instruction), 0);
    KnowledgeChunk chunk{id.str(), "experience", 0, "experience", text.str(), embedder.embed(text.str())};
    store.upsert(chunk);
    return chunk.chunk_id;
}

std::size_t ingest_directory(VectorStore& store, const std::filesystem::path& dir, Embedder& embedder,
                             std::size_t words_per_chunk) {
    if (!std::filesystem::is_directory(dir)) throw ConfigError("knowledge directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        auto ext = entry.path().extension().string();
        if (ext == ".txt" || ext == ".md") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::size_t stored = 0;
    for (const auto& file : files) {
        std::ifstream in(file);
        std::stringstream buf;
        buf << in.rdbuf();
        auto source = std::filesystem::relative(file, dir).generic_string();
        stored += embed_and_store(store, source, chunk_document(buf.str(), words_per_chunk), embedder);
    }
    spdlog::info("ingested {} chunks from {} files under {}", stored, files.size(), dir.string());
    return stored;
}

} // namespace autopent
