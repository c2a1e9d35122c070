#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sap/tensor.hpp"

namespace sap {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// SAPT tensor files
//
//   "SAPT" | version u32 LE (=1) | header_len u64 LE | JSON header | f32 LE payload
//
// The header is the compact JSON object {"dtype":"f32","shape":[...]}.
// ---------------------------------------------------------------------------

inline constexpr char kTensorMagic[4] = {'S', 'A', 'P', 'T'};
inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::size_t kTensorPrefixBytes = 16;

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes, const std::string& origin = "<memory>");

void write_tensor(const Tensor& t, const fs::path& path);
Tensor read_tensor(const fs::path& path);

// ---------------------------------------------------------------------------
// Bundles
// ---------------------------------------------------------------------------

inline constexpr double kRowSumTolerance = 1e-3;

enum class RowSumPolicy {
    kStrict,  ///< row-sum violations are validation errors
    kWarn,    ///< row-sum violations are reported on stderr and ignored
};

/// One document: patch embeddings plus the per-layer attention stack.
///
/// Token indices are 0-based. Layers are 1-based in every accessor taking a
/// layer argument. Layers may be absent (exporters can ship a subset); the
/// logical shape is still [L, H, T, T].
struct DocumentBundle {
    std::string doc_id;
    Tensor embeddings;                        ///< [N, d]
    std::vector<std::optional<Tensor>> layers;  ///< L entries, each [H, T, T] when present
    std::vector<std::uint32_t> visual_indices;
    std::optional<std::uint32_t> eos_index;
    std::uint32_t num_heads = 0;
    std::uint32_t seq_len = 0;

    std::uint32_t num_layers() const noexcept { return static_cast<std::uint32_t>(layers.size()); }
    std::size_t patch_count() const noexcept { return visual_indices.size(); }
    std::size_t embed_dim() const { return embeddings.rank() == 2 ? embeddings.cols() : 0; }

    bool has_layer(std::uint32_t layer) const noexcept;

    /// Attention matrix [T, T] for a 1-based layer and 0-based head.
    std::span<const float> attention(std::uint32_t layer, std::uint32_t head) const;

    /// Checks every structural invariant; row sums per policy.
    void validate(RowSumPolicy policy) const;
};

struct QueryBundle {
    std::string query_id;
    Tensor embeddings;  ///< [M, d]
    std::optional<std::string> text;
};

/// (query_id, doc_id) -> graded relevance.
class Qrels {
public:
    void add(const std::string& query_id, const std::string& doc_id, std::uint32_t relevance);

    std::uint32_t relevance(const std::string& query_id, const std::string& doc_id) const;
    std::size_t size() const noexcept { return entries_.size(); }

    const std::map<std::pair<std::string, std::string>, std::uint32_t>& entries() const noexcept {
        return entries_;
    }

    /// Pairs with relevance > 0, ordered by (query_id, doc_id).
    std::vector<std::pair<std::string, std::string>> positive_pairs() const;

private:
    std::map<std::pair<std::string, std::string>, std::uint32_t> entries_;
};

/// Parses tab-separated "query_id \t doc_id \t relevance" lines.
Qrels parse_qrels(const std::string& text, const std::string& origin = "<memory>");
Qrels read_qrels(const fs::path& path);
void write_qrels(const Qrels& qrels, const fs::path& path);

/// Bundle manifest JSON; tensor paths are resolved relative to the manifest.
DocumentBundle read_bundle(const fs::path& manifest_path, RowSumPolicy policy = RowSumPolicy::kStrict);

struct BundleWriteOptions {
    bool per_layer_files = false;
};

/// Writes <dir>/<stem>.json plus its tensor files; returns the manifest path.
fs::path write_bundle(const DocumentBundle& bundle, const fs::path& dir, const std::string& stem,
                      BundleWriteOptions options = {});

QueryBundle read_query(const fs::path& manifest_path);
fs::path write_query(const QueryBundle& query, const fs::path& dir, const std::string& stem);

struct CorpusManifest {
    std::string corpus_id;
    std::size_t embed_dim = 0;
    std::vector<fs::path> documents;  ///< as written in the manifest (relative allowed)
    std::vector<fs::path> queries;
    fs::path qrels;
};

CorpusManifest read_corpus_manifest(const fs::path& path);
void write_corpus_manifest(const CorpusManifest& manifest, const fs::path& path);

/// A fully loaded corpus. Documents and queries keep manifest order.
struct Corpus {
    std::string corpus_id;
    std::size_t embed_dim = 0;
    std::vector<DocumentBundle> documents;
    std::vector<QueryBundle> queries;
    Qrels qrels;

    const DocumentBundle* find_document(const std::string& doc_id) const;
    const QueryBundle* find_query(const std::string& query_id) const;

    /// Unique ids, uniform d, qrels referencing known ids.
    void validate() const;
};

struct CorpusLoadOptions {
    RowSumPolicy row_sum = RowSumPolicy::kStrict;
    std::optional<fs::path> qrels_override;
    int threads = 1;
};

Corpus read_corpus(const fs::path& manifest_path, const CorpusLoadOptions& options = {});

/// Writes a corpus directory: corpus.json, docs/, queries/, qrels.tsv.
fs::path write_corpus(const Corpus& corpus, const fs::path& dir, BundleWriteOptions options = {});

}  // namespace sap
