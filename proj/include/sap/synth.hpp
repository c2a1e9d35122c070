#pragma once

#include <cstdint>
#include <vector>

#include "sap/tensor_store.hpp"

namespace sap::synth {

struct SynthConfig {
    std::uint32_t num_docs = 200;
    std::uint32_t num_queries = 50;
    std::uint32_t patches = 64;     ///< N
    std::uint32_t embed_dim = 32;   ///< d
    std::uint32_t layers = 12;      ///< L
    std::uint32_t heads = 4;        ///< H
    std::uint32_t seq_len = 68;     ///< T: N visual, T - N - 1 text, then EOS
    std::uint32_t anchors_per_doc = 6;
    double anchor_mass = 0.6;
    bool final_layer_diffusion = true;
    double noise_scale = 0.1;
    std::uint64_t seed = 7;

    void validate() const;
};

struct SynthCorpus {
    SynthConfig config;
    Corpus corpus;
    /// Planted anchor patch positions (0-based into visual order), ascending.
    std::vector<std::vector<std::uint32_t>> anchors;
};

/// Builds the planted-anchor corpus in memory.
///
/// Layer profile, with W = layer_window(L, 0.4, 0.6):
///   - inside W every visual row sends anchor_mass to the anchor columns;
///   - outside W the anchor share shrinks with distance from W and the rest
///     of that mass goes to a per-layer set of non-anchor "distractor" columns;
///   - with final_layer_diffusion the last layer's visual rows are uniform and
///     its EOS row targets a non-anchor patch, otherwise the last layer looks
///     like W and the EOS row follows the anchors.
SynthCorpus generate(const SynthConfig& config);

/// Writes the corpus plus synth.json (config and anchors). Returns corpus.json.
fs::path write_synth_corpus(const SynthCorpus& synth, const fs::path& dir);

}  // namespace sap::synth
