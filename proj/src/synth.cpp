#include "sap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "sap/error.hpp"
#include "sap/pruning.hpp"
#include "sap/rng.hpp"

namespace sap::synth {

using nlohmann::json;

void SynthConfig::validate() const {
    require(num_docs >= 1, ErrorCode::kInvalidArgument, "synth: num_docs must be >= 1");
    require(num_queries >= 1, ErrorCode::kInvalidArgument, "synth: num_queries must be >= 1");
    require(patches >= 2, ErrorCode::kInvalidArgument, "synth: N must be >= 2");
    require(embed_dim >= 1 && layers >= 1 && heads >= 1, ErrorCode::kInvalidArgument,
            "synth: d, L and H must be >= 1");
    require(anchors_per_doc >= 1 && anchors_per_doc < patches, ErrorCode::kInvalidArgument,
            "synth: need 1 <= anchors_per_doc < N");
    require(seq_len >= patches + 1, ErrorCode::kInvalidArgument, "synth: need T >= N + 1 (room for EOS)");
    require(anchor_mass > 0.0 && anchor_mass < 1.0, ErrorCode::kInvalidArgument, "synth: anchor_mass must lie in (0, 1)");
    require(noise_scale >= 0.0 && std::isfinite(noise_scale), ErrorCode::kInvalidArgument,
            "synth: noise_scale must be >= 0");
}

namespace {

std::vector<std::uint32_t> sample_distinct(Rng& rng, std::span<const std::uint32_t> pool, std::size_t k) {
    std::vector<std::uint32_t> p(pool.begin(), pool.end());
    for (std::size_t i = 0; i < k; ++i) std::swap(p[i], p[i + rng.uniform_below(p.size() - i)]);
    p.resize(k);
    std::sort(p.begin(), p.end());
    return p;
}

void unit_gaussian(Rng& rng, float* out, std::size_t d) {
    std::vector<double> v(d);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& x : v) {
            x = rng.normal();
            norm += x * x;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < d; ++i) out[i] = static_cast<float>(v[i] / norm);
}

// Adds `mass` spread over `cols` with weights drawn from U(0.5, 1.5).
void add_jittered(Rng& rng, std::vector<double>& row, std::span<const std::uint32_t> cols, double mass) {
    if (cols.empty() || mass <= 0.0) return;
    std::vector<double> w(cols.size());
    double s = 0.0;
    for (double& x : w) {
        x = rng.uniform(0.5, 1.5);
        s += x;
    }
    for (std::size_t i = 0; i < cols.size(); ++i) row[cols[i]] += mass * w[i] / s;
}

struct LayerShares {
    double anchor = 0.0;
    double distractor = 0.0;
    bool uniform = false;
};

LayerShares layer_shares(const SynthConfig& cfg, std::uint32_t l, LayerWindow w) {
    const double m = cfg.anchor_mass;
    if (l == cfg.layers && cfg.final_layer_diffusion) return {0.0, 0.0, true};
    if (w.contains(l) || l == cfg.layers) return {m, 0.0, false};
    double a = 0.0;
    if (l < w.first) {
        a = 0.5 * m * static_cast<double>(l) / static_cast<double>(w.first);
    } else {
        const double frac = static_cast<double>(l - w.last) / static_cast<double>(cfg.layers - w.last);
        a = 0.5 * m * (1.0 - frac);
    }
    return {a, m - a, false};
}

DocumentBundle make_document(const SynthConfig& cfg, std::uint32_t index, const std::string& doc_id,
                             std::vector<std::uint32_t>& anchors_out) {
    Rng rng = Rng::stream(cfg.seed, "doc/" + std::to_string(index));
    const std::uint32_t N = cfg.patches;
    const std::uint32_t T = cfg.seq_len;
    const std::uint32_t eos = T - 1;

    DocumentBundle b;
    b.doc_id = doc_id;
    b.num_heads = cfg.heads;
    b.seq_len = T;
    b.visual_indices.resize(N);
    std::iota(b.visual_indices.begin(), b.visual_indices.end(), 0u);
    b.eos_index = eos;

    anchors_out = sample_distinct(rng, b.visual_indices, cfg.anchors_per_doc);
    std::vector<std::uint32_t> non_anchor;
    for (std::uint32_t j = 0; j < N; ++j) {
        if (!std::binary_search(anchors_out.begin(), anchors_out.end(), j)) non_anchor.push_back(j);
    }

    std::vector<float> emb(static_cast<std::size_t>(N) * cfg.embed_dim);
    for (std::uint32_t j = 0; j < N; ++j) unit_gaussian(rng, emb.data() + static_cast<std::size_t>(j) * cfg.embed_dim, cfg.embed_dim);
    b.embeddings = Tensor({N, cfg.embed_dim}, std::move(emb));

    std::vector<std::uint32_t> all_cols(T);
    std::iota(all_cols.begin(), all_cols.end(), 0u);
    const LayerWindow window = layer_window(cfg.layers, 0.4, 0.6);
    const std::uint32_t eos_target = non_anchor[rng.uniform_below(non_anchor.size())];

    b.layers.resize(cfg.layers);
    std::vector<double> row(T);
    for (std::uint32_t l = 1; l <= cfg.layers; ++l) {
        const LayerShares sh = layer_shares(cfg, l, window);
        const auto distractors = sample_distinct(rng, non_anchor, std::min<std::size_t>(cfg.anchors_per_doc, non_anchor.size()));
        std::vector<float> att(static_cast<std::size_t>(cfg.heads) * T * T);
        for (std::uint32_t h = 0; h < cfg.heads; ++h) {
            for (std::uint32_t i = 0; i < T; ++i) {
                std::fill(row.begin(), row.end(), 0.0);
                const bool visual = i < N;
                const bool last = l == cfg.layers;
                if (visual && sh.uniform) {
                    std::fill(row.begin(), row.end(), 1.0 / T);
                } else if (visual) {
                    add_jittered(rng, row, all_cols, 1.0 - sh.anchor - sh.distractor);
                    add_jittered(rng, row, anchors_out, sh.anchor);
                    add_jittered(rng, row, distractors, sh.distractor);
                } else if (i == eos && last && cfg.final_layer_diffusion) {
                    row[eos_target] += 0.5;
                    add_jittered(rng, row, non_anchor, 0.5);
                } else if (i == eos && last) {
                    add_jittered(rng, row, anchors_out, 0.5);
                    add_jittered(rng, row, all_cols, 0.5);
                } else {
                    add_jittered(rng, row, all_cols, 1.0);
                }
                double s = 0.0;
                for (double v : row) s += v;
                float* dst = att.data() + (static_cast<std::size_t>(h) * T + i) * T;
                for (std::uint32_t j = 0; j < T; ++j) dst[j] = static_cast<float>(row[j] / s);
            }
        }
        b.layers[l - 1] = Tensor({cfg.heads, T, T}, std::move(att));
    }
    return b;
}

std::string make_id(char prefix, std::uint32_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%c%05u", prefix, i);
    return buf;
}

}  // namespace

SynthCorpus generate(const SynthConfig& config) {
    config.validate();
    SynthCorpus out;
    out.config = config;
    Corpus& c = out.corpus;
    c.corpus_id = "synth-seed" + std::to_string(config.seed);
    c.embed_dim = config.embed_dim;
    c.documents.resize(config.num_docs);
    out.anchors.resize(config.num_docs);
    for (std::uint32_t i = 0; i < config.num_docs; ++i) {
        c.documents[i] = make_document(config, i, make_id('d', i), out.anchors[i]);
    }

    Rng rng = Rng::stream(config.seed, "queries");
    std::vector<std::uint32_t> targets;
    if (config.num_queries <= config.num_docs) {
        std::vector<std::uint32_t> ids(config.num_docs);
        std::iota(ids.begin(), ids.end(), 0u);
        for (std::uint32_t i = 0; i < config.num_queries; ++i) {
            std::swap(ids[i], ids[i + rng.uniform_below(ids.size() - i)]);
        }
        targets.assign(ids.begin(), ids.begin() + config.num_queries);
    } else {
        for (std::uint32_t i = 0; i < config.num_queries; ++i) targets.push_back(static_cast<std::uint32_t>(rng.uniform_below(config.num_docs)));
    }

    const std::size_t d = config.embed_dim;
    const double per_dim = config.noise_scale / std::sqrt(static_cast<double>(d));
    for (std::uint32_t qi = 0; qi < config.num_queries; ++qi) {
        const DocumentBundle& doc = c.documents[targets[qi]];
        const auto& anchors = out.anchors[targets[qi]];
        std::vector<float> q(anchors.size() * d);
        for (std::size_t t = 0; t < anchors.size(); ++t) {
            const auto a = doc.embeddings.row(anchors[t]);
            std::vector<double> v(d);
            double norm = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                v[j] = a[j] + (config.noise_scale > 0.0 ? per_dim * rng.normal() : 0.0);
                norm += v[j] * v[j];
            }
            norm = std::sqrt(norm);
            // Without noise the token is the anchor vector itself, bit for bit.
            for (std::size_t j = 0; j < d; ++j) {
                q[t * d + j] = config.noise_scale > 0.0 ? static_cast<float>(v[j] / norm) : a[j];
            }
        }
        QueryBundle qb;
        qb.query_id = make_id('q', qi);
        qb.embeddings = Tensor({anchors.size(), d}, std::move(q));
        c.queries.push_back(std::move(qb));
        c.qrels.add(make_id('q', qi), doc.doc_id, 1);
    }
    return out;
}

fs::path write_synth_corpus(const SynthCorpus& synth, const fs::path& dir) {
    const fs::path manifest = write_corpus(synth.corpus, dir);
    const SynthConfig& c = synth.config;
    json cfg = {{"num_docs", c.num_docs},
                {"num_queries", c.num_queries},
                {"N", c.patches},
                {"d", c.embed_dim},
                {"L", c.layers},
                {"H", c.heads},
                {"T", c.seq_len},
                {"anchors_per_doc", c.anchors_per_doc},
                {"anchor_mass", c.anchor_mass},
                {"final_layer_diffusion", c.final_layer_diffusion},
                {"noise_scale", c.noise_scale},
                {"seed", c.seed}};
    json anchors = json::object();
    for (std::size_t i = 0; i < synth.anchors.size(); ++i) anchors[synth.corpus.documents[i].doc_id] = synth.anchors[i];
    const json j = {{"config", cfg}, {"anchors", anchors}};
    std::ofstream out(dir / "synth.json", std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + (dir / "synth.json").string());
    out << j.dump(2) << "\n";
    if (!out) fail(ErrorCode::kIo, "write failure on " + (dir / "synth.json").string());
    return manifest;
}

}  // namespace sap::synth
