#include "sap/sap.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "sap/error.hpp"
#include "sap/late_interaction.hpp"
#include "sap/metrics.hpp"
#include "sap/pipeline.hpp"
#include "sap/pruning.hpp"
#include "sap/synth.hpp"
#include "sap/tensor_store.hpp"

struct sap_tensor {
    sap::Tensor tensor;
    std::vector<uint64_t> shape;
};

struct sap_bundle {
    sap::DocumentBundle bundle;
};

struct sap_prune_result {
    sap::PruneResult result;
};

namespace {

thread_local std::string g_last_error;

sap_status set_error(sap_status status, const std::string& message) {
    g_last_error = message;
    return status;
}

template <class Fn>
sap_status guarded(Fn&& fn) {
    try {
        fn();
        return SAP_OK;
    } catch (const sap::Error& e) {
        return set_error(static_cast<sap_status>(static_cast<int>(e.code())), e.what());
    } catch (const std::bad_alloc&) {
        return set_error(SAP_ERR_INTERNAL, "out of memory");
    } catch (const std::filesystem::filesystem_error& e) {
        return set_error(SAP_ERR_IO, e.what());
    } catch (const std::exception& e) {
        return set_error(SAP_ERR_INTERNAL, e.what());
    } catch (...) {
        return set_error(SAP_ERR_INTERNAL, "unknown error");
    }
}

void need(const void* p, const char* what) {
    if (p == nullptr) sap::fail(sap::ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

sap_tensor* wrap(sap::Tensor t) {
    auto* h = new sap_tensor{std::move(t), {}};
    h->shape.assign(h->tensor.shape().begin(), h->tensor.shape().end());
    return h;
}

sap::PruneConfig to_cpp(const sap_prune_config& c) {
    sap::PruneConfig p;
    if (c.method < SAP_METHOD_SAP_MEAN || c.method > SAP_METHOD_CLUSTER) {
        sap::fail(sap::ErrorCode::kInvalidArgument, "unknown method code");
    }
    p.method = static_cast<sap::Method>(c.method);
    p.gamma = c.gamma;
    p.alpha = c.alpha;
    p.beta = c.beta;
    p.seed = c.seed;
    p.kmeans_max_iters = c.kmeans_max_iters;
    p.kmeans_tol = c.kmeans_tol;
    p.kmeans_restarts = c.kmeans_restarts;
    if (c.has_adaptive_k) p.adaptive_k = c.adaptive_k;
    p.validate();
    return p;
}

sap::pipeline::RunOptions to_cpp(const sap_run_options* o) {
    sap::pipeline::RunOptions r;
    if (o) {
        r.threads = o->threads < 1 ? 1 : o->threads;
        r.row_sum = o->strict_rowsum ? sap::RowSumPolicy::kStrict : sap::RowSumPolicy::kWarn;
    }
    return r;
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

}  // namespace

extern "C" {

const char* sap_version(void) { return "1.0.0"; }

const char* sap_status_name(sap_status status) {
    switch (status) {
        case SAP_OK: return "ok";
        case SAP_ERR_INVALID_ARGUMENT: return "invalid argument";
        case SAP_ERR_IO: return "i/o error";
        case SAP_ERR_FORMAT: return "format error";
        case SAP_ERR_VALIDATION: return "validation error";
        case SAP_ERR_MISSING_CALIBRATION: return "missing calibration";
        case SAP_ERR_NUMERIC: return "numeric error";
        case SAP_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

const char* sap_last_error(void) { return g_last_error.c_str(); }

int sap_set_warnings(int enabled) { return sap::set_warnings_enabled(enabled != 0) ? 1 : 0; }

void sap_string_free(char* s) { std::free(s); }

sap_status sap_tensor_create(const uint64_t* shape, size_t rank, const float* data, size_t count, sap_tensor** out) {
    return guarded([&] {
        need(out, "out");
        need(shape, "shape");
        if (count > 0) need(data, "data");
        std::vector<std::size_t> s(shape, shape + rank);
        *out = wrap(sap::Tensor(std::move(s), std::vector<float>(data, data + count)));
    });
}

sap_status sap_tensor_read(const char* path, sap_tensor** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = wrap(sap::read_tensor(path));
    });
}

sap_status sap_tensor_write(const sap_tensor* tensor, const char* path) {
    return guarded([&] {
        need(tensor, "tensor");
        need(path, "path");
        sap::write_tensor(tensor->tensor, path);
    });
}

size_t sap_tensor_rank(const sap_tensor* tensor) { return tensor ? tensor->shape.size() : 0; }
const uint64_t* sap_tensor_shape(const sap_tensor* tensor) { return tensor ? tensor->shape.data() : nullptr; }
size_t sap_tensor_size(const sap_tensor* tensor) { return tensor ? tensor->tensor.size() : 0; }
const float* sap_tensor_data(const sap_tensor* tensor) { return tensor ? tensor->tensor.data().data() : nullptr; }
void sap_tensor_free(sap_tensor* tensor) { delete tensor; }

sap_status sap_bundle_read(const char* manifest_path, int strict_rowsum, sap_bundle** out) {
    return guarded([&] {
        need(manifest_path, "manifest_path");
        need(out, "out");
        *out = new sap_bundle{sap::read_bundle(manifest_path, strict_rowsum ? sap::RowSumPolicy::kStrict
                                                                             : sap::RowSumPolicy::kWarn)};
    });
}

const char* sap_bundle_doc_id(const sap_bundle* bundle) { return bundle ? bundle->bundle.doc_id.c_str() : ""; }

sap_status sap_bundle_get_info(const sap_bundle* bundle, sap_bundle_info* info) {
    return guarded([&] {
        need(bundle, "bundle");
        need(info, "info");
        const auto& b = bundle->bundle;
        info->num_layers = b.num_layers();
        info->num_heads = b.num_heads;
        info->seq_len = b.seq_len;
        info->patch_count = b.patch_count();
        info->embed_dim = b.embed_dim();
        info->eos_index = b.eos_index ? static_cast<int64_t>(*b.eos_index) : -1;
    });
}

int sap_bundle_has_layer(const sap_bundle* bundle, uint32_t layer) {
    return bundle && bundle->bundle.has_layer(layer) ? 1 : 0;
}

void sap_bundle_free(sap_bundle* bundle) { delete bundle; }

void sap_prune_config_init(sap_prune_config* config) {
    if (!config) return;
    const sap::PruneConfig d;
    config->method = SAP_METHOD_SAP_MEAN;
    config->gamma = d.gamma;
    config->alpha = d.alpha;
    config->beta = d.beta;
    config->seed = d.seed;
    config->kmeans_max_iters = d.kmeans_max_iters;
    config->kmeans_tol = d.kmeans_tol;
    config->kmeans_restarts = d.kmeans_restarts;
    config->has_adaptive_k = 0;
    config->adaptive_k = 0.0;
}

sap_status sap_method_from_name(const char* name, sap_method* out) {
    return guarded([&] {
        need(name, "name");
        need(out, "out");
        *out = static_cast<sap_method>(sap::parse_method(name));
    });
}

const char* sap_method_to_name(sap_method method) {
    if (method < SAP_METHOD_SAP_MEAN || method > SAP_METHOD_CLUSTER) return "unknown";
    return sap::method_name(static_cast<sap::Method>(method)).data();
}

sap_status sap_prune_bundle(const sap_bundle* bundle, const sap_prune_config* config, sap_prune_result** out) {
    return guarded([&] {
        need(bundle, "bundle");
        need(config, "config");
        need(out, "out");
        *out = new sap_prune_result{sap::prune(bundle->bundle, to_cpp(*config))};
    });
}

size_t sap_prune_result_count(const sap_prune_result* result) { return result ? result->result.count : 0; }

int sap_prune_result_is_merged(const sap_prune_result* result) {
    return result && result->result.kind == sap::PruneResult::Kind::kMerged ? 1 : 0;
}

const uint32_t* sap_prune_result_indices(const sap_prune_result* result) {
    if (!result || result->result.kind == sap::PruneResult::Kind::kMerged) return nullptr;
    return result->result.selected.data();
}

sap_status sap_prune_result_embeddings(const sap_prune_result* result, const sap_bundle* bundle, sap_tensor** out) {
    return guarded([&] {
        need(result, "result");
        need(bundle, "bundle");
        need(out, "out");
        *out = wrap(result->result.pruned_embeddings(bundle->bundle.embeddings));
    });
}

void sap_prune_result_free(sap_prune_result* result) { delete result; }

sap_status sap_scores(const sap_bundle* bundle, const sap_prune_config* config, double* out, size_t out_len) {
    return guarded([&] {
        need(bundle, "bundle");
        need(config, "config");
        need(out, "out");
        const sap::PruneConfig c = to_cpp(*config);
        sap::ImportanceScores s;
        if (c.method == sap::Method::kSapMean || c.method == sap::Method::kSapMax) {
            s = sap::sap_scores(bundle->bundle, c);
        } else if (c.method == sap::Method::kEos || c.method == sap::Method::kAdaptiveEos) {
            s = sap::eos_scores(bundle->bundle);
        } else {
            sap::fail(sap::ErrorCode::kInvalidArgument, "method has no importance scores");
        }
        if (out_len < s.scores.size()) sap::fail(sap::ErrorCode::kInvalidArgument, "output buffer too small");
        std::copy(s.scores.begin(), s.scores.end(), out);
    });
}

sap_status sap_layer_window(uint32_t total_layers, double alpha, double beta, uint32_t* first, uint32_t* last) {
    return guarded([&] {
        need(first, "first");
        need(last, "last");
        const sap::LayerWindow w = sap::layer_window(total_layers, alpha, beta);
        *first = w.first;
        *last = w.last;
    });
}

sap_status sap_keep_count(double gamma, uint64_t n, uint64_t* out) {
    return guarded([&] {
        need(out, "out");
        *out = sap::keep_count(gamma, n);
    });
}

sap_status sap_maxsim(const sap_tensor* query, const sap_tensor* doc, double* out) {
    return guarded([&] {
        need(query, "query");
        need(doc, "doc");
        need(out, "out");
        *out = sap::maxsim(query->tensor, doc->tensor);
    });
}

sap_status sap_osr(const sap_tensor* query, const sap_tensor* pruned, const sap_tensor* full, double* out) {
    return guarded([&] {
        need(query, "query");
        need(pruned, "pruned");
        need(full, "full");
        need(out, "out");
        *out = sap::osr(query->tensor, pruned->tensor, full->tensor);
    });
}

sap_status sap_ndcg_at_k(const uint32_t* ranked_relevances, size_t n, size_t k, double* out) {
    return guarded([&] {
        need(out, "out");
        if (n > 0) need(ranked_relevances, "ranked_relevances");
        *out = sap::ndcg_at_k(std::span<const std::uint32_t>(ranked_relevances, n), k);
    });
}

sap_status sap_retention_pct(double pruned_ndcg, double full_ndcg, double* out) {
    return guarded([&] {
        need(out, "out");
        *out = sap::retention_pct(pruned_ndcg, full_ndcg);
    });
}

sap_status sap_pearson(const double* x, const double* y, size_t n, double* out) {
    return guarded([&] {
        need(x, "x");
        need(y, "y");
        need(out, "out");
        *out = sap::pearson(std::span<const double>(x, n), std::span<const double>(y, n));
    });
}

void sap_run_options_init(sap_run_options* options) {
    if (!options) return;
    options->threads = 1;
    options->strict_rowsum = 1;
}

void sap_synth_config_init(sap_synth_config* config) {
    if (!config) return;
    const sap::synth::SynthConfig d;
    config->num_docs = d.num_docs;
    config->num_queries = d.num_queries;
    config->patches = d.patches;
    config->embed_dim = d.embed_dim;
    config->layers = d.layers;
    config->heads = d.heads;
    config->seq_len = d.seq_len;
    config->anchors_per_doc = d.anchors_per_doc;
    config->anchor_mass = d.anchor_mass;
    config->final_layer_diffusion = d.final_layer_diffusion ? 1 : 0;
    config->noise_scale = d.noise_scale;
    config->seed = d.seed;
}

sap_status sap_cmd_synth(const sap_synth_config* config, const char* out_dir) {
    return guarded([&] {
        need(config, "config");
        need(out_dir, "out_dir");
        sap::synth::SynthConfig c;
        c.num_docs = config->num_docs;
        c.num_queries = config->num_queries;
        c.patches = config->patches;
        c.embed_dim = config->embed_dim;
        c.layers = config->layers;
        c.heads = config->heads;
        c.seq_len = config->seq_len;
        c.anchors_per_doc = config->anchors_per_doc;
        c.anchor_mass = config->anchor_mass;
        c.final_layer_diffusion = config->final_layer_diffusion != 0;
        c.noise_scale = config->noise_scale;
        c.seed = config->seed;
        sap::synth::write_synth_corpus(sap::synth::generate(c), out_dir);
    });
}

sap_status sap_cmd_prune(const char* corpus_manifest, const sap_prune_config* config, const char* calibration_path,
                         const sap_run_options* options, const char* out_dir, double* mean_keep_ratio) {
    return guarded([&] {
        need(corpus_manifest, "corpus_manifest");
        need(config, "config");
        need(out_dir, "out_dir");
        std::optional<sap::fs::path> cal;
        if (calibration_path) cal = calibration_path;
        const auto s = sap::pipeline::run_prune(corpus_manifest, to_cpp(*config), cal, to_cpp(options), out_dir);
        if (mean_keep_ratio) *mean_keep_ratio = s.mean_keep_ratio;
    });
}

sap_status sap_cmd_calibrate(const char* corpus_manifest, double gamma, uint64_t seed, size_t calib_size,
                             const sap_run_options* options, const char* out_path, double* k_factor) {
    return guarded([&] {
        need(corpus_manifest, "corpus_manifest");
        need(out_path, "out_path");
        sap::pipeline::CalibrateOptions c;
        c.gamma = gamma;
        c.seed = seed;
        c.calib_size = calib_size;
        const auto cal = sap::pipeline::run_calibrate(corpus_manifest, c, to_cpp(options), out_path);
        if (k_factor) *k_factor = cal.k_factor;
    });
}

sap_status sap_cmd_eval(const char* corpus_manifest, const char* const* pruned_dirs, size_t num_pruned,
                        const char* qrels_path, uint32_t k, const sap_run_options* options, const char* out_dir,
                        char** report_json) {
    return guarded([&] {
        need(corpus_manifest, "corpus_manifest");
        need(out_dir, "out_dir");
        if (num_pruned > 0) need(pruned_dirs, "pruned_dirs");
        std::vector<sap::fs::path> dirs;
        for (size_t i = 0; i < num_pruned; ++i) {
            need(pruned_dirs[i], "pruned_dirs entry");
            dirs.emplace_back(pruned_dirs[i]);
        }
        std::optional<sap::fs::path> qrels;
        if (qrels_path) qrels = qrels_path;
        const std::string text = sap::pipeline::run_eval(corpus_manifest, dirs, qrels, k, to_cpp(options), out_dir);
        if (report_json) *report_json = dup_string(text);
    });
}

sap_status sap_cmd_sweep(const char* corpus_manifest, sap_method method, double gamma,
                         const sap_run_options* options, const char* out_dir, double* curve_out, size_t curve_cap,
                         uint32_t* num_layers) {
    return guarded([&] {
        need(corpus_manifest, "corpus_manifest");
        need(out_dir, "out_dir");
        if (method < SAP_METHOD_SAP_MEAN || method > SAP_METHOD_CLUSTER) {
            sap::fail(sap::ErrorCode::kInvalidArgument, "unknown method code");
        }
        const auto curve =
            sap::pipeline::run_sweep(corpus_manifest, static_cast<sap::Method>(method), gamma, to_cpp(options), out_dir);
        if (num_layers) *num_layers = static_cast<uint32_t>(curve.mean_osr.size());
        if (curve_out) {
            for (size_t i = 0; i < curve.mean_osr.size() && i < curve_cap; ++i) curve_out[i] = curve.mean_osr[i];
        }
    });
}

void sap_bench_config_init(sap_bench_config* config) {
    if (!config) return;
    const sap::pipeline::BenchConfig d;
    config->patches = d.patches;
    config->heads = d.heads;
    config->window_layers = d.window_layers;
    config->embed_dim = d.embed_dim;
    config->gamma = d.gamma;
    config->reps = d.reps;
    config->seed = d.seed;
    config->kmeans_restarts = d.kmeans_restarts;
}

sap_status sap_cmd_bench(const sap_bench_config* config, const char* out_path, char** report_json) {
    return guarded([&] {
        need(config, "config");
        sap::pipeline::BenchConfig c;
        c.patches = config->patches;
        c.heads = config->heads;
        c.window_layers = config->window_layers;
        c.embed_dim = config->embed_dim;
        c.gamma = config->gamma;
        c.reps = config->reps;
        c.seed = config->seed;
        c.kmeans_restarts = config->kmeans_restarts;
        const std::string text = sap::pipeline::bench_report_json(c, sap::pipeline::bench_methods(c));
        if (out_path) {
            std::FILE* f = std::fopen(out_path, "wb");
            if (!f) sap::fail(sap::ErrorCode::kIo, std::string("cannot open ") + out_path);
            const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
            std::fclose(f);
            if (!ok) sap::fail(sap::ErrorCode::kIo, std::string("write failure on ") + out_path);
        }
        if (report_json) *report_json = dup_string(text);
    });
}

}  // extern "C"
