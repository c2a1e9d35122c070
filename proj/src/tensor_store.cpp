#include "sap/tensor_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sap/error.hpp"
#include "sap/late_interaction.hpp"
#include "sap/parallel.hpp"

namespace sap {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxHeaderBytes = 1u << 20;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(ErrorCode::kIo, "read failure on " + path.string());
    return bytes;
}

std::string read_file_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_bytes(const fs::path& path, const void* data, std::size_t n) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    out.flush();
    if (!out) fail(ErrorCode::kIo, "write failure on " + path.string());
}

json parse_json_file(const fs::path& path) {
    const std::string text = read_file_text(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::kFormat, path.string() + ": invalid JSON: " + e.what());
    }
}

void write_json_file(const fs::path& path, const json& j) {
    const std::string text = j.dump(2) + "\n";
    write_file_bytes(path, text.data(), text.size());
}

const json& field(const json& obj, const char* key, const fs::path& origin) {
    auto it = obj.find(key);
    if (it == obj.end()) fail(ErrorCode::kValidation, origin.string() + ": missing field '" + key + "'");
    return *it;
}

template <class T>
T field_as(const json& obj, const char* key, const fs::path& origin) {
    const json& v = field(obj, key, origin);
    try {
        if constexpr (std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
                fail(ErrorCode::kValidation, origin.string() + ": field '" + key + "' must be a non-negative integer");
            }
        }
        return v.get<T>();
    } catch (const json::exception&) {
        fail(ErrorCode::kValidation, origin.string() + ": field '" + key + "' has the wrong type");
    }
}

fs::path resolve(const fs::path& base_dir, const fs::path& p) { return p.is_absolute() ? p : base_dir / p; }

std::string row_label(std::uint32_t layer, std::uint32_t head, std::size_t row) {
    return "layer " + std::to_string(layer) + " head " + std::to_string(head) + " row " + std::to_string(row);
}

}  // namespace

// ---------------------------------------------------------------------------
// SAPT

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
    require(shape_product(t.shape()) == t.size(), ErrorCode::kInvalidArgument, "tensor shape/data mismatch");
    json header = {{"dtype", "f32"}, {"shape", t.shape()}};
    const std::string h = header.dump();
    std::vector<std::uint8_t> out;
    out.reserve(kTensorPrefixBytes + h.size() + 4 * t.size());
    out.insert(out.end(), kTensorMagic, kTensorMagic + 4);
    put_u32(out, kTensorVersion);
    put_u64(out, h.size());
    out.insert(out.end(), h.begin(), h.end());
    const std::size_t payload_at = out.size();
    out.resize(payload_at + 4 * t.size());
    std::uint8_t* p = out.data() + payload_at;
    if constexpr (std::endian::native == std::endian::little) {
        if (t.size() > 0) std::memcpy(p, t.data().data(), 4 * t.size());
    } else {
        for (float v : t.data()) {
            const auto bits = std::bit_cast<std::uint32_t>(v);
            for (int i = 0; i < 4; ++i) *p++ = static_cast<std::uint8_t>(bits >> (8 * i));
        }
    }
    return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes, const std::string& origin) {
    if (bytes.size() < kTensorPrefixBytes) fail(ErrorCode::kFormat, origin + ": truncated header");
    if (std::memcmp(bytes.data(), kTensorMagic, 4) != 0) fail(ErrorCode::kFormat, origin + ": bad magic");
    const std::uint32_t version = get_u32(bytes.data() + 4);
    if (version != kTensorVersion) {
        fail(ErrorCode::kFormat, origin + ": unsupported version " + std::to_string(version));
    }
    const std::uint64_t header_len = get_u64(bytes.data() + 8);
    if (header_len > kMaxHeaderBytes || header_len > bytes.size() - kTensorPrefixBytes) {
        fail(ErrorCode::kFormat, origin + ": truncated header");
    }
    const auto* hp = reinterpret_cast<const char*>(bytes.data() + kTensorPrefixBytes);
    json header;
    try {
        header = json::parse(hp, hp + header_len);
    } catch (const json::parse_error&) {
        fail(ErrorCode::kFormat, origin + ": malformed header JSON");
    }
    if (!header.is_object() || !header.contains("dtype") || !header.contains("shape")) {
        fail(ErrorCode::kFormat, origin + ": header needs dtype and shape");
    }
    if (header["dtype"] != "f32") fail(ErrorCode::kFormat, origin + ": unsupported dtype " + header["dtype"].dump());
    const json& js = header["shape"];
    if (!js.is_array() || js.empty()) fail(ErrorCode::kFormat, origin + ": shape must be a non-empty array");
    std::vector<std::size_t> shape;
    std::size_t count = 1;
    for (const auto& s : js) {
        if (!s.is_number_unsigned()) fail(ErrorCode::kFormat, origin + ": shape entries must be non-negative integers");
        const auto v = s.get<std::uint64_t>();
        if (v != 0 && count > std::numeric_limits<std::size_t>::max() / 4 / v) {
            fail(ErrorCode::kFormat, origin + ": shape too large");
        }
        count *= v;
        shape.push_back(static_cast<std::size_t>(v));
    }
    const std::size_t payload_at = kTensorPrefixBytes + header_len;
    const std::size_t payload = bytes.size() - payload_at;
    if (payload < 4 * count) {
        fail(ErrorCode::kFormat, origin + ": truncated payload (" + std::to_string(payload) + " bytes, need " +
                                     std::to_string(4 * count) + ")");
    }
    if (payload > 4 * count) fail(ErrorCode::kFormat, origin + ": trailing bytes after payload");
    std::vector<float> data(count);
    const std::uint8_t* p = bytes.data() + payload_at;
    for (std::size_t i = 0; i < count; ++i, p += 4) data[i] = std::bit_cast<float>(get_u32(p));
    Tensor t(std::move(shape), std::move(data));
    if (!t.all_finite()) fail(ErrorCode::kFormat, origin + ": non-finite values in payload");
    return t;
}

void write_tensor(const Tensor& t, const fs::path& path) {
    const auto bytes = encode_tensor(t);
    write_file_bytes(path, bytes.data(), bytes.size());
}

Tensor read_tensor(const fs::path& path) {
    const auto bytes = read_file_bytes(path);
    return decode_tensor(bytes, path.string());
}

// ---------------------------------------------------------------------------
// DocumentBundle

bool DocumentBundle::has_layer(std::uint32_t layer) const noexcept {
    return layer >= 1 && layer <= layers.size() && layers[layer - 1].has_value();
}

std::span<const float> DocumentBundle::attention(std::uint32_t layer, std::uint32_t head) const {
    require(layer >= 1 && layer <= layers.size(), ErrorCode::kInvalidArgument,
            doc_id + ": layer " + std::to_string(layer) + " out of range 1.." + std::to_string(layers.size()));
    require(layers[layer - 1].has_value(), ErrorCode::kInvalidArgument,
            doc_id + ": layer " + std::to_string(layer) + " is not present in this bundle");
    require(head < num_heads, ErrorCode::kInvalidArgument, doc_id + ": head index out of range");
    const std::size_t tt = static_cast<std::size_t>(seq_len) * seq_len;
    return layers[layer - 1]->data().subspan(head * tt, tt);
}

void DocumentBundle::validate(RowSumPolicy policy) const {
    const std::string who = doc_id.empty() ? std::string("<bundle>") : doc_id;
    require(!doc_id.empty(), ErrorCode::kValidation, "bundle has an empty doc_id");
    require(num_heads >= 1, ErrorCode::kValidation, who + ": num_heads must be >= 1");
    require(seq_len >= 1, ErrorCode::kValidation, who + ": seq_len must be >= 1");
    require(!layers.empty(), ErrorCode::kValidation, who + ": num_layers must be >= 1");
    require(!visual_indices.empty(), ErrorCode::kValidation, who + ": visual_indices is empty");
    for (std::size_t i = 0; i < visual_indices.size(); ++i) {
        require(visual_indices[i] < seq_len, ErrorCode::kValidation,
                who + ": visual index " + std::to_string(visual_indices[i]) + " outside [0, T)");
        if (i > 0) {
            require(visual_indices[i] > visual_indices[i - 1], ErrorCode::kValidation,
                    who + ": visual_indices must be strictly increasing");
        }
    }
    if (eos_index) {
        require(*eos_index < seq_len, ErrorCode::kValidation, who + ": eos_index outside [0, T)");
        require(!std::binary_search(visual_indices.begin(), visual_indices.end(), *eos_index),
                ErrorCode::kValidation, who + ": eos_index is listed in visual_indices");
    }
    require(embeddings.rank() == 2, ErrorCode::kValidation, who + ": embeddings must be rank 2 [N, d]");
    require(embeddings.rows() == visual_indices.size(), ErrorCode::kValidation,
            who + ": embeddings row count " + std::to_string(embeddings.rows()) + " != patch count " +
                std::to_string(visual_indices.size()));
    require(embeddings.cols() >= 1, ErrorCode::kValidation, who + ": embed_dim must be >= 1");
    require(embeddings.all_finite(), ErrorCode::kValidation, who + ": non-finite embedding values");

    bool any_layer = false;
    std::size_t bad_rows = 0;
    double worst = 0.0;
    std::string first_bad;
    const std::vector<std::size_t> expect{num_heads, seq_len, seq_len};
    for (std::uint32_t l = 1; l <= layers.size(); ++l) {
        if (!layers[l - 1]) continue;
        any_layer = true;
        const Tensor& a = *layers[l - 1];
        require(a.shape() == expect, ErrorCode::kValidation,
                who + ": attention layer " + std::to_string(l) + " shape does not match [H, T, T]");
        require(a.all_finite(), ErrorCode::kValidation, who + ": non-finite attention values");
        const auto data = a.data();
        for (std::uint32_t h = 0; h < num_heads; ++h) {
            for (std::size_t i = 0; i < seq_len; ++i) {
                const float* row = data.data() + (static_cast<std::size_t>(h) * seq_len + i) * seq_len;
                double s = 0.0;
                for (std::size_t j = 0; j < seq_len; ++j) s += row[j];
                const double dev = std::abs(s - 1.0);
                if (dev > kRowSumTolerance) {
                    if (bad_rows == 0) first_bad = row_label(l, h, i) + " sums to " + std::to_string(s);
                    ++bad_rows;
                    worst = std::max(worst, dev);
                }
            }
        }
    }
    require(any_layer, ErrorCode::kValidation, who + ": no attention layers present");
    if (bad_rows > 0) {
        const std::string msg = who + ": " + std::to_string(bad_rows) +
                                " attention rows deviate from sum 1 by more than 1e-3 (first: " + first_bad +
                                ", worst deviation " + std::to_string(worst) + ")";
        if (policy == RowSumPolicy::kStrict) fail(ErrorCode::kValidation, msg);
        warn(msg);
    }
}

DocumentBundle read_bundle(const fs::path& manifest_path, RowSumPolicy policy) {
    const json m = parse_json_file(manifest_path);
    if (!m.is_object()) fail(ErrorCode::kValidation, manifest_path.string() + ": manifest must be a JSON object");
    const fs::path base = manifest_path.parent_path();

    DocumentBundle b;
    b.doc_id = field_as<std::string>(m, "doc_id", manifest_path);
    const auto num_layers = field_as<std::uint32_t>(m, "num_layers", manifest_path);
    b.num_heads = field_as<std::uint32_t>(m, "num_heads", manifest_path);
    b.seq_len = field_as<std::uint32_t>(m, "seq_len", manifest_path);
    const auto patch_count = field_as<std::size_t>(m, "patch_count", manifest_path);
    const auto embed_dim = field_as<std::size_t>(m, "embed_dim", manifest_path);
    b.visual_indices = field_as<std::vector<std::uint32_t>>(m, "visual_indices", manifest_path);
    const json& eos = field(m, "eos_index", manifest_path);
    if (!eos.is_null()) {
        if (!eos.is_number_unsigned()) fail(ErrorCode::kValidation, manifest_path.string() + ": eos_index must be a non-negative integer or null");
        b.eos_index = eos.get<std::uint32_t>();
    }
    require(num_layers >= 1, ErrorCode::kValidation, manifest_path.string() + ": num_layers must be >= 1");

    b.embeddings = read_tensor(resolve(base, field_as<std::string>(m, "embeddings", manifest_path)));

    const bool single = m.contains("attention");
    const bool split = m.contains("attention_layers");
    if (single == split) {
        fail(ErrorCode::kValidation,
             manifest_path.string() + ": exactly one of 'attention' or 'attention_layers' must be given");
    }
    b.layers.resize(num_layers);
    const std::size_t tt = static_cast<std::size_t>(b.seq_len) * b.seq_len;
    if (single) {
        Tensor all = read_tensor(resolve(base, field_as<std::string>(m, "attention", manifest_path)));
        const std::vector<std::size_t> expect{num_layers, b.num_heads, b.seq_len, b.seq_len};
        require(all.shape() == expect, ErrorCode::kValidation,
                manifest_path.string() + ": attention shape does not match [L, H, T, T]");
        const std::size_t per_layer = b.num_heads * tt;
        for (std::uint32_t l = 0; l < num_layers; ++l) {
            auto src = all.data().subspan(l * per_layer, per_layer);
            b.layers[l] = Tensor({b.num_heads, b.seq_len, b.seq_len}, std::vector<float>(src.begin(), src.end()));
        }
    } else {
        const json& list = m["attention_layers"];
        require(list.is_array() && list.size() == num_layers, ErrorCode::kValidation,
                manifest_path.string() + ": attention_layers must list num_layers entries");
        for (std::uint32_t l = 0; l < num_layers; ++l) {
            if (list[l].is_null()) continue;
            require(list[l].is_string(), ErrorCode::kValidation,
                    manifest_path.string() + ": attention_layers entries must be paths or null");
            b.layers[l] = read_tensor(resolve(base, list[l].get<std::string>()));
        }
    }

    require(b.visual_indices.size() == patch_count, ErrorCode::kValidation,
            manifest_path.string() + ": patch_count does not match visual_indices");
    require(b.embeddings.rank() == 2 && b.embeddings.cols() == embed_dim, ErrorCode::kValidation,
            manifest_path.string() + ": embed_dim does not match the embeddings tensor");
    b.validate(policy);
    return b;
}

fs::path write_bundle(const DocumentBundle& bundle, const fs::path& dir, const std::string& stem,
                      BundleWriteOptions options) {
    fs::create_directories(dir);
    json m;
    m["doc_id"] = bundle.doc_id;
    m["num_layers"] = bundle.num_layers();
    m["num_heads"] = bundle.num_heads;
    m["seq_len"] = bundle.seq_len;
    m["patch_count"] = bundle.patch_count();
    m["embed_dim"] = bundle.embed_dim();
    m["visual_indices"] = bundle.visual_indices;
    m["eos_index"] = bundle.eos_index ? json(*bundle.eos_index) : json(nullptr);

    const std::string emb = stem + ".emb.sapt";
    write_tensor(bundle.embeddings, dir / emb);
    m["embeddings"] = emb;

    const bool complete = std::all_of(bundle.layers.begin(), bundle.layers.end(),
                                      [](const auto& l) { return l.has_value(); });
    if (options.per_layer_files || !complete) {
        json list = json::array();
        for (std::uint32_t l = 1; l <= bundle.num_layers(); ++l) {
            if (!bundle.layers[l - 1]) {
                list.push_back(nullptr);
                continue;
            }
            char name[32];
            std::snprintf(name, sizeof(name), ".attn.l%02u.sapt", l);
            write_tensor(*bundle.layers[l - 1], dir / (stem + name));
            list.push_back(stem + name);
        }
        m["attention_layers"] = list;
    } else {
        const std::size_t per_layer = static_cast<std::size_t>(bundle.num_heads) * bundle.seq_len * bundle.seq_len;
        std::vector<float> all;
        all.reserve(per_layer * bundle.num_layers());
        for (const auto& l : bundle.layers) all.insert(all.end(), l->data().begin(), l->data().end());
        const std::string name = stem + ".attn.sapt";
        write_tensor(Tensor({bundle.num_layers(), bundle.num_heads, bundle.seq_len, bundle.seq_len}, std::move(all)),
                     dir / name);
        m["attention"] = name;
    }
    const fs::path manifest = dir / (stem + ".json");
    write_json_file(manifest, m);
    return manifest;
}

// ---------------------------------------------------------------------------
// Queries

QueryBundle read_query(const fs::path& manifest_path) {
    const json m = parse_json_file(manifest_path);
    if (!m.is_object()) fail(ErrorCode::kValidation, manifest_path.string() + ": manifest must be a JSON object");
    QueryBundle q;
    q.query_id = field_as<std::string>(m, "query_id", manifest_path);
    q.embeddings = read_tensor(resolve(manifest_path.parent_path(), field_as<std::string>(m, "embeddings", manifest_path)));
    if (m.contains("text") && !m["text"].is_null()) q.text = m["text"].get<std::string>();
    require(!q.query_id.empty(), ErrorCode::kValidation, manifest_path.string() + ": empty query_id");
    require(q.embeddings.rank() == 2 && q.embeddings.rows() >= 1 && q.embeddings.cols() >= 1,
            ErrorCode::kValidation, manifest_path.string() + ": query embeddings must be [M, d] with M >= 1");
    return q;
}

fs::path write_query(const QueryBundle& query, const fs::path& dir, const std::string& stem) {
    fs::create_directories(dir);
    json m;
    m["query_id"] = query.query_id;
    m["embeddings"] = stem + ".sapt";
    if (query.text) m["text"] = *query.text;
    write_tensor(query.embeddings, dir / (stem + ".sapt"));
    const fs::path manifest = dir / (stem + ".json");
    write_json_file(manifest, m);
    return manifest;
}

// ---------------------------------------------------------------------------
// Qrels

void Qrels::add(const std::string& query_id, const std::string& doc_id, std::uint32_t relevance) {
    const auto [it, inserted] = entries_.emplace(std::make_pair(query_id, doc_id), relevance);
    if (!inserted) fail(ErrorCode::kValidation, "duplicate qrels entry (" + query_id + ", " + doc_id + ")");
}

std::uint32_t Qrels::relevance(const std::string& query_id, const std::string& doc_id) const {
    auto it = entries_.find({query_id, doc_id});
    return it == entries_.end() ? 0u : it->second;
}

std::vector<std::pair<std::string, std::string>> Qrels::positive_pairs() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [key, rel] : entries_) {
        if (rel > 0) out.push_back(key);
    }
    return out;
}

Qrels parse_qrels(const std::string& text, const std::string& origin) {
    Qrels q;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> parts;
        std::size_t start = 0;
        for (;;) {
            const std::size_t tab = line.find('\t', start);
            parts.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        const std::string where = origin + ":" + std::to_string(lineno);
        if (parts.size() != 3 || parts[0].empty() || parts[1].empty() || parts[2].empty()) {
            fail(ErrorCode::kFormat, where + ": malformed qrels line (expected query_id<TAB>doc_id<TAB>relevance)");
        }
        const std::string& rel = parts[2];
        if (rel[0] == '-') fail(ErrorCode::kFormat, where + ": negative relevance");
        if (!std::all_of(rel.begin(), rel.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            fail(ErrorCode::kFormat, where + ": relevance must be a non-negative integer");
        }
        unsigned long v = 0;
        try {
            v = std::stoul(rel);
        } catch (const std::exception&) {
            fail(ErrorCode::kFormat, where + ": relevance out of range");
        }
        if (v > std::numeric_limits<std::uint32_t>::max()) fail(ErrorCode::kFormat, where + ": relevance out of range");
        try {
            q.add(parts[0], parts[1], static_cast<std::uint32_t>(v));
        } catch (const Error& e) {
            fail(ErrorCode::kFormat, where + ": " + e.what());
        }
    }
    return q;
}

Qrels read_qrels(const fs::path& path) { return parse_qrels(read_file_text(path), path.string()); }

void write_qrels(const Qrels& qrels, const fs::path& path) {
    std::string text;
    for (const auto& [key, rel] : qrels.entries()) {
        text += key.first + "\t" + key.second + "\t" + std::to_string(rel) + "\n";
    }
    write_file_bytes(path, text.data(), text.size());
}

// ---------------------------------------------------------------------------
// Corpus

CorpusManifest read_corpus_manifest(const fs::path& path) {
    const json m = parse_json_file(path);
    if (!m.is_object()) fail(ErrorCode::kValidation, path.string() + ": manifest must be a JSON object");
    CorpusManifest c;
    c.corpus_id = field_as<std::string>(m, "corpus_id", path);
    c.embed_dim = field_as<std::size_t>(m, "embed_dim", path);
    for (const auto& p : field_as<std::vector<std::string>>(m, "documents", path)) c.documents.emplace_back(p);
    for (const auto& p : field_as<std::vector<std::string>>(m, "queries", path)) c.queries.emplace_back(p);
    c.qrels = field_as<std::string>(m, "qrels", path);
    return c;
}

void write_corpus_manifest(const CorpusManifest& manifest, const fs::path& path) {
    json m;
    m["corpus_id"] = manifest.corpus_id;
    m["embed_dim"] = manifest.embed_dim;
    json docs = json::array();
    for (const auto& p : manifest.documents) docs.push_back(p.generic_string());
    json queries = json::array();
    for (const auto& p : manifest.queries) queries.push_back(p.generic_string());
    m["documents"] = docs;
    m["queries"] = queries;
    m["qrels"] = manifest.qrels.generic_string();
    write_json_file(path, m);
}

const DocumentBundle* Corpus::find_document(const std::string& doc_id) const {
    for (const auto& d : documents) {
        if (d.doc_id == doc_id) return &d;
    }
    return nullptr;
}

const QueryBundle* Corpus::find_query(const std::string& query_id) const {
    for (const auto& q : queries) {
        if (q.query_id == query_id) return &q;
    }
    return nullptr;
}

void Corpus::validate() const {
    std::set<std::string> doc_ids;
    std::set<std::string> query_ids;
    for (const auto& d : documents) {
        require(doc_ids.insert(d.doc_id).second, ErrorCode::kValidation, "duplicate doc_id " + d.doc_id);
        require(d.embed_dim() == embed_dim, ErrorCode::kValidation,
                d.doc_id + ": embed_dim " + std::to_string(d.embed_dim()) + " != corpus " + std::to_string(embed_dim));
    }
    for (const auto& q : queries) {
        require(query_ids.insert(q.query_id).second, ErrorCode::kValidation, "duplicate query_id " + q.query_id);
        require(q.embeddings.cols() == embed_dim, ErrorCode::kValidation,
                q.query_id + ": query embed_dim does not match the corpus");
    }
    for (const auto& [key, rel] : qrels.entries()) {
        require(query_ids.count(key.first) > 0, ErrorCode::kValidation, "qrels references unknown query " + key.first);
        require(doc_ids.count(key.second) > 0, ErrorCode::kValidation, "qrels references unknown document " + key.second);
    }
}

Corpus read_corpus(const fs::path& manifest_path, const CorpusLoadOptions& options) {
    const CorpusManifest m = read_corpus_manifest(manifest_path);
    const fs::path base = manifest_path.parent_path();
    Corpus c;
    c.corpus_id = m.corpus_id;
    c.embed_dim = m.embed_dim;
    c.documents.resize(m.documents.size());
    parallel_for(m.documents.size(), options.threads, [&](std::size_t i) {
        c.documents[i] = read_bundle(resolve(base, m.documents[i]), options.row_sum);
    });
    c.queries.reserve(m.queries.size());
    for (const auto& p : m.queries) c.queries.push_back(read_query(resolve(base, p)));
    const fs::path qrels_path = options.qrels_override ? *options.qrels_override : resolve(base, m.qrels);
    if (!fs::exists(qrels_path)) fail(ErrorCode::kIo, "qrels file not found: " + qrels_path.string());
    c.qrels = read_qrels(qrels_path);
    c.validate();
    for (const auto& d : c.documents) {
        double worst = 0.0;
        if (has_unnormalized_rows(d.embeddings, 0.10, &worst)) {
            warn(d.doc_id + ": embedding norms deviate from 1 by up to " + std::to_string(worst) +
                 " (maxsim uses raw dot products)");
        }
    }
    return c;
}

fs::path write_corpus(const Corpus& corpus, const fs::path& dir, BundleWriteOptions options) {
    fs::create_directories(dir);
    CorpusManifest m;
    m.corpus_id = corpus.corpus_id;
    m.embed_dim = corpus.embed_dim;
    char stem[32];
    for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
        std::snprintf(stem, sizeof(stem), "doc_%05zu", i);
        write_bundle(corpus.documents[i], dir / "docs", stem, options);
        m.documents.push_back(fs::path("docs") / (std::string(stem) + ".json"));
    }
    for (std::size_t i = 0; i < corpus.queries.size(); ++i) {
        std::snprintf(stem, sizeof(stem), "query_%05zu", i);
        write_query(corpus.queries[i], dir / "queries", stem);
        m.queries.push_back(fs::path("queries") / (std::string(stem) + ".json"));
    }
    m.qrels = "qrels.tsv";
    write_qrels(corpus.qrels, dir / "qrels.tsv");
    const fs::path manifest = dir / "corpus.json";
    write_corpus_manifest(m, manifest);
    return manifest;
}

}  // namespace sap
