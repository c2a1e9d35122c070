#include <cstring>
#include <fstream>

#include <json.hpp>

#include "helpers.hpp"
#include "sap/synth.hpp"

using namespace sap;
using sap::test::TempDir;
using sap::test::error_code_of;
using nlohmann::json;

namespace {

std::vector<std::uint8_t> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

json load_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

void save_json(const fs::path& p, const json& j) {
    std::ofstream out(p, std::ios::trunc);
    out << j.dump(2);
}

const fs::path kData = SAP_TEST_DATA_DIR;

}  // namespace

TEST_SUITE("tensor_store") {

TEST_CASE("golden fixtures match the encoder byte for byte") {
    CHECK(encode_tensor(Tensor({2, 2}, {1, 0, 0, 1})) == slurp(kData / "identity_2x2.sapt"));
    CHECK(encode_tensor(Tensor({0}, {})) == slurp(kData / "empty.sapt"));
    const Tensor mixed({2, 3}, {-1.5f, 0.25f, 3.0e-8f, 65504.0f, -0.0f, 1.0f / 3});
    CHECK(encode_tensor(mixed) == slurp(kData / "mixed_2x3.sapt"));
    CHECK(bitwise_equal(read_tensor(kData / "mixed_2x3.sapt"), mixed));
}

TEST_CASE("golden prefix is little-endian magic, version and header length") {
    const auto bytes = slurp(kData / "identity_2x2.sapt");
    REQUIRE(bytes.size() == 61);
    CHECK(std::memcmp(bytes.data(), "SAPT", 4) == 0);
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
    CHECK(bytes[8] == 29);
    const std::string header(bytes.begin() + 16, bytes.begin() + 16 + 29);
    CHECK(header == R"({"dtype":"f32","shape":[2,2]})");
    // 1.0f = 0x3f800000 stored little-endian.
    CHECK(bytes[45] == 0x00);
    CHECK(bytes[47] == 0x80);
    CHECK(bytes[48] == 0x3f);
}

TEST_CASE("empty tensor round-trips with an empty payload") {
    TempDir dir;
    const Tensor t({0}, {});
    write_tensor(t, dir / "e.sapt");
    const auto bytes = slurp(dir / "e.sapt");
    const std::string header = R"({"dtype":"f32","shape":[0]})";
    CHECK(bytes.size() == kTensorPrefixBytes + header.size());
    const Tensor back = read_tensor(dir / "e.sapt");
    CHECK(back.shape() == std::vector<std::size_t>{0});
    CHECK(back.size() == 0);
    CHECK(bitwise_equal(back, t));
}

TEST_CASE("2x2 identity round-trips bit-identically") {
    TempDir dir;
    const Tensor t({2, 2}, {1, 0, 0, 1});
    write_tensor(t, dir / "i.sapt");
    CHECK(bitwise_equal(read_tensor(dir / "i.sapt"), t));
}

TEST_CASE("1000 random tensors round-trip bitwise") {
    TempDir dir;
    Rng rng = Rng::stream(2024, "roundtrip");
    for (int i = 0; i < 1000; ++i) {
        const std::size_t rank = 1 + rng.uniform_below(4);
        std::vector<std::size_t> shape(rank);
        for (auto& s : shape) s = rng.uniform_below(6);
        std::vector<float> data(shape_product(shape));
        for (auto& v : data) {
            // Mix ordinary values with awkward finite bit patterns.
            switch (rng.uniform_below(4)) {
                case 0: v = static_cast<float>(rng.normal() * 1e3); break;
                case 1: v = std::ldexp(static_cast<float>(rng.uniform01()), -140); break;  // subnormal range
                case 2: v = -0.0f; break;
                default: v = static_cast<float>(rng.uniform(-1.0, 1.0)); break;
            }
        }
        const Tensor t(shape, data);
        const fs::path p = dir / ("t" + std::to_string(i % 7) + ".sapt");
        write_tensor(t, p);
        const Tensor back = read_tensor(p);
        REQUIRE(back.shape() == t.shape());
        REQUIRE(bitwise_equal(back, t));
    }
}

TEST_CASE("decoder rejects malformed files") {
    auto good = encode_tensor(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));

    SUBCASE("bad magic") {
        auto b = good;
        std::memcpy(b.data(), "XXXX", 4);
        CHECK(error_code_of([&] { decode_tensor(b); }) == ErrorCode::kFormat);
    }
    SUBCASE("payload shorter than the header's shape") {
        auto b = good;
        b.resize(b.size() - 4);  // 5 floats for shape [2,3]
        CHECK(error_code_of([&] { decode_tensor(b); }) == ErrorCode::kFormat);
    }
    SUBCASE("trailing bytes") {
        auto b = good;
        b.push_back(0);
        CHECK(error_code_of([&] { decode_tensor(b); }) == ErrorCode::kFormat);
    }
    SUBCASE("unsupported version") {
        auto b = good;
        b[4] = 2;
        CHECK(error_code_of([&] { decode_tensor(b); }) == ErrorCode::kFormat);
    }
    SUBCASE("truncated prefix") {
        std::vector<std::uint8_t> b(good.begin(), good.begin() + 10);
        CHECK(error_code_of([&] { decode_tensor(b); }) == ErrorCode::kFormat);
    }
    SUBCASE("header length beyond the file") {
        auto b = good;
        b[8] = 0xff;
        CHECK(error_code_of([&] { decode_tensor(b); }) == ErrorCode::kFormat);
    }
    SUBCASE("unsupported dtype") {
        const std::string h = R"({"dtype":"f16","shape":[1]})";
        std::vector<std::uint8_t> b = {'S', 'A', 'P', 'T', 1, 0, 0, 0, static_cast<std::uint8_t>(h.size()), 0, 0, 0, 0, 0, 0, 0};
        b.insert(b.end(), h.begin(), h.end());
        b.insert(b.end(), {0, 0, 0, 0});
        CHECK(error_code_of([&] { decode_tensor(b); }) == ErrorCode::kFormat);
    }
    SUBCASE("non-finite payload") {
        auto b = encode_tensor(Tensor({1}, {0.0f}));
        const float nan = std::numeric_limits<float>::quiet_NaN();
        std::memcpy(b.data() + b.size() - 4, &nan, 4);
        CHECK(error_code_of([&] { decode_tensor(b); }) == ErrorCode::kFormat);
    }
    SUBCASE("missing file is an I/O error") {
        CHECK(error_code_of([&] { read_tensor("/nonexistent/dir/x.sapt"); }) == ErrorCode::kIo);
    }
}

TEST_CASE("bundle round-trip in both attention layouts") {
    TempDir dir;
    const auto b = test::random_bundle("doc-a", 6, 4, 3, 2, 1);
    for (bool per_layer : {false, true}) {
        const auto manifest = write_bundle(b, dir.path(), per_layer ? "pl" : "one", {per_layer});
        const auto j = load_json(manifest);
        CHECK(j.contains(per_layer ? "attention_layers" : "attention"));
        const auto back = read_bundle(manifest);
        CHECK(back.doc_id == "doc-a");
        CHECK(back.num_layers() == 3);
        CHECK(back.visual_indices == b.visual_indices);
        CHECK(back.eos_index == b.eos_index);
        CHECK(bitwise_equal(back.embeddings, b.embeddings));
        for (std::uint32_t l = 1; l <= 3; ++l) CHECK(bitwise_equal(*back.layers[l - 1], *b.layers[l - 1]));
    }
}

TEST_CASE("bundles may omit layers; reading a missing layer errors") {
    TempDir dir;
    auto b = test::random_bundle("partial", 5, 3, 18, 2, 3);
    for (std::uint32_t l = 1; l <= 18; ++l) {
        if (l < 7 || (l > 10 && l != 18)) b.layers[l - 1].reset();
    }
    const auto manifest = write_bundle(b, dir.path(), "partial");
    const auto j = load_json(manifest);
    REQUIRE(j["attention_layers"].size() == 18);
    CHECK(j["attention_layers"][0].is_null());
    CHECK(j["attention_layers"][6].is_string());
    const auto back = read_bundle(manifest);
    CHECK_FALSE(back.has_layer(1));
    CHECK(back.has_layer(7));
    CHECK(back.has_layer(18));
    CHECK(back.attention(8, 1).size() == 7u * 7u);
    CHECK(error_code_of([&] { (void)back.attention(3, 0); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("bundle without an EOS token loads with eos_index null") {
    TempDir dir;
    auto b = test::random_bundle("no-eos", 4, 2, 2, 1, 5);
    b.eos_index.reset();
    const auto back = read_bundle(write_bundle(b, dir.path(), "no-eos"));
    CHECK_FALSE(back.eos_index.has_value());
}

TEST_CASE("eos_index inside visual_indices is rejected") {
    TempDir dir;
    const auto manifest = write_bundle(test::random_bundle("d", 4, 2, 2, 1, 5), dir.path(), "d");
    auto j = load_json(manifest);
    j["eos_index"] = 2;
    save_json(manifest, j);
    CHECK(error_code_of([&] { read_bundle(manifest); }) == ErrorCode::kValidation);
}

TEST_CASE("attention rows summing to 0.9 fail strict validation and only warn otherwise") {
    TempDir dir;
    auto b = test::random_bundle("scaled", 4, 2, 2, 2, 9);
    for (auto& v : b.layers[1]->data()) v *= 0.9f;
    const auto manifest = write_bundle(b, dir.path(), "scaled");
    CHECK(error_code_of([&] { read_bundle(manifest, RowSumPolicy::kStrict); }) == ErrorCode::kValidation);
    const bool was = set_warnings_enabled(false);
    CHECK_NOTHROW(read_bundle(manifest, RowSumPolicy::kWarn));
    set_warnings_enabled(was);
}

TEST_CASE("deleting any single manifest field is rejected") {
    TempDir dir;
    for (bool per_layer : {false, true}) {
        const auto manifest =
            write_bundle(test::random_bundle("fields", 4, 2, 2, 1, 11), dir.path(), "fields", {per_layer});
        const json original = load_json(manifest);
        for (const auto& item : original.items()) {
            json broken = original;
            broken.erase(item.key());
            save_json(manifest, broken);
            const ErrorCode code = error_code_of([&] { read_bundle(manifest); });
            CAPTURE(item.key());
            CHECK((code == ErrorCode::kValidation || code == ErrorCode::kFormat));
        }
        save_json(manifest, original);
        CHECK_NOTHROW(read_bundle(manifest));
    }
}

TEST_CASE("manifests with inconsistent sizes are rejected") {
    TempDir dir;
    const auto manifest = write_bundle(test::random_bundle("sizes", 4, 2, 2, 1, 12), dir.path(), "sizes");
    const json original = load_json(manifest);
    for (const char* key : {"num_layers", "num_heads", "seq_len", "patch_count", "embed_dim"}) {
        json broken = original;
        broken[key] = broken[key].get<int>() + 1;
        save_json(manifest, broken);
        CAPTURE(key);
        CHECK(error_code_of([&] { read_bundle(manifest); }) == ErrorCode::kValidation);
    }
    json dup = original;
    dup["visual_indices"][1] = dup["visual_indices"][0];
    save_json(manifest, dup);
    CHECK(error_code_of([&] { read_bundle(manifest); }) == ErrorCode::kValidation);
    json both = original;
    both["attention_layers"] = json::array({nullptr, nullptr});
    save_json(manifest, both);
    CHECK(error_code_of([&] { read_bundle(manifest); }) == ErrorCode::kValidation);
}

TEST_CASE("qrels parsing") {
    SUBCASE("single line") {
        const Qrels q = parse_qrels("q1\td1\t1\n");
        CHECK(q.size() == 1);
        CHECK(q.relevance("q1", "d1") == 1);
        CHECK(q.relevance("q1", "d2") == 0);
    }
    SUBCASE("duplicate pair") {
        CHECK(error_code_of([] { parse_qrels("q1\td1\t1\nq1\td1\t2\n"); }) == ErrorCode::kFormat);
    }
    SUBCASE("zero relevance lines are retained but not positive") {
        const Qrels q = parse_qrels("q1\td1\t0\nq1\td2\t2\n\nq2\td1\t0\n");
        CHECK(q.size() == 3);
        CHECK(q.entries().count({"q2", "d1"}) == 1);
        CHECK(q.positive_pairs() == std::vector<std::pair<std::string, std::string>>{{"q1", "d2"}});
    }
    SUBCASE("malformed lines") {
        CHECK(error_code_of([] { parse_qrels("q1 d1 1\n"); }) == ErrorCode::kFormat);
        CHECK(error_code_of([] { parse_qrels("q1\td1\t-1\n"); }) == ErrorCode::kFormat);
        CHECK(error_code_of([] { parse_qrels("q1\td1\tx\n"); }) == ErrorCode::kFormat);
    }
    SUBCASE("write then read") {
        TempDir dir;
        const Qrels q = parse_qrels("q2\td9\t3\nq1\td1\t1\n");
        write_qrels(q, dir / "q.tsv");
        CHECK(read_qrels(dir / "q.tsv").entries() == q.entries());
    }
}

TEST_CASE("synthetic corpus loads through the manifest and validates") {
    TempDir dir;
    synth::SynthConfig cfg;
    cfg.num_docs = 6;
    cfg.num_queries = 3;
    const auto s = synth::generate(cfg);
    const auto manifest = synth::write_synth_corpus(s, dir.path());
    const Corpus c = read_corpus(manifest);
    CHECK(c.documents.size() == 6);
    CHECK(c.queries.size() == 3);
    CHECK(c.qrels.size() == 3);
    CHECK(c.corpus_id == s.corpus.corpus_id);
    for (std::size_t i = 0; i < c.documents.size(); ++i) {
        CHECK(bitwise_equal(c.documents[i].embeddings, s.corpus.documents[i].embeddings));
    }
}

TEST_CASE("qrels referencing unknown ids are rejected by the corpus") {
    TempDir dir;
    synth::SynthConfig cfg;
    cfg.num_docs = 3;
    cfg.num_queries = 2;
    const auto manifest = synth::write_synth_corpus(synth::generate(cfg), dir.path());
    {
        std::ofstream out(dir / "bad.tsv");
        out << "q00000\tnot-a-doc\t1\n";
    }
    CorpusLoadOptions opts;
    opts.qrels_override = dir / "bad.tsv";
    CHECK(error_code_of([&] { read_corpus(manifest, opts); }) == ErrorCode::kValidation);
}

}  // TEST_SUITE
