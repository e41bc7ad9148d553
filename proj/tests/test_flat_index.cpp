#include "doctest.h"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <numeric>

#include "dprf/flat_index.hpp"
#include "dprf/rng.hpp"

using namespace dprf;

namespace {

std::vector<std::pair<std::string, EmbeddingVector>> random_embeddings(std::size_t count,
                                                                       std::size_t dim, Rng& rng) {
    std::vector<std::pair<std::string, EmbeddingVector>> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "doc%05zu", i);
        EmbeddingVector v(dim);
        // float-representable values keep the storage round trip bitwise
        for (auto& x : v) x = static_cast<double>(static_cast<float>(rng.uniform() * 2.0 - 1.0));
        out.emplace_back(id, std::move(v));
    }
    return out;
}

// Reference ranking: full stable sort of all double-precision dot products
// with the documented (score desc, id asc) tie-break.
std::vector<std::string> brute_force_ids(
    const std::vector<std::pair<std::string, EmbeddingVector>>& docs,
    const EmbeddingVector& query, std::size_t k) {
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& [id, vec] : docs) {
        double acc = 0.0;
        for (std::size_t j = 0; j < vec.size(); ++j)
            acc += static_cast<double>(static_cast<float>(vec[j])) * query[j];
        scored.emplace_back(acc, id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) ids.push_back(scored[i].second);
    return ids;
}

}  // namespace

TEST_CASE("build basics") {
    FlatIndex idx = FlatIndex::build({{"d1", {1.0, 0.0}}, {"d2", {0.0, 1.0}}});
    CHECK(idx.dim() == 2);
    CHECK(idx.size() == 2);
    CHECK(idx.doc_ids()[0] == "d1");

    CHECK_THROWS_AS(FlatIndex::build({{"d1", {1.0, 0.0}}, {"d1", {0.0, 1.0}}}), IndexError);
    CHECK_THROWS_AS(FlatIndex::build({{"d1", {1.0, 0.0}}, {"d2", {0.0}}}), IndexError);
    CHECK_THROWS_AS(FlatIndex::build({}), IndexError);
    CHECK_THROWS_AS(FlatIndex::build({{"d1", {1.0, std::nan("")}}}), IndexError);
}

TEST_CASE("build preserves rows bitwise") {
    Rng rng(123);
    const auto docs = random_embeddings(100, 8, rng);
    const FlatIndex idx = FlatIndex::build(docs);
    for (std::size_t i = 0; i < docs.size(); ++i) {
        for (std::size_t j = 0; j < 8; ++j) {
            const float expected = static_cast<float>(docs[i].second[j]);
            CHECK(std::memcmp(&idx.matrix()[i * 8 + j], &expected, sizeof(float)) == 0);
        }
        CHECK(idx.embedding(docs[i].first) == docs[i].second);
    }
}

TEST_CASE("search basics and tie-break") {
    const FlatIndex idx = FlatIndex::build({{"d1", {1.0, 0.0}}, {"d2", {0.0, 1.0}}});
    const EmbeddingVector q1{1.0, 0.0};
    auto hits = idx.search(q1, 1);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].doc_id == "d1");
    CHECK(hits[0].score == doctest::Approx(1.0));
    CHECK(hits[0].rank == 1);

    // equal scores break ties by ascending doc id
    const EmbeddingVector q2{0.7071, 0.7071};
    hits = idx.search(q2, 2);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].doc_id == "d1");
    CHECK(hits[1].doc_id == "d2");
    CHECK(hits[0].score == doctest::Approx(hits[1].score));

    CHECK_THROWS_AS(idx.search(EmbeddingVector{1.0}, 1), IndexError);
    CHECK_THROWS_AS(idx.search(q1, 0), IndexError);

    // top_k above the doc count returns everything
    CHECK(idx.search(q1, 99).size() == 2);
}

TEST_CASE("search equals brute force on random instances") {
    Rng rng(42);
    for (int trial = 0; trial < 120; ++trial) {
        const std::size_t dim = 2 + static_cast<std::size_t>(rng.below(15));
        const std::size_t count = 5 + static_cast<std::size_t>(rng.below(120));
        const auto docs = random_embeddings(count, dim, rng);
        const FlatIndex idx = FlatIndex::build(docs);
        EmbeddingVector q(dim);
        for (auto& x : q) x = rng.uniform() * 2.0 - 1.0;
        const std::size_t k = 1 + static_cast<std::size_t>(rng.below(20));

        const auto expected = brute_force_ids(docs, q, k);
        const auto hits = idx.search(q, k);
        REQUIRE(hits.size() == expected.size());
        for (std::size_t i = 0; i < hits.size(); ++i) {
            CHECK(hits[i].doc_id == expected[i]);
            CHECK(hits[i].rank == static_cast<int>(i + 1));
            if (i > 0) CHECK(hits[i - 1].score >= hits[i].score);
        }
    }
}

TEST_CASE("duplicate scores across many docs keep id order") {
    std::vector<std::pair<std::string, EmbeddingVector>> docs;
    for (int i = 9; i >= 0; --i)
        docs.emplace_back("d" + std::to_string(i), EmbeddingVector{1.0});
    const FlatIndex idx = FlatIndex::build(docs);
    const auto hits = idx.search(EmbeddingVector{1.0}, 10);
    for (std::size_t i = 0; i < hits.size(); ++i)
        CHECK(hits[i].doc_id == "d" + std::to_string(i));
}

TEST_CASE("persistence round trip is bitwise") {
    Rng rng(7);
    const auto docs = random_embeddings(1000, 16, rng);
    const FlatIndex idx = FlatIndex::build(docs);
    const auto path = std::filesystem::temp_directory_path() / "dprf_idx_test.bin";
    idx.save(path.string());
    const FlatIndex loaded = FlatIndex::load(path.string());

    CHECK(loaded.dim() == idx.dim());
    CHECK(loaded.doc_ids() == idx.doc_ids());
    REQUIRE(loaded.matrix().size() == idx.matrix().size());
    CHECK(std::memcmp(loaded.matrix().data(), idx.matrix().data(),
                      idx.matrix().size() * sizeof(float)) == 0);

    // saving the loaded index reproduces the same bytes
    const auto path2 = std::filesystem::temp_directory_path() / "dprf_idx_test2.bin";
    loaded.save(path2.string());
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(a)), {});
    const std::string bytes_b((std::istreambuf_iterator<char>(b)), {});
    CHECK(bytes_a == bytes_b);
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("corrupt or truncated files are rejected") {
    const FlatIndex idx = FlatIndex::build({{"d1", {1.0, 0.0}}, {"d2", {0.0, 1.0}}});
    const auto path = std::filesystem::temp_directory_path() / "dprf_idx_corrupt.bin";
    idx.save(path.string());

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();

    SUBCASE("truncated") {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 7));
        out.close();
        CHECK_THROWS_AS(FlatIndex::load(path.string()), IndexError);
    }
    SUBCASE("bit flip breaks the checksum") {
        bytes[20] = static_cast<char>(bytes[20] ^ 0x40);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        CHECK_THROWS_AS(FlatIndex::load(path.string()), IndexError);
    }
    SUBCASE("wrong magic") {
        bytes[0] = 'X';
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        CHECK_THROWS_AS(FlatIndex::load(path.string()), IndexError);
    }
    std::filesystem::remove(path);
}

TEST_CASE("concurrent searches match serial results") {
    Rng rng(99);
    const auto docs = random_embeddings(300, 12, rng);
    const FlatIndex idx = FlatIndex::build(docs);

    std::vector<EmbeddingVector> queries;
    for (int i = 0; i < 32; ++i) {
        EmbeddingVector q(12);
        for (auto& x : q) x = rng.uniform() * 2.0 - 1.0;
        queries.push_back(std::move(q));
    }
    std::vector<std::vector<ScoredHit>> serial;
    for (const auto& q : queries) serial.push_back(idx.search(q, 10));

    std::vector<std::future<std::vector<ScoredHit>>> futures;
    for (const auto& q : queries)
        futures.push_back(std::async(std::launch::async, [&idx, &q] { return idx.search(q, 10); }));
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const auto hits = futures[i].get();
        REQUIRE(hits.size() == serial[i].size());
        for (std::size_t j = 0; j < hits.size(); ++j) {
            CHECK(hits[j].doc_id == serial[i][j].doc_id);
            CHECK(hits[j].score == serial[i][j].score);
        }
    }
}
