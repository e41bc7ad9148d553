#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dprf {

// Query/document embeddings live in one unitless inner-product space.
using EmbeddingVector = std::vector<double>;

struct ScoredHit {
    std::string doc_id;
    double score = 0.0;
    int rank = 0;
};

struct IndexError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Exact inner-product index over a frozen document embedding matrix.
//
// Rows are stored as IEEE-754 float32 (the persisted precision); scores are
// accumulated in double so ranking and tie-breaking are deterministic.
// Immutable after build: any number of concurrent readers is fine.
class FlatIndex {
public:
    FlatIndex() = default;

    // Builds from (doc_id, embedding) pairs, preserving input order.
    // Rejects empty input, dimension mismatches and duplicate ids.
    static FlatIndex build(const std::vector<std::pair<std::string, EmbeddingVector>>& embeddings);

    // Top-k by inner product, deterministic ordering: score descending,
    // then doc_id ascending. Returns min(top_k, size()) hits.
    std::vector<ScoredHit> search(std::span<const double> query, std::size_t top_k) const;

    std::size_t size() const { return doc_ids_.size(); }
    std::size_t dim() const { return dim_; }
    const std::vector<std::string>& doc_ids() const { return doc_ids_; }
    const std::vector<float>& matrix() const { return matrix_; }

    bool contains(const std::string& doc_id) const;
    // Row lookup by id, widened to double. Throws if the id is unknown.
    EmbeddingVector embedding(const std::string& doc_id) const;

    // Bit-exact persistence:
    //   magic "DPRFIDX1" | dim u64le | count u64le | float32le row-major
    //   matrix | per id: u32le byte length + UTF-8 bytes | crc32 (zlib) of
    //   all preceding bytes, u32le.
    void save(const std::string& path) const;
    static FlatIndex load(const std::string& path);

private:
    std::size_t row_of(const std::string& doc_id) const;

    std::size_t dim_ = 0;
    std::vector<std::string> doc_ids_;
    std::vector<float> matrix_;  // row-major, size() * dim_
    // Sorted (id, row) pairs for O(log n) lookup without an unordered map.
    std::vector<std::pair<std::string, std::size_t>> id_lookup_;
};

}  // namespace dprf
